"""First-order weak convergence of the splitting scheme, measured cleanly.

The diffusivity error of the splitting integrator decays like O(dt).
Measuring that by Monte Carlo is subtle for chaotic flows: common-random-
number coupling between the coarse and reference runs cancels most of the
statistical noise, but chaos separates the coupled paths exponentially, so
past the Lyapunov horizon the error estimate floors at ~2 D11/sqrt(N) --
resolving a small-dt error then needs millions of particles.

The steady shear flow v = (sin(2 pi q), 0) sidesteps this: its q-component
is integrated exactly (pure Brownian motion), so coupled runs never
decorrelate and the dt-error comes out with deterministic quality at modest
ensemble size.  The fitted slope lands at the scheme's first-order rate.

(The kernel laboratory demonstrates the same O(dt) rate for the chaotic
cellular flow without any sampling noise at all; see kernel_spectra.py.)
"""

import numpy as np

from tracerdiff import SeparableFlow2D, convergence_study

shear = SeparableFlow2D(
    "shear", lambda q: -np.sin(2 * np.pi * np.asarray(q, float)),
    lambda p: np.zeros_like(np.asarray(p, float)), period=(1.0, 1.0))

table = convergence_study(shear, "symplectic",
                          dt_list=[0.1, 0.05, 0.025, 0.0125], dt_ref=0.003125,
                          sigma=float(np.sqrt(0.1)), t_final=100.0,
                          n_particles=10_000, seed=3, couple=True,
                          init_box=((-0.5, 0.5), (-0.5, 0.5)))

print(f"{'dt':>8}  {'D11':>9}  {'|error|':>9}")
for dt, d11, err in table.rows:
    print(f"{dt:8.4f}  {d11:9.5f}  {err:9.2e}")
print(f"\nreference D11 at dt = {table.ref_dt}: {table.ref_d11:.5f}")
print(f"fitted log-log slope: {table.slope:.2f}  (first-order scheme: ~1)")
