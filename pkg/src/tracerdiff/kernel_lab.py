"""Discretized transition kernels of the 2D splitting scheme on the torus.

One step of the scheme with additive Gaussian noise is a Markov kernel: a
Gaussian of standard deviation sigma*sqrt(dt) per axis centered at the
deterministic one-step image, wrapped onto the torus by summing over lattice
translates.  Discretizing source and target onto cell centers (midpoint rule,
rows renormalized) gives a dense row-stochastic matrix whose spectral
structure can be inspected directly:

* its stationary density is uniform up to quadrature error, because the
  deterministic part of the splitting preserves volume exactly;
* iterates of any observable decay to the flat average at a geometric rate
  rho = -log |lambda_2|;
* the discrete cell problem (K - I) fhat = dt * f has a unique zero-mean
  solution which converges, at first order in dt, to the corrector chi_1 of
  the continuous generator equation D0 Lap(chi) + v . grad(chi) = f solved by
  :mod:`tracerdiff.eulerian` (with f = -v_1 this is the standard cell
  problem).

Grids are capped around m = 128 (dense (m^2)^2 storage); the kernel is
globally supported, so sparsity is not an option.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigs, gmres
from scipy.special import erfc

from .eulerian import CorrectorField, save_grid_csv
from .flows import SeparableFlow2D, as_separable
from .integrators import IntegratorConfig, deterministic_map

__all__ = [
    "DiscreteCellSolution", "KernelMatrix", "build_kernel", "decay_rate",
    "discrete_cell_solve", "invariant_density", "corrector_rate_check",
    "mode_decay_norms", "save_density_csv", "second_eigenvalue",
]


@dataclass
class KernelMatrix:
    """Dense one-step transition matrix on an m x m cell-center grid.

    ``P[r, c]`` is the probability of moving from cell r to cell c in one
    step; rows sum to one exactly after renormalization.  Flat indices are
    row-major over (p index, q index).
    """

    m: int
    period: tuple
    dt: float
    sigma: float
    P: np.ndarray
    image_cutoff: int

    def centers(self) -> tuple:
        hp = self.period[0] / self.m
        hq = self.period[1] / self.m
        return ((np.arange(self.m) + 0.5) * hp, (np.arange(self.m) + 0.5) * hq)

    @property
    def size(self) -> int:
        return self.m * self.m


def _wrapped_gaussian_weights(delta: np.ndarray, s: float, period: float,
                              cutoff: int, cell: float) -> np.ndarray:
    """Cell mass of a wrapped Gaussian: sum over lattice images times width."""
    # reduce to the nearest image first so `cutoff` images suffice
    delta = delta - period * np.rint(delta / period)
    acc = np.zeros_like(delta)
    for j in range(-cutoff, cutoff + 1):
        d = delta + j * period
        acc += np.exp(-0.5 * (d / s) ** 2)
    return acc * (cell / (s * np.sqrt(2.0 * np.pi)))


def build_kernel(flow: SeparableFlow2D, cfg: IntegratorConfig, m: int,
                 image_cutoff: Optional[int] = None) -> KernelMatrix:
    """Materialize the one-step kernel of the symplectic scheme.

    Entry (source, target) is the wrapped-Gaussian transition density
    centered at the deterministic image of the source cell center, evaluated
    at the target cell center, times the cell area, then row-normalized.
    The lattice-image sum is truncated at ``image_cutoff`` translates per
    axis (default: enough to keep the omitted tail mass below 1e-12).
    """
    flow = as_separable(flow)
    if cfg.sigma <= 0:
        raise ValueError("kernel construction requires sigma > 0")
    if m < 2:
        raise ValueError("m must be >= 2")
    s = cfg.sigma * np.sqrt(cfg.dt)
    Lp, Lq = flow.period
    if image_cutoff is None:
        image_cutoff = int(np.ceil(6.0 * s / min(Lp, Lq))) + 1
    if image_cutoff < 1:
        raise ValueError("image_cutoff must be >= 1")
    # Omitted tail mass per row: with nearest-image reduction the covered
    # displacement range is exactly [-(J+1/2) L, (J+1/2) L] per axis.
    tail = sum(erfc((image_cutoff + 0.5) * L / (s * np.sqrt(2.0))) for L in (Lp, Lq))
    if tail > 1e-12:
        raise ValueError(
            f"image_cutoff={image_cutoff} leaves wrapped-Gaussian tail mass "
            f"~{tail:.2e} > 1e-12; increase it")

    cp = (np.arange(m) + 0.5) * (Lp / m)
    cq = (np.arange(m) + 0.5) * (Lq / m)
    src = np.empty((m * m, 2))
    src[:, 0] = np.repeat(cp, m)
    src[:, 1] = np.tile(cq, m)
    img = deterministic_map("symplectic", flow, cfg)(src)

    wp = _wrapped_gaussian_weights(cp[None, :] - img[:, 0:1], s, Lp,
                                   image_cutoff, Lp / m)
    wq = _wrapped_gaussian_weights(cq[None, :] - img[:, 1:2], s, Lq,
                                   image_cutoff, Lq / m)
    P = np.einsum("ri,rj->rij", wp, wq).reshape(m * m, m * m)
    P /= P.sum(axis=1, keepdims=True)
    return KernelMatrix(m, (Lp, Lq), cfg.dt, cfg.sigma, P, image_cutoff)


def invariant_density(K: KernelMatrix, tol: float = 1e-12,
                      maxiter: int = 50_000):
    """Stationary density by power iteration on the adjoint (density
    transport), to a total-variation fixed-point gap <= tol.

    Returns (pi, n_iterations); pi sums to 1.  Hitting the iteration cap
    warns with the achieved gap.
    """
    P = K.P
    pi = np.full(K.size, 1.0 / K.size)
    gap = np.inf
    for it in range(1, maxiter + 1):
        nxt = pi @ P
        nxt /= nxt.sum()
        gap = 0.5 * np.abs(nxt - pi).sum()
        pi = nxt
        if gap <= tol:
            return pi, it
    warnings.warn(f"invariant_density hit the iteration cap ({maxiter}); "
                  f"achieved TV gap {gap:.3e} > tol {tol:g}")
    return pi, maxiter


def second_eigenvalue(K: KernelMatrix, pi: Optional[np.ndarray] = None,
                      k: int = 3, tol: float = 1e-10) -> complex:
    """Largest-modulus eigenvalue of the kernel after deflating lambda = 1.

    Works on B = P - 1 pi^T, whose spectrum is that of P with the unit
    eigenvalue replaced by zero.
    """
    if pi is None:
        pi, _ = invariant_density(K)
    P = K.P
    ones = np.ones(K.size)

    def matvec(v):
        return P @ v - ones * (pi @ v)

    B = LinearOperator((K.size, K.size), matvec=matvec)
    v0 = np.cos(2.0 * np.pi * np.arange(K.size) / K.size) + 0.5
    vals = eigs(B, k=k, which="LM", v0=v0, tol=tol, return_eigenvectors=False)
    return vals[int(np.argmax(np.abs(vals)))]


def decay_rate(K: KernelMatrix, pi: Optional[np.ndarray] = None) -> float:
    """rho = -log |lambda_2|: geometric decay rate of observable averages."""
    lam = second_eigenvalue(K, pi=pi)
    return float(-np.log(np.abs(lam)))


def mode_decay_norms(K: KernelMatrix, phi: np.ndarray, n_iters: int,
                     pi: Optional[np.ndarray] = None) -> np.ndarray:
    """Sup-norm distances ||K^n phi - <phi>_pi||_inf for n = 1..n_iters."""
    if pi is None:
        pi, _ = invariant_density(K)
    v = np.asarray(phi, dtype=np.float64).ravel().copy()
    mean = float(pi @ v)
    out = np.empty(n_iters)
    for n in range(n_iters):
        v = K.P @ v
        out[n] = np.max(np.abs(v - mean))
    return out


def fit_decay_rate(norms: np.ndarray, floor: float = 1e-11) -> float:
    """Geometric rate from a decaying norm sequence (skips the early
    transient and the roundoff floor)."""
    norms = np.asarray(norms)
    valid = np.flatnonzero(norms > max(floor, norms[0] * 1e-13))
    if valid.size < 4:
        raise ValueError("too few usable points to fit a decay rate")
    use = valid[valid >= valid.size // 3]  # drop the early transient
    n = use.astype(float)
    slope = np.polyfit(n, np.log(norms[use]), 1)[0]
    return float(-slope)


@dataclass
class DiscreteCellSolution:
    """Zero-mean solution of (K - I) fhat = dt * f on the cell-center grid."""

    fhat: np.ndarray     # (m, m)
    dt: float
    residual: float      # relative, of the pi-projected system

    def dump_csv(self, path: str):
        """Write the fhat grid as CSV (rows = p axis, columns = q axis)."""
        save_grid_csv(self.fhat, path)


def save_density_csv(K: KernelMatrix, pi: np.ndarray, path: str):
    """Dump a stationary density as an (m, m) CSV grid over cell centers."""
    save_grid_csv(np.asarray(pi).reshape(K.m, K.m), path)


def discrete_cell_solve(K: KernelMatrix, f: np.ndarray, dt: float,
                        tol: float = 1e-11, maxiter: int = 2000) -> DiscreteCellSolution:
    """Solve the singular system (K - I) fhat = dt * f on mean-zero fields.

    ``f`` must have zero grid mean (Fredholm condition); the right-hand side
    is additionally projected against the stationary density so the system is
    exactly solvable, and the constant-mode ambiguity is fixed by the
    zero-grid-mean gauge.
    """
    f = np.asarray(f, dtype=np.float64).ravel()
    if f.size != K.size:
        raise ValueError(f"f has {f.size} entries, kernel grid has {K.size}")
    fmean = float(f.mean())
    if abs(fmean) > 1e-12 * max(1.0, float(np.max(np.abs(f)))):
        raise ValueError(f"f must have zero grid mean; measured mean {fmean:.3e}")
    if not np.any(f):
        return DiscreteCellSolution(np.zeros((K.m, K.m)), float(dt), 0.0)
    pi, _ = invariant_density(K)
    rhs = dt * (f - (pi @ f))
    P = K.P
    nn = K.size

    def matvec(x):
        return P @ x - x + x.mean()

    A = LinearOperator((nn, nn), matvec=matvec)
    x, info = gmres(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter, restart=200)
    resid = float(np.linalg.norm(P @ x - x - rhs) / np.linalg.norm(rhs))
    if resid > 10 * tol:
        warnings.warn(f"discrete cell solve residual {resid:.3e} exceeds "
                      f"10*tol ({10 * tol:g})")
    x = x - x.mean()
    return DiscreteCellSolution(x.reshape(K.m, K.m), float(dt), resid)


def corrector_rate_check(flow: SeparableFlow2D, sigma: float,
                     dt_list: Sequence[float], m: int, oracle: CorrectorField,
                     image_cutoff: Optional[int] = None):
    """Sup-norm error of the discrete cell solution against the continuous
    corrector chi_1, per time step, plus successive error ratios.

    The oracle must be solved at D0 = sigma^2/2 on the flow's period cell.
    With f equal to the scheme's Hamiltonian derivative H_q (minus the
    p-drift), the discrete solution converges to chi_1 at first order, so
    the ratios for a halving dt sequence approach 2.
    """
    flow = as_separable(flow)
    d0 = 0.5 * sigma * sigma
    if abs(oracle.d0 - d0) > 1e-12 * max(d0, 1.0):
        raise ValueError(f"oracle solved at D0={oracle.d0}, kernel needs {d0}")
    if tuple(oracle.grid.period) != tuple(flow.period):
        raise ValueError("oracle grid period does not match the flow")

    chi1 = oracle.sample(m, offset=0.5)[0]
    chi1 = chi1 - chi1.mean()
    _, cq = ((np.arange(m) + 0.5) * (flow.period[0] / m),
             (np.arange(m) + 0.5) * (flow.period[1] / m))
    f_line = flow.f(cq)
    f_grid = np.broadcast_to(f_line[None, :], (m, m)).copy()
    f_grid -= f_grid.mean()

    rows = []
    for dt in sorted(dt_list, reverse=True):
        K = build_kernel(flow, IntegratorConfig(float(dt), float(sigma)), m,
                         image_cutoff=image_cutoff)
        sol = discrete_cell_solve(K, f_grid, float(dt))
        err = float(np.max(np.abs(sol.fhat - chi1)))
        rows.append((float(dt), err))
    ratios = [a / b for (_, a), (_, b) in zip(rows, rows[1:])]
    return rows, ratios
