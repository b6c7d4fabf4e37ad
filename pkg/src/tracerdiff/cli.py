"""Batch experiment driver.

Subcommands are selected with ``--kind``:

* ``simulate`` -- advance an ensemble and write one CSV row per checkpoint;
* ``converge`` -- time-step convergence study with a fine self-computed
  reference (``--dt`` is the reference step, ``--dt-list`` the tested steps);
* ``enhance``  -- D11 versus molecular diffusivity scan over ``--d0-list``;
* ``oracle``   -- Eulerian cell-problem solve for a 2D separable flow;
* ``kernel``   -- transition-kernel diagnostics (stationarity, decay rate).

Options may come from flags or from a ``--config`` file of ``key=value``
lines (same keys as the flags without the leading dashes); flags override
the file.  Every run writes a JSON manifest next to the CSV with the fully
resolved spec, sufficient to reproduce the output byte for byte.

Exit codes: 0 success, 1 numerical failure (non-finite positions), 2 bad
spec/usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import __version__
from .diffusivity import (convergence_study, default_enhancement_horizon,
                          enhancement_scan, estimate_D)
from .ensemble import CheckpointSchedule, run_simulation
from .eulerian import TorusGrid2D, eulerian_diffusivity, solve_cell_problem
from .flows import FLOW_REGISTRY, SeparableFlow2D, make_flow
from .integrators import SCHEMES, IntegratorConfig
from .kernel_lab import build_kernel, invariant_density, second_eigenvalue

KINDS = ("simulate", "converge", "enhance", "oracle", "kernel")


class SpecError(Exception):
    """Invalid or inconsistent experiment specification."""


@dataclass
class ExperimentSpec:
    kind: str = "simulate"
    flow: str = "cellular2d"
    scheme: str = "symplectic"
    dt: float = 0.01
    sigma: Optional[float] = None
    d0: Optional[float] = None
    particles: int = 10_000
    t_final: Optional[float] = None
    seed: int = 0
    checkpoints: int = 32
    out: str = "result.csv"
    workers: int = 0              # 0 = available parallelism
    dt_list: tuple = ()
    d0_list: tuple = ()
    grid: int = 64
    budget_seconds: Optional[float] = None

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def _fmt(x) -> str:
    """CSV cell: floats at 17 significant digits, blanks preserved."""
    if x is None or x == "":
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(rows, path, header, comments=()):
    """Write rows with an exact header and trailing comment lines."""
    try:
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(_fmt(c) for c in row) + "\n")
            for line in comments:
                fh.write(line + "\n")
    except OSError as exc:
        raise SpecError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tracerdiff",
        description="Effective-diffusivity experiments for chaotic flows")
    ap.add_argument("--kind", choices=KINDS)
    ap.add_argument("--flow")
    ap.add_argument("--scheme")
    ap.add_argument("--dt", type=float)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--d0", type=float)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--t-final", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--checkpoints", type=int)
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--dt-list")
    ap.add_argument("--d0-list")
    ap.add_argument("--grid", type=int)
    ap.add_argument("--budget-seconds", type=float)
    ap.add_argument("--config")
    return ap


def _read_config(path) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise SpecError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, val = line.split("=", 1)
                out[key.strip().lstrip("-").replace("-", "_")] = val.strip()
    except OSError as exc:
        raise SpecError(f"cannot read config {path}: {exc}") from exc
    return out


def _parse_float_list(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    items = [s for s in str(text).replace(",", " ").split() if s]
    return tuple(float(s) for s in items)


_CASTS = {
    "dt": float, "sigma": float, "d0": float, "t_final": float,
    "budget_seconds": float, "particles": int, "seed": int,
    "checkpoints": int, "workers": int, "grid": int,
    "dt_list": _parse_float_list, "d0_list": _parse_float_list,
}


def parse_spec(argv) -> ExperimentSpec:
    """Build a validated spec from argv, with --config values as defaults."""
    ns = _build_parser().parse_args(argv)
    values = {}
    if ns.config:
        values.update(_read_config(ns.config))
    for key in vars(ns):
        if key == "config":
            continue
        v = getattr(ns, key)
        if v is not None:
            values[key] = v
    spec = ExperimentSpec()
    for key, val in values.items():
        if not hasattr(spec, key):
            raise SpecError(f"unknown option {key!r}")
        cast = _CASTS.get(key)
        try:
            setattr(spec, key, cast(val) if cast and isinstance(val, str) else
                    (cast(val) if cast and key.endswith("_list") else val))
        except ValueError as exc:
            raise SpecError(f"bad value for {key}: {val!r} ({exc})") from exc
    _validate(spec)
    return spec


def _validate(spec: ExperimentSpec):
    if spec.kind not in KINDS:
        raise SpecError(f"unknown kind {spec.kind!r}; choose from {', '.join(KINDS)}")
    if spec.flow not in FLOW_REGISTRY:
        raise SpecError(f"unknown flow {spec.flow!r}; registry: "
                        f"{', '.join(sorted(FLOW_REGISTRY))}")
    if spec.scheme not in SCHEMES:
        raise SpecError(f"unknown scheme {spec.scheme!r}; schemes: {', '.join(SCHEMES)}")
    if spec.sigma is not None and spec.d0 is not None:
        if abs(spec.sigma ** 2 / 2.0 - spec.d0) > 1e-12 * max(spec.d0, 1.0):
            raise SpecError(
                f"both --sigma and --d0 given and inconsistent: "
                f"sigma^2/2 = {spec.sigma ** 2 / 2.0:g} != d0 = {spec.d0:g}")
    if spec.sigma is None and spec.d0 is not None:
        spec.sigma = float(np.sqrt(2.0 * spec.d0))
    if spec.d0 is None and spec.sigma is not None:
        spec.d0 = 0.5 * spec.sigma ** 2
    if spec.kind in ("simulate", "converge") or (spec.kind == "enhance" and spec.t_final is not None):
        if spec.t_final is not None and spec.dt:
            k = spec.t_final / spec.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise SpecError(
                    f"t_final={spec.t_final:g} is not a multiple of dt={spec.dt:g} "
                    f"(remainder {spec.t_final - round(k) * spec.dt:g})")
    if spec.kind == "simulate":
        if spec.sigma is None:
            raise SpecError("simulate needs --sigma or --d0")
        if spec.t_final is None:
            raise SpecError("simulate needs --t-final")
    if spec.kind == "converge":
        if not spec.dt_list:
            raise SpecError("converge needs --dt-list (tested steps); --dt is the reference step")
        if spec.sigma is None or spec.t_final is None:
            raise SpecError("converge needs --sigma/--d0 and --t-final")
    if spec.kind == "enhance" and not spec.d0_list:
        raise SpecError("enhance needs --d0-list")
    if spec.kind in ("oracle", "kernel") and spec.d0 is None:
        raise SpecError(f"{spec.kind} needs --d0 or --sigma")
    return spec


def spec_to_config_dict(spec: ExperimentSpec) -> dict:
    """Flat key=value view of a spec (round-trips through parse_spec)."""
    out = {}
    for key, val in asdict(spec).items():
        if val is None or val == () or key in ("sigma",):
            continue
        if key.endswith("_list"):
            out[key] = " ".join(f"{x:.17g}" for x in val)
        elif isinstance(val, float):
            out[key] = f"{val:.17g}"
        else:
            out[key] = str(val)
    return out


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _default_box(flow_name):
    period = make_flow(flow_name).period
    return tuple((0.0, L) for L in period)


def _run_simulate(spec: ExperimentSpec):
    cfg = IntegratorConfig(spec.dt, spec.sigma)
    sched = CheckpointSchedule.log_spaced(spec.t_final, spec.dt, spec.checkpoints)
    accs = run_simulation(spec.flow, spec.scheme, cfg, spec.particles,
                          _default_box(spec.flow), spec.seed, sched,
                          workers=spec.resolved_workers())
    dim = accs[0].dim
    rows = []
    for acc in accs:
        e = estimate_D(acc)
        m = e.matrix
        row = [acc.t, m[0, 0],
               m[1, 1] if dim >= 2 else "",
               m[2, 2] if dim >= 3 else "",
               m[0, 1] if dim >= 2 else "",
               m[0, 2] if dim >= 3 else "",
               m[1, 2] if dim >= 3 else "",
               e.stderr[0, 0], acc.count]
        rows.append(row)
    write_csv(rows, spec.out, "t,d11,d22,d33,d12,d13,d23,stderr11,n")
    return len(rows)


def _run_converge(spec: ExperimentSpec):
    table = convergence_study(spec.flow, spec.scheme, spec.dt_list, spec.dt,
                              spec.sigma, spec.t_final, spec.particles,
                              spec.seed, couple=True,
                              workers=spec.resolved_workers())
    rows = [(dt, d11, err) for dt, d11, err in table.rows]
    write_csv(rows, spec.out, "dt,d11,abs_error",
              comments=[f"# slope={_fmt(table.slope)},intercept={_fmt(table.intercept)}"])
    return len(rows)


def _run_enhance(spec: ExperimentSpec):
    if spec.t_final is not None:
        t_rule = lambda d0: spec.t_final
    else:
        t_rule = default_enhancement_horizon
    rows, slope = enhancement_scan(spec.flow, spec.scheme, spec.d0_list, spec.dt,
                                   t_rule=t_rule, n_particles=spec.particles,
                                   seed=spec.seed, workers=spec.resolved_workers(),
                                   budget_seconds=spec.budget_seconds)
    write_csv(rows, spec.out, "d0,d11,stderr11,t_final,n",
              comments=[f"# slope={_fmt(slope)}"])
    return len(rows)


def _run_oracle(spec: ExperimentSpec):
    flow = make_flow(spec.flow)
    if not isinstance(flow, SeparableFlow2D):
        raise SpecError(f"oracle needs a 2D separable flow, not {spec.flow!r}")
    grid = TorusGrid2D.for_flow(flow, spec.grid)
    corr = solve_cell_problem(flow, spec.d0, grid)
    d_cov, d_grad = eulerian_diffusivity(corr, flow)
    row = [spec.grid, spec.d0,
           d_cov[0, 0], d_cov[0, 1], d_cov[1, 1],
           d_grad[0, 0], d_grad[0, 1], d_grad[1, 1],
           corr.residuals[0], corr.residuals[1]]
    write_csv([row], spec.out,
              "n,d0,d11_cov,d12_cov,d22_cov,d11_grad,d12_grad,d22_grad,residual1,residual2")
    return 1


def _run_kernel(spec: ExperimentSpec):
    flow = make_flow(spec.flow)
    if not isinstance(flow, SeparableFlow2D):
        raise SpecError(f"kernel needs a 2D separable flow, not {spec.flow!r}")
    cfg = IntegratorConfig(spec.dt, spec.sigma)
    K = build_kernel(flow, cfg, spec.grid)
    pi, iters = invariant_density(K)
    lam = second_eigenvalue(K, pi=pi)
    rho = float(-np.log(abs(lam)))
    uniform = 1.0 / K.size
    max_rel_dev = float(np.max(np.abs(pi - uniform)) / uniform)
    rowsum_dev = float(np.max(np.abs(K.P.sum(axis=1) - 1.0)))
    row = [spec.grid, spec.dt, spec.sigma, rho, abs(lam), max_rel_dev,
           rowsum_dev, iters]
    write_csv([row], spec.out,
              "m,dt,sigma,rho,lambda2,pi_max_rel_dev,rowsum_max_dev,power_iters")
    return 1


def run(spec: ExperimentSpec) -> int:
    """Execute a spec; writes the CSV and a manifest, returns the exit code."""
    runners = {"simulate": _run_simulate, "converge": _run_converge,
               "enhance": _run_enhance, "oracle": _run_oracle,
               "kernel": _run_kernel}
    t0 = time.monotonic()
    try:
        n_rows = runners[spec.kind](spec)
    except SpecError:
        raise
    except (RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "spec": spec_to_config_dict(spec),
        "seed": spec.seed,
        "version": __version__,
        "wall_clock_seconds": time.monotonic() - t0,
        "rows_written": n_rows,
        "output": spec.out,
    }
    try:
        with open(spec.out + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise SpecError(f"cannot write manifest: {exc}") from exc
    return 0


def main(argv=None) -> int:
    try:
        spec = parse_spec(sys.argv[1:] if argv is None else argv)
        return run(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
