"""Effective diffusivity estimation and parameter studies.

The Lagrangian effective diffusivity is the long-time limit of

    D_ij = < (x_i(t) - x_i(0)) (x_j(t) - x_j(0)) > / (2 t),

estimated over an ensemble of independent particles.  Standard errors come
from the per-particle displacement products, which are i.i.d. across
particles.

Two study drivers are built on top:

* :func:`convergence_study` measures |D11(dt) - D11(dt_ref)| over a list of
  coarse steps against a self-computed fine reference, optionally coupling
  all runs with common random numbers: every coarse Gaussian increment is the
  sum of the corresponding dt/dt_ref fine increments.  The coupling removes
  most Monte Carlo variance from the error estimate, which makes log-log
  slope fits feasible at desk scale.

* :func:`enhancement_scan` maps out D11 as a function of the molecular
  diffusivity D0 (convection-enhanced diffusion), with a time horizon rule
  that grows as D0 shrinks.
"""

from __future__ import annotations

import multiprocessing
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import noise as _noise
from .ensemble import (CheckpointSchedule, MomentAccumulator, _check_workers,
                       _make_stepper, _resolve_flow, _chunk_plan, init_ensemble,
                       merge, record, run_simulation)
from .integrators import IntegratorConfig

__all__ = [
    "ConvergenceTable", "DiffusivityEstimate", "convergence_study",
    "default_enhancement_horizon", "enhancement_scan", "estimate_D",
    "loglog_fit", "mixing_converged",
]


@dataclass
class DiffusivityEstimate:
    """A d x d effective-diffusivity estimate with standard errors."""

    matrix: np.ndarray
    stderr: np.ndarray
    t: float
    n: int

    @property
    def d11(self) -> float:
        return float(self.matrix[0, 0])


def estimate_D(acc: MomentAccumulator) -> DiffusivityEstimate:
    """Turn displacement moments into a diffusivity estimate.

    matrix[i, j] = (sum_prod[i, j] / count) / (2 t); the standard error is
    the sample standard deviation of per-particle displacement products
    divided by sqrt(count) and 2t.
    """
    if acc.t <= 0:
        raise ValueError("diffusivity estimate requires t > 0")
    if acc.count < 2:
        raise ValueError("diffusivity estimate requires at least 2 particles")
    n = acc.count
    mean_prod = acc.sum_prod / n
    var = (acc.sum_prod_sq / n - mean_prod ** 2) * (n / (n - 1.0))
    var = np.maximum(var, 0.0)
    matrix = mean_prod / (2.0 * acc.t)
    stderr = np.sqrt(var / n) / (2.0 * acc.t)
    return DiffusivityEstimate(matrix, stderr, acc.t, n)


def loglog_fit(points: Sequence) -> tuple:
    """Least-squares line through (log x, log y); returns (slope, intercept).

    Natural logarithms; all coordinates must be positive.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("log-log fit requires positive coordinates")
    slope, intercept = np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)
    return float(slope), float(intercept)


def mixing_converged(d11: Sequence[float], stderr: Sequence[float],
                     window: int = 4) -> bool:
    """Plateau detector: last ``window`` checkpoint estimates lie within one
    pooled-standard-error band."""
    d11 = np.asarray(d11, dtype=float)
    se = np.asarray(stderr, dtype=float)
    if d11.size < window:
        return False
    tail = d11[-window:]
    pooled = float(np.sqrt(np.mean(se[-window:] ** 2)))
    return bool(tail.max() - tail.min() <= 2.0 * pooled)


# ---------------------------------------------------------------------------
# Convergence study with common random numbers
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceTable:
    """Per-dt diffusivity estimates, absolute errors, and a fitted slope."""

    rows: list                 # (dt, d11, abs_error)
    slope: float
    intercept: float
    ref_dt: float
    ref_d11: float

    def errors(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def _crn_chunk(args):
    """Advance one particle chunk through the reference and all coarse runs
    in lockstep over the shared fine-step noise, and record moments at T."""
    (flow_spec, scheme, sigma, dt_ref, dts, t_final, init_box, seed,
     offset, n_rows) = args
    flow = _resolve_flow(flow_spec)
    dim = len(init_box)
    n_fine = int(round(t_final / dt_ref))
    ratios = [int(round(dt / dt_ref)) for dt in dts]

    ref_state = init_ensemble(n_rows, dim, init_box, seed, particle_offset=offset)
    states = [init_ensemble(n_rows, dim, init_box, seed, particle_offset=offset)
              for _ in dts]
    ref_step = _make_stepper(scheme, flow, IntegratorConfig(dt_ref, sigma))
    steps = [_make_stepper(scheme, flow, IntegratorConfig(dt, sigma)) for dt in dts]

    ref_cols = [ref_state.positions[:, i] for i in range(dim)]
    cols = [[st.positions[:, i] for i in range(dim)] for st in states]
    bufs = [np.zeros((dim, n_rows)) for _ in dts]
    counts = [0] * len(dts)

    sig_sqdt = sigma * np.sqrt(dt_ref)
    CH, BL = _noise.CHUNK, _noise.BLOCK
    chunk_id = offset // CH
    r0 = offset - chunk_id * CH
    s = 0
    while s < n_fine:
        block_id = s // BL
        j0 = s - block_id * BL
        j1 = min(BL, j0 + (n_fine - s))
        zb = _noise.normal_block(seed, chunk_id, block_id, dim)
        zb *= sig_sqdt
        for j in range(j0, j1):
            nj = zb[j, :, r0:r0 + n_rows]
            ref_step(ref_cols, nj)
            for k in range(len(dts)):
                bufs[k] += nj
                counts[k] += 1
                if counts[k] == ratios[k]:
                    steps[k](cols[k], bufs[k])
                    bufs[k][...] = 0.0
                    counts[k] = 0
        s += j1 - j0

    ref_state.step_index = n_fine
    ref_state.dt = dt_ref
    out = [record(ref_state)]
    for st, dt in zip(states, dts):
        st.step_index = int(round(t_final / dt))
        st.dt = dt
        out.append(record(st))
    return out


def _map_tasks(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:  # pragma: no cover
            ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(workers, len(tasks))) as pool:
            return pool.map(fn, tasks)
    return [fn(t) for t in tasks]


def convergence_study(flow, scheme: str, dt_list: Sequence[float], dt_ref: float,
                      sigma: float, t_final: float, n_particles: int, seed: int,
                      couple: bool = True, init_box=None,
                      workers: int = 1) -> ConvergenceTable:
    """Error of D11 versus time step against a fine self-computed reference.

    Requires dt_ref < min(dt_list); with ``couple`` set, dt_ref must divide
    every dt and t_final must be a multiple of every dt.
    """
    dts = sorted(float(dt) for dt in dt_list)
    if dt_ref >= dts[0]:
        raise ValueError("dt_ref must be smaller than every tested dt")
    for dt in dts + [dt_ref]:
        k = t_final / dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError(f"t_final={t_final} is not a multiple of dt={dt} "
                             f"(remainder {t_final - round(k) * dt:g})")
    if couple:
        for dt in dts:
            r = dt / dt_ref
            if abs(r - round(r)) > 1e-9 * r:
                raise ValueError(f"coupled study needs dt_ref to divide dt={dt} "
                                 f"(ratio {r:g})")
    if init_box is None:
        init_box = _default_box_for(flow)
    dim = len(init_box)
    workers = _check_workers(flow, workers)

    if couple:
        tasks = [(flow, scheme, float(sigma), float(dt_ref), tuple(dts),
                  float(t_final), tuple(map(tuple, np.asarray(init_box, float))),
                  seed, start, take)
                 for _, start, take in _chunk_plan(n_particles)]
        per_chunk = _map_tasks(_crn_chunk, tasks, workers)
        merged = per_chunk[0]
        for accs in per_chunk[1:]:
            merged = [merge(a, b) for a, b in zip(merged, accs)]
        ref_est = estimate_D(merged[0])
        ests = [estimate_D(a) for a in merged[1:]]
    else:
        def one(dt, tag):
            cfg = IntegratorConfig(dt, sigma)
            accs = run_simulation(flow, scheme, cfg, n_particles, init_box,
                                  _noise.derive_seed(seed, tag),
                                  CheckpointSchedule.single(t_final, dt),
                                  workers=workers)
            return estimate_D(accs[-1])
        ref_est = one(dt_ref, 0)
        ests = [one(dt, 1 + k) for k, dt in enumerate(dts)]

    rows = [(dt, e.d11, abs(e.d11 - ref_est.d11)) for dt, e in zip(dts, ests)]
    pos = [(dt, err) for dt, _, err in rows if err > 0]
    if len(pos) >= 2:
        slope, intercept = loglog_fit(pos)
    else:  # errors identically zero (e.g. pure Brownian is exact)
        slope, intercept = float("nan"), float("nan")
    return ConvergenceTable(rows, slope, intercept, dt_ref, ref_est.d11)


# ---------------------------------------------------------------------------
# Enhancement scans D11(D0)
# ---------------------------------------------------------------------------

def default_enhancement_horizon(d0: float) -> float:
    """Default horizon rule: diffusing time grows like 1/D0, floor at 1e3."""
    return max(10.0 / d0, 1.0e3)


def enhancement_scan(flow, scheme: str, d0_list: Sequence[float], dt: float,
                     t_rule: Optional[Callable[[float], float]] = None,
                     n_particles: int = 10_000, seed: int = 0,
                     workers: int = 1, budget_seconds: Optional[float] = None):
    """D11 estimates over a list of molecular diffusivities.

    Returns (rows, slope) where rows are (d0, d11, stderr11, t_final, n) and
    slope is the log-log slope of d11 against d0 over the completed rows
    (nan with fewer than two rows).  A time budget aborts gracefully,
    returning the rows completed so far.
    """
    if t_rule is None:
        t_rule = default_enhancement_horizon
    t0 = time.monotonic()
    rows = []
    for leg, d0 in enumerate(d0_list):
        if d0 <= 0:
            raise ValueError("every D0 must be positive")
        if budget_seconds is not None and time.monotonic() - t0 > budget_seconds:
            break
        t_final = max(1, int(round(t_rule(d0) / dt))) * dt
        cfg = IntegratorConfig.from_d0(dt, d0)
        accs = run_simulation(flow, scheme, cfg, n_particles,
                              _default_box_for(flow), _noise.derive_seed(seed, leg),
                              CheckpointSchedule.single(t_final, dt), workers=workers)
        est = estimate_D(accs[-1])
        rows.append((d0, est.d11, float(est.stderr[0, 0]), t_final, n_particles))
    if len(rows) >= 2:
        slope, _ = loglog_fit([(r[0], r[1]) for r in rows])
    else:
        slope = float("nan")
    return rows, slope


def _default_box_for(flow):
    """Uniform initial box spanning one period cell of the flow."""
    f = _resolve_flow(flow)
    period = getattr(f, "period", None)
    if period is None:
        raise ValueError("flow has no period metadata; pass init_box explicitly")
    return tuple((0.0, L) for L in period)
