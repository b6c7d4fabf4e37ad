"""Particle ensembles: initialization, advancement, and displacement moments.

Particles are independent, so ensembles are embarrassingly parallel.  Work is
organized in fixed chunks of :data:`tracerdiff.noise.CHUNK` consecutive
particle indices; each chunk consumes its own noise blocks and produces its
own partial moment accumulators, which are merged in chunk order.  Because
both the chunking and the reduction order are fixed, results are
bit-identical for any worker count.

Positions are kept unwrapped in R^d (mean squared displacement is computed on
the covering space); periodicity is exploited only inside drift evaluation,
which is exact for the trigonometric built-in flows.  Within the advancement
loop the drift is evaluated through each flow's float32 fast path; position
arithmetic and noise stay in float64.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import noise as _noise
from .flows import as_field, as_separable, make_flow
from .integrators import SCHEMES, IntegratorConfig

__all__ = [
    "CheckpointSchedule", "EnsembleState", "MomentAccumulator",
    "advance", "empty_accumulator", "init_ensemble", "merge", "record",
    "run_simulation",
]


# ---------------------------------------------------------------------------
# Moment accumulators
# ---------------------------------------------------------------------------

@dataclass
class MomentAccumulator:
    """Streaming displacement moments of an ensemble at one checkpoint time.

    ``sum_prod[i, j]`` accumulates displacement products d_i d_j over
    particles and ``sum_prod_sq`` their squares (d_i d_j)^2, which is what a
    streaming standard error of the diffusivity estimate needs.  Merging is
    associative and commutative with the empty accumulator as identity.
    """

    count: int
    t: float
    sum_disp: np.ndarray
    sum_prod: np.ndarray
    sum_prod_sq: np.ndarray

    @property
    def dim(self) -> int:
        return self.sum_disp.shape[0]


def empty_accumulator(dim: int, t: float) -> MomentAccumulator:
    return MomentAccumulator(0, float(t), np.zeros(dim),
                             np.zeros((dim, dim)), np.zeros((dim, dim)))


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """Combine two partial accumulators taken at the same checkpoint time."""
    if a.t != b.t:
        raise ValueError(f"cannot merge accumulators at different times {a.t} != {b.t}")
    if a.dim != b.dim:
        raise ValueError("cannot merge accumulators of different dimensions")
    return MomentAccumulator(a.count + b.count, a.t,
                             a.sum_disp + b.sum_disp,
                             a.sum_prod + b.sum_prod,
                             a.sum_prod_sq + b.sum_prod_sq)


# ---------------------------------------------------------------------------
# Ensemble state
# ---------------------------------------------------------------------------

@dataclass
class EnsembleState:
    """Unwrapped particle positions plus everything needed to continue a run.

    Time is derived, never accumulated: ``t = step_index * dt`` exactly.
    ``particle_offset`` is the global index of row 0; noise streams are keyed
    by global particle index, so a sharded ensemble reproduces the unsharded
    one bit for bit.
    """

    positions: np.ndarray          # (n, dim), Fortran order
    initial_positions: np.ndarray  # (n, dim)
    master_seed: int
    particle_offset: int = 0
    step_index: int = 0
    dt: Optional[float] = None

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def t(self) -> float:
        return 0.0 if self.dt is None else self.step_index * self.dt


def init_ensemble(n: int, dim: int, init_box, master_seed: int,
                  particle_offset: int = 0) -> EnsembleState:
    """Draw n particles i.i.d. uniform over a box (degenerate axes allowed).

    ``init_box`` is a sequence of (lo, hi) pairs, one per axis.  Draws come
    from per-chunk streams keyed by global particle index, so the result does
    not depend on how the ensemble is sharded.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    box = np.asarray(init_box, dtype=np.float64)
    if box.shape != (dim, 2):
        raise ValueError(f"init_box must be {dim} (lo, hi) pairs")
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi < lo):
        raise ValueError("init_box upper bounds must be >= lower bounds")
    pos = np.zeros((n, dim), order="F")
    first = particle_offset // _noise.CHUNK
    last = (particle_offset + n - 1) // _noise.CHUNK
    for chunk_id in range(first, last + 1):
        g0 = max(particle_offset, chunk_id * _noise.CHUNK)
        g1 = min(particle_offset + n, (chunk_id + 1) * _noise.CHUNK)
        u = _noise.uniform_chunk(master_seed, chunk_id, dim)
        rows = u[g0 - chunk_id * _noise.CHUNK: g1 - chunk_id * _noise.CHUNK]
        pos[g0 - particle_offset: g1 - particle_offset] = lo + (hi - lo) * rows
    return EnsembleState(pos, pos.copy(order="F"), int(master_seed),
                         int(particle_offset), 0, None)


# ---------------------------------------------------------------------------
# Steppers (in-place column updates, float32 drift fast path)
# ---------------------------------------------------------------------------

def _make_stepper(scheme: str, flow, cfg: IntegratorConfig):
    """Build ``step(cols, noise_2d)`` updating coordinate columns in place.

    ``noise_2d[i]`` is the already sigma*sqrt(dt)-scaled increment for
    coordinate i.
    """
    dt32 = np.float32(cfg.dt)
    if scheme == "symplectic":
        sep = as_separable(flow)
        f_fast, g_fast = sep.f_fast, sep.g_fast

        def step(cols, nj):
            p, q = cols
            vf = f_fast(q)
            vf *= dt32
            p -= vf                      # p* = p - f(q) dt
            vg = g_fast(p)
            vg *= dt32
            q += vg                      # q1 = q + g(p*) dt
            p += nj[0]
            q += nj[1]
    elif scheme == "volume-preserving":
        fld = as_field(flow)
        if not fld.component_independence:
            raise ValueError(f"flow {fld.name!r} lacks componentwise independence")
        d = fld.dim

        def step(cols, nj):
            for i in range(d):
                v = fld.component_fast(i, cols)
                v *= dt32
                cols[i] += v
            for i in range(d):
                cols[i] += nj[i]
    elif scheme == "euler":
        fld = as_field(flow)
        d = fld.dim

        def step(cols, nj):
            vs = [fld.component_fast(i, cols) for i in range(d)]
            for i in range(d):
                vs[i] *= dt32
                cols[i] += vs[i]
                cols[i] += nj[i]
    else:
        raise ValueError(f"unknown scheme {scheme!r}; known schemes: {', '.join(SCHEMES)}")
    return step


def _find_bad_particle(cols, global_ids):
    mask = np.zeros(cols[0].shape[0], dtype=bool)
    for c in cols:
        mask |= ~np.isfinite(c)
    return int(global_ids[np.argmax(mask)])


def advance(state: EnsembleState, scheme: str, flow, cfg: IntegratorConfig,
            n_steps: int, check_finite: bool = True) -> EnsembleState:
    """Advance every particle by ``n_steps`` independent steps (in place).

    Noise for particle p at global step s is a fixed function of
    (master_seed, p, s), so advancing 2k steps equals advancing k steps twice.
    A non-finite position (e.g. overflow from a user-supplied flow) raises
    with the offending particle and step.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if n_steps == 0:
        return state
    if state.dt is not None and state.dt != cfg.dt:
        raise ValueError(f"ensemble already advanced with dt={state.dt}, got {cfg.dt}")
    step_fn = _make_stepper(scheme, flow, cfg)
    dim = state.dim
    sig_sqdt = cfg.sigma * np.sqrt(cfg.dt)
    s0, s1 = state.step_index, state.step_index + n_steps
    CH, BL = _noise.CHUNK, _noise.BLOCK

    first = state.particle_offset // CH
    last = (state.particle_offset + state.n - 1) // CH
    for chunk_id in range(first, last + 1):
        g0 = max(state.particle_offset, chunk_id * CH)
        g1 = min(state.particle_offset + state.n, (chunk_id + 1) * CH)
        rows = slice(g0 - state.particle_offset, g1 - state.particle_offset)
        cols = [state.positions[rows, i] for i in range(dim)]
        r0, r1 = g0 - chunk_id * CH, g1 - chunk_id * CH
        s = s0
        while s < s1:
            block_id = s // BL
            j0 = s - block_id * BL
            j1 = min(BL, j0 + (s1 - s))
            if sig_sqdt != 0.0:
                zb = _noise.normal_block(state.master_seed, chunk_id, block_id, dim)
                zb *= sig_sqdt
            else:
                zb = np.zeros((BL, dim, 1))
            if check_finite:
                saved = [c.copy() for c in cols]
            for j in range(j0, j1):
                nj = zb[j, :, r0:r1] if sig_sqdt != 0.0 else zb[j]
                step_fn(cols, nj)
            if check_finite and not all(np.isfinite(c).all() for c in cols):
                # replay the block one step at a time to localize the failure
                for i, c in enumerate(saved):
                    cols[i][...] = c
                for j in range(j0, j1):
                    nj = zb[j, :, r0:r1] if sig_sqdt != 0.0 else zb[j]
                    step_fn(cols, nj)
                    if not all(np.isfinite(c).all() for c in cols):
                        pid = _find_bad_particle(cols, np.arange(g0, g1))
                        raise RuntimeError(
                            f"non-finite position for particle {pid} at step "
                            f"{block_id * BL + j + 1} (t={(block_id * BL + j + 1) * cfg.dt:g})")
            s += j1 - j0
    state.step_index = s1
    state.dt = cfg.dt
    return state


def record(state: EnsembleState) -> MomentAccumulator:
    """Displacement moment sums of the ensemble at its current time."""
    d = state.dim
    disp = state.positions - state.initial_positions
    cols = [np.ascontiguousarray(disp[:, i]) for i in range(d)]
    sq = [c * c for c in cols]
    sum_disp = np.array([c.sum() for c in cols])
    sum_prod = np.empty((d, d))
    sum_prod_sq = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            sum_prod[i, j] = sum_prod[j, i] = np.dot(cols[i], cols[j])
            sum_prod_sq[i, j] = sum_prod_sq[j, i] = np.dot(sq[i], sq[j])
    return MomentAccumulator(state.n, state.t, sum_disp, sum_prod, sum_prod_sq)


# ---------------------------------------------------------------------------
# Checkpoint schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckpointSchedule:
    """Strictly increasing checkpoint times, each an integer multiple of dt."""

    times: tuple
    dt: float

    def __post_init__(self):
        if len(self.times) == 0:
            raise ValueError("schedule needs at least one time")
        prev = 0.0
        for t in self.times:
            if t <= prev:
                raise ValueError("checkpoint times must be strictly increasing and > 0")
            prev = t
        for t in self.times:
            k = t / self.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
                raise ValueError(f"checkpoint {t} is not a multiple of dt={self.dt}")

    def step_counts(self) -> list:
        """Steps to take between consecutive checkpoints, starting from t=0."""
        steps = [int(round(t / self.dt)) for t in self.times]
        return [b - a for a, b in zip([0] + steps[:-1], steps)]

    @classmethod
    def log_spaced(cls, t_final: float, dt: float, n: int = 32,
                   t_min: Optional[float] = None) -> "CheckpointSchedule":
        """About n log-spaced checkpoints in [t_min, t_final], snapped to steps."""
        if t_min is None:
            t_min = t_final / 1000.0
        t_min = max(t_min, dt)
        raw = np.geomspace(t_min, t_final, n)
        steps = np.unique(np.maximum(1, np.rint(raw / dt).astype(np.int64)))
        return cls(tuple(float(k * dt) for k in steps), dt)

    @classmethod
    def single(cls, t_final: float, dt: float) -> "CheckpointSchedule":
        return cls((float(t_final),), dt)


# ---------------------------------------------------------------------------
# Chunk-parallel simulation driver
# ---------------------------------------------------------------------------

def _resolve_flow(flow):
    if isinstance(flow, str):
        return make_flow(flow)
    if isinstance(flow, tuple) and len(flow) == 2 and isinstance(flow[0], str):
        return make_flow(flow[0], **flow[1])
    return flow


def _portable_flow(flow) -> bool:
    """True if the flow can be shipped to worker processes (name forms)."""
    return isinstance(flow, str) or (isinstance(flow, tuple) and len(flow) == 2
                                     and isinstance(flow[0], str))


def _check_workers(flow, workers: int) -> int:
    if workers > 1 and not _portable_flow(flow):
        raise ValueError("multi-worker runs need a registry flow name, e.g. "
                         "'abc' or ('abc', {'A': 1.0}); got a flow object")
    return workers


def _chunk_plan(n_particles: int):
    plan = []
    chunk_id = 0
    done = 0
    while done < n_particles:
        take = min(_noise.CHUNK, n_particles - done)
        plan.append((chunk_id, done, take))
        chunk_id += 1
        done += take
    return plan


def _simulate_chunk(args):
    (flow_spec, scheme, cfg, init_box, master_seed, times,
     offset, n_rows) = args
    flow = _resolve_flow(flow_spec)
    dim = len(init_box)
    state = init_ensemble(n_rows, dim, init_box, master_seed, particle_offset=offset)
    sched = CheckpointSchedule(times, cfg.dt)
    accs = []
    for k in sched.step_counts():
        advance(state, scheme, flow, cfg, k)
        accs.append(record(state))
    return accs


def run_simulation(flow, scheme: str, cfg: IntegratorConfig, n_particles: int,
                   init_box, master_seed: int, schedule: CheckpointSchedule,
                   workers: int = 1):
    """Run an ensemble through a checkpoint schedule; one accumulator per time.

    ``flow`` may be a flow object, a registry name, or a (name, params) pair;
    multi-worker runs require the name forms (objects hold closures that do
    not cross process boundaries).  Results are bit-identical for any
    ``workers`` value: chunk boundaries are fixed and partial accumulators
    are merged in chunk order.
    """
    workers = _check_workers(flow, workers)
    tasks = [(flow, scheme, cfg, tuple(map(tuple, np.asarray(init_box, dtype=float))),
              master_seed, schedule.times, start, take)
             for _, start, take in _chunk_plan(n_particles)]
    if workers > 1 and len(tasks) > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:  # pragma: no cover
            ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(min(workers, len(tasks))) as pool:
            per_chunk = pool.map(_simulate_chunk, tasks)
    else:
        per_chunk = [_simulate_chunk(t) for t in tasks]
    merged = per_chunk[0]
    for accs in per_chunk[1:]:
        merged = [merge(a, b) for a, b in zip(merged, accs)]
    return merged
