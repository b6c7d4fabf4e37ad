"""Periodic incompressible velocity fields for passive tracer transport.

Built-in flows (registry names in parentheses):

* ``cellular2d`` -- 2D chaotic cellular flow with oscillating vortices,
  generated by the separable Hamiltonian
  ``H(p, q) = exp(sin(2 pi p))/(2 pi) + exp(cos(4 pi q + 1))/(4 pi)``:

      dp/dt = sin(4 pi q + 1) exp(cos(4 pi q + 1))
      dq/dt = cos(2 pi p) exp(sin(2 pi p))

* ``abc`` -- Arnold-Beltrami-Childress flow
  ``(A sin r + C cos q, B sin p + A cos r, C sin q + B cos p)``.

* ``kolmogorov`` -- Kolmogorov flow ``(sin r, sin p, sin q)``.

* ``kolmogorov3d-type`` -- a 3D Kolmogorov-type flow with each component a
  single chaotic mode ``cos(k x + c) exp(sin(k x + c))`` of the preceding
  coordinate (cyclically), divergence-free by construction.

* ``none`` -- zero drift, for pure-Brownian sanity checks.

All fields are time-independent, divergence-free, and componentwise
independent (component i never depends on coordinate i), which is what the
sequential volume-preserving splitting update requires.  Periods differ per
flow and per axis and are stored on the field; they are never hard-coded
downstream.

Every flow exposes exact float64 evaluation (used by one-step integrators,
Jacobian probes, and the Eulerian solver) and a float32 fast path (used only
inside large Monte Carlo ensembles, where per-evaluation error ~1e-7 is far
below statistical noise).
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
FOUR_PI = 4.0 * np.pi
SIX_PI = 6.0 * np.pi

Array = np.ndarray


class VelocityField:
    """An evaluatable periodic drift field on R^d.

    Parameters
    ----------
    name : str
        Identifier (registry key for built-ins).
    dim : int
        Spatial dimension, >= 2.
    period : sequence of float
        Per-axis period lengths.
    components : sequence of callables
        ``components[i](cols) -> array`` evaluates velocity component i from
        the list of coordinate columns ``cols`` (float64).
    components_fast : sequence of callables, optional
        float32 fast-path versions; defaults to the exact ones.
    component_independence : bool
        True if component i never depends on coordinate i (required by the
        volume-preserving splitting scheme).
    """

    def __init__(self, name: str, dim: int, period: Sequence[float],
                 components: Sequence[Callable], components_fast=None,
                 component_independence: bool = False):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        if len(period) != dim or len(components) != dim:
            raise ValueError("period/components length must equal dim")
        self.name = name
        self.dim = dim
        self.period = tuple(float(L) for L in period)
        self._components = list(components)
        self._components_fast = list(components_fast) if components_fast else list(components)
        self.component_independence = bool(component_independence)

    def component(self, i: int, cols: Sequence[Array]) -> Array:
        """Velocity component i at coordinates given as column arrays (exact)."""
        return self._components[i](cols)

    def component_fast(self, i: int, cols: Sequence[Array]) -> Array:
        """Fast-path component i (float32 internals, for ensemble stepping)."""
        return self._components_fast[i](cols)

    def drift(self, x: Array) -> Array:
        """Evaluate the full velocity at positions ``x`` of shape (..., dim)."""
        x = np.asarray(x, dtype=np.float64)
        cols = [x[..., i] for i in range(self.dim)]
        out = np.empty_like(x)
        for i in range(self.dim):
            out[..., i] = self.component(i, cols)
        return out


class SeparableFlow2D:
    """The (f, g) pair of a separable 2D Hamiltonian flow.

    With ``H(p, q) = F(q) + G(p)``, ``f(q) = H_q`` and ``g(p) = H_p``, so the
    drift of p is ``-f(q)`` and the drift of q is ``+g(p)``.  A supplied
    ``hamiltonian(p, q)`` is used only for conservation/consistency checks.
    """

    def __init__(self, name: str, f: Callable, g: Callable,
                 period: Sequence[float],
                 hamiltonian: Optional[Callable] = None,
                 f_fast: Optional[Callable] = None,
                 g_fast: Optional[Callable] = None):
        self.name = name
        self.f = f
        self.g = g
        self.f_fast = f_fast if f_fast is not None else f
        self.g_fast = g_fast if g_fast is not None else g
        self.hamiltonian = hamiltonian
        self.period = tuple(float(L) for L in period)
        self.dim = 2

    def p_drift(self, q: Array) -> Array:
        return -self.f(q)

    def q_drift(self, p: Array) -> Array:
        return self.g(p)

    def as_velocity_field(self) -> VelocityField:
        """View as a generic field (v1, v2) = (-f(q), g(p)).

        v1 depends only on q and v2 only on p, so the componentwise
        independence needed by the volume-preserving scheme holds.
        """
        return VelocityField(
            self.name, 2, self.period,
            components=[lambda cols: -self.f(cols[1]),
                        lambda cols: self.g(cols[0])],
            components_fast=[lambda cols: -self.f_fast(cols[1]),
                             lambda cols: self.g_fast(cols[0])],
            component_independence=True,
        )


# ---------------------------------------------------------------------------
# 2D chaotic cellular flow with oscillating vortices
# ---------------------------------------------------------------------------

def cellular_drift(p, q):
    """Drift (dp/dt, dq/dt) of the 2D cellular flow; period 1 in p, 1/2 in q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    u = FOUR_PI * q + 1.0
    w = TWO_PI * p
    return np.sin(u) * np.exp(np.cos(u)), np.cos(w) * np.exp(np.sin(w))


def _cellular_f(q):
    # f = H_q; the p-drift is -f(q) = +sin(4 pi q + 1) exp(cos(4 pi q + 1))
    u = FOUR_PI * np.asarray(q, dtype=np.float64) + 1.0
    return -np.sin(u) * np.exp(np.cos(u))


def _cellular_g(p):
    w = TWO_PI * np.asarray(p, dtype=np.float64)
    return np.cos(w) * np.exp(np.sin(w))


def _cellular_f32(q):
    u = np.multiply(q, np.float32(FOUR_PI), dtype=np.float32)
    u += np.float32(1.0)
    s = np.sin(u)
    np.cos(u, out=u)
    np.exp(u, out=u)
    np.multiply(s, u, out=s)
    np.negative(s, out=s)
    return s


def _cellular_g32(p):
    w = np.multiply(p, np.float32(TWO_PI), dtype=np.float32)
    c = np.cos(w)
    np.sin(w, out=w)
    np.exp(w, out=w)
    np.multiply(c, w, out=c)
    return c


def _cellular_hamiltonian(p, q):
    return (np.exp(np.sin(TWO_PI * np.asarray(p, dtype=np.float64))) / TWO_PI
            + np.exp(np.cos(FOUR_PI * np.asarray(q, dtype=np.float64) + 1.0)) / FOUR_PI)


def cellular_flow() -> SeparableFlow2D:
    """The chaotic cellular flow with oscillating vortices."""
    return SeparableFlow2D("cellular2d", _cellular_f, _cellular_g,
                           period=(1.0, 0.5), hamiltonian=_cellular_hamiltonian,
                           f_fast=_cellular_f32, g_fast=_cellular_g32)


# ---------------------------------------------------------------------------
# ABC flow
# ---------------------------------------------------------------------------

def abc_drift(x, A=1.0, B=1.0, C=1.0):
    """ABC velocity at positions x of shape (..., 3); 2 pi periodic."""
    x = np.asarray(x, dtype=np.float64)
    p, q, r = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([A * np.sin(r) + C * np.cos(q),
                     B * np.sin(p) + A * np.cos(r),
                     C * np.sin(q) + B * np.cos(p)], axis=-1)


def abc_flow(A=1.0, B=1.0, C=1.0) -> VelocityField:
    A, B, C = float(A), float(B), float(C)

    def v0(cols):
        return A * np.sin(cols[2]) + C * np.cos(cols[1])

    def v1(cols):
        return B * np.sin(cols[0]) + A * np.cos(cols[2])

    def v2(cols):
        return C * np.sin(cols[1]) + B * np.cos(cols[0])

    A32, B32, C32 = np.float32(A), np.float32(B), np.float32(C)

    def v0f(cols):
        out = np.sin(cols[2].astype(np.float32))
        out *= A32
        c = np.cos(cols[1].astype(np.float32))
        c *= C32
        out += c
        return out

    def v1f(cols):
        out = np.sin(cols[0].astype(np.float32))
        out *= B32
        c = np.cos(cols[2].astype(np.float32))
        c *= A32
        out += c
        return out

    def v2f(cols):
        out = np.sin(cols[1].astype(np.float32))
        out *= C32
        c = np.cos(cols[0].astype(np.float32))
        c *= B32
        out += c
        return out

    return VelocityField("abc", 3, (TWO_PI, TWO_PI, TWO_PI),
                         components=[v0, v1, v2],
                         components_fast=[v0f, v1f, v2f],
                         component_independence=True)


# ---------------------------------------------------------------------------
# Kolmogorov flow
# ---------------------------------------------------------------------------

def kolmogorov_drift(x):
    """Kolmogorov velocity (sin r, sin p, sin q); 2 pi periodic."""
    x = np.asarray(x, dtype=np.float64)
    return np.stack([np.sin(x[..., 2]), np.sin(x[..., 0]), np.sin(x[..., 1])],
                    axis=-1)


def kolmogorov_flow() -> VelocityField:
    comps = [lambda cols: np.sin(cols[2]),
             lambda cols: np.sin(cols[0]),
             lambda cols: np.sin(cols[1])]
    comps_f = [lambda cols: np.sin(cols[2].astype(np.float32)),
               lambda cols: np.sin(cols[0].astype(np.float32)),
               lambda cols: np.sin(cols[1].astype(np.float32))]
    return VelocityField("kolmogorov", 3, (TWO_PI, TWO_PI, TWO_PI),
                         components=comps, components_fast=comps_f,
                         component_independence=True)


# ---------------------------------------------------------------------------
# 3D Kolmogorov-type flow (chaotic single-mode components)
# ---------------------------------------------------------------------------

def _mode(x, k, c):
    u = k * np.asarray(x, dtype=np.float64) + c
    return np.cos(u) * np.exp(np.sin(u))


def _mode32(x, k, c):
    u = np.multiply(x, np.float32(k), dtype=np.float32)
    u += np.float32(c)
    out = np.cos(u)
    np.sin(u, out=u)
    np.exp(u, out=u)
    np.multiply(out, u, out=out)
    return out


def kolmogorov3d_type_drift(x):
    """3D Kolmogorov-type velocity; component periods 1/2, 1/3, 1."""
    x = np.asarray(x, dtype=np.float64)
    return np.stack([_mode(x[..., 2], FOUR_PI, 1.0),
                     _mode(x[..., 0], SIX_PI, 2.0),
                     _mode(x[..., 1], TWO_PI, 3.0)], axis=-1)


def kolmogorov3d_type_flow() -> VelocityField:
    comps = [lambda cols: _mode(cols[2], FOUR_PI, 1.0),
             lambda cols: _mode(cols[0], SIX_PI, 2.0),
             lambda cols: _mode(cols[1], TWO_PI, 3.0)]
    comps_f = [lambda cols: _mode32(cols[2], FOUR_PI, 1.0),
               lambda cols: _mode32(cols[0], SIX_PI, 2.0),
               lambda cols: _mode32(cols[1], TWO_PI, 3.0)]
    # Axis periods: only v2 depends on x0 (period 1/3), only v3 on x1
    # (period 1), only v1 on x2 (period 1/2).
    return VelocityField("kolmogorov3d-type", 3, (1.0 / 3.0, 1.0, 0.5),
                         components=comps, components_fast=comps_f,
                         component_independence=True)


# ---------------------------------------------------------------------------
# Zero drift
# ---------------------------------------------------------------------------

def zero_flow(dim: int = 2):
    """Zero-drift flow; returns a SeparableFlow2D when dim == 2."""
    if dim == 2:
        zf = lambda q: np.zeros_like(np.asarray(q, dtype=np.float64))
        zf32 = lambda q: np.zeros(np.shape(q), dtype=np.float32)
        return SeparableFlow2D("none", zf, zf, period=(1.0, 1.0),
                               hamiltonian=lambda p, q: np.zeros_like(np.asarray(p, dtype=np.float64)),
                               f_fast=zf32, g_fast=zf32)
    comps = [(lambda cols: np.zeros_like(cols[0])) for _ in range(dim)]
    comps_f = [(lambda cols: np.zeros(cols[0].shape, dtype=np.float32)) for _ in range(dim)]
    return VelocityField("none", dim, (1.0,) * dim, components=comps,
                         components_fast=comps_f, component_independence=True)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

FLOW_REGISTRY = {
    "cellular2d": cellular_flow,
    "abc": abc_flow,
    "kolmogorov": kolmogorov_flow,
    "kolmogorov3d-type": kolmogorov3d_type_flow,
    "none": zero_flow,
}


def make_flow(name: str, **params):
    """Construct a built-in flow by registry name."""
    try:
        factory = FLOW_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(FLOW_REGISTRY))
        raise ValueError(f"unknown flow {name!r}; known flows: {known}") from None
    return factory(**params)


def as_field(flow) -> VelocityField:
    """Coerce a flow object to a VelocityField."""
    if isinstance(flow, VelocityField):
        return flow
    if isinstance(flow, SeparableFlow2D):
        return flow.as_velocity_field()
    raise TypeError(f"not a flow: {flow!r}")


def as_separable(flow) -> SeparableFlow2D:
    """Coerce to a SeparableFlow2D, or fail if the flow is not 2D separable."""
    if isinstance(flow, SeparableFlow2D):
        return flow
    raise TypeError(f"flow {getattr(flow, 'name', flow)!r} is not a separable 2D flow")


# ---------------------------------------------------------------------------
# Divergence probe
# ---------------------------------------------------------------------------

def divergence_probe(field, n_samples: int = 100, h: float = 1e-4,
                     seed: int = 0, points=None) -> float:
    """Max |central-difference divergence| of a field over sampled points.

    Samples uniformly over one period cell unless explicit ``points`` of
    shape (n, dim) are given.  The stencil error is O(h^2), so for a
    divergence-free field the result tends to zero quadratically in h.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    field = as_field(field)
    d = field.dim
    if points is None:
        rng = np.random.default_rng(seed)
        points = rng.uniform(0.0, 1.0, size=(n_samples, d)) * np.asarray(field.period)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    div = np.zeros(points.shape[0])
    cols = [points[:, i].copy() for i in range(d)]
    for i in range(d):
        xi = cols[i]
        cols[i] = xi + h
        vp = field.component(i, cols)
        cols[i] = xi - h
        vm = field.component(i, cols)
        cols[i] = xi
        div += (vp - vm) / (2.0 * h)
    return float(np.max(np.abs(div)))
