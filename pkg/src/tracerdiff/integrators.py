"""One-step maps for passive tracer SDEs dX = v(X) dt + sigma dW.

Three schemes, identified by the strings ``symplectic``, ``volume-preserving``
and ``euler``:

* ``symplectic`` (2D separable flows): Lie-Trotter splitting of the
  deterministic Hamiltonian part and the Brownian part,

      p1 = p0 - f(q0) dt + sigma Np
      q1 = q0 + g(p0 - f(q0) dt) dt + sigma Nq

  with g evaluated at the updated intermediate p.  The deterministic part is
  a composition of two shears, so its Jacobian determinant is exactly 1.

* ``volume-preserving`` (d-dimensional fields whose component i does not
  depend on coordinate i): sequential coordinate updates

      X^i* = X^i0 + dt v^i(X^1*, ..., X^(i-1)*, X^i0, ..., X^d0)

  followed by one additive noise kick.  Each sub-step is a shear, so volume
  is preserved exactly; for d = 2 this reduces to the symplectic map.

* ``euler`` -- Euler-Maruyama baseline, X1 = X0 + dt v(X0) + sigma N.  Its
  deterministic Jacobian is 1 + O(dt^2) but not exactly 1.

Noise arguments are sqrt(dt)-scaled standard normal increments (one per
coordinate); the step multiplies them by sigma only, so the last sub-step is
exactly ``deterministic part + sigma * noise``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flows import SeparableFlow2D, VelocityField, as_field, as_separable

SCHEMES = ("symplectic", "volume-preserving", "euler")


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step, noise amplitude, and splitting parameter.

    ``sigma`` is the noise amplitude; the molecular diffusivity is
    D0 = sigma^2 / 2.  ``alpha`` selects the splitting variant and only the
    explicit choice alpha = 1 is supported.
    """

    dt: float
    sigma: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.alpha != 1.0:
            raise ValueError("only the explicit splitting (alpha = 1) is supported")

    @property
    def d0(self) -> float:
        return 0.5 * self.sigma * self.sigma

    @classmethod
    def from_d0(cls, dt: float, d0: float) -> "IntegratorConfig":
        if d0 < 0:
            raise ValueError("d0 must be >= 0")
        return cls(dt=dt, sigma=float(np.sqrt(2.0 * d0)))


def _check_noise(noise, dim):
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1] != dim:
        raise ValueError(f"noise must have {dim} components, got shape {noise.shape}")
    return noise


def symplectic_step_2d(state, flow: SeparableFlow2D, cfg: IntegratorConfig, noise):
    """One splitting step for a separable 2D flow; state shape (..., 2)."""
    flow = as_separable(flow)
    state = np.asarray(state, dtype=np.float64)
    noise = _check_noise(noise, 2)
    p, q = state[..., 0], state[..., 1]
    p1 = p - flow.f(q) * cfg.dt
    q1 = q + flow.g(p1) * cfg.dt
    out = np.empty_like(state)
    out[..., 0] = p1 + cfg.sigma * noise[..., 0]
    out[..., 1] = q1 + cfg.sigma * noise[..., 1]
    return out


def volume_preserving_step(state, field: VelocityField, cfg: IntegratorConfig, noise):
    """One d-dimensional splitting step; state shape (..., d).

    Sub-step i sees components 1..i-1 already updated and i..d still at
    their original values.  Requires ``field.component_independence``.
    """
    field = as_field(field)
    if not field.component_independence:
        raise ValueError(
            f"flow {field.name!r} does not declare componentwise independence; "
            "the sequential splitting would not be volume-preserving")
    state = np.asarray(state, dtype=np.float64)
    noise = _check_noise(noise, field.dim)
    cols = [state[..., i].copy() for i in range(field.dim)]
    for i in range(field.dim):
        cols[i] = cols[i] + cfg.dt * field.component(i, cols)
    out = np.stack(cols, axis=-1)
    out += cfg.sigma * noise
    return out


def euler_maruyama_step(state, field: VelocityField, cfg: IntegratorConfig, noise):
    """Euler-Maruyama step X1 = X0 + dt v(X0) + sigma * noise."""
    field = as_field(field)
    state = np.asarray(state, dtype=np.float64)
    noise = _check_noise(noise, field.dim)
    return state + cfg.dt * field.drift(state) + cfg.sigma * noise


def deterministic_map(scheme: str, flow, cfg: IntegratorConfig):
    """The sigma = 0 part of a scheme's one-step map, as ``x -> x1``."""
    if scheme == "symplectic":
        sep = as_separable(flow)

        def phi(x):
            x = np.asarray(x, dtype=np.float64)
            z = np.zeros_like(x)
            return symplectic_step_2d(x, sep, IntegratorConfig(cfg.dt, 0.0), z)
    elif scheme == "volume-preserving":
        field = as_field(flow)

        def phi(x):
            x = np.asarray(x, dtype=np.float64)
            z = np.zeros_like(x)
            return volume_preserving_step(x, field, IntegratorConfig(cfg.dt, 0.0), z)
    elif scheme == "euler":
        field = as_field(flow)

        def phi(x):
            x = np.asarray(x, dtype=np.float64)
            z = np.zeros_like(x)
            return euler_maruyama_step(x, field, IntegratorConfig(cfg.dt, 0.0), z)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; known schemes: {', '.join(SCHEMES)}")
    return phi


def deterministic_jacobian_det(scheme: str, flow, state, cfg: IntegratorConfig,
                               h: float = 3e-7) -> float:
    """Central-difference Jacobian determinant of the deterministic map.

    For the splitting schemes this equals 1 up to the O(h^2) stencil error
    plus roundoff; for Euler-Maruyama it deviates at O(dt^2).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    phi = deterministic_map(scheme, flow, cfg)
    x = np.asarray(state, dtype=np.float64).reshape(-1)
    d = x.size
    jac = np.empty((d, d))
    for j in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (phi(xp) - phi(xm)) / (2.0 * h)
    return float(np.linalg.det(jac))
