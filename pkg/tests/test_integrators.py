"""One-step maps: hand-checked values, exactness properties, Jacobians."""

import math

import numpy as np
import pytest

from tracerdiff.flows import (SeparableFlow2D, VelocityField, abc_flow,
                              cellular_flow, kolmogorov3d_type_flow,
                              kolmogorov_flow, zero_flow)
from tracerdiff.integrators import (IntegratorConfig, deterministic_jacobian_det,
                                    deterministic_map, euler_maruyama_step,
                                    symplectic_step_2d, volume_preserving_step)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, -1.0)
    with pytest.raises(ValueError, match="alpha"):
        IntegratorConfig(0.1, 1.0, alpha=0.5)
    assert IntegratorConfig.from_d0(0.1, 0.02).sigma == pytest.approx(0.2)
    assert IntegratorConfig(0.1, 0.2).d0 == pytest.approx(0.02)


def test_symplectic_identity_for_zero_flow():
    flow = zero_flow(2)
    out = symplectic_step_2d([0.3, -0.7], flow, IntegratorConfig(0.5, 0.0),
                             [0.0, 0.0])
    np.testing.assert_array_equal(out, [0.3, -0.7])


def test_symplectic_hand_value():
    # f = sin, g = cos, dt = 0.1 from the origin: p* = 0, q1 = cos(0)*0.1
    flow = SeparableFlow2D("toy", np.sin, np.cos, period=(2 * np.pi, 2 * np.pi))
    out = symplectic_step_2d([0.0, 0.0], flow, IntegratorConfig(0.1, 0.0),
                             [0.0, 0.0])
    np.testing.assert_allclose(out, [0.0, 0.1], atol=1e-15)


def test_symplectic_pure_noise():
    flow = zero_flow(2)
    out = symplectic_step_2d([1.0, 2.0], flow, IntegratorConfig(0.1, 1.0),
                             [0.25, -0.5])
    np.testing.assert_array_equal(out, [1.25, 1.5])


def test_symplectic_uses_updated_p_in_q_update():
    flow = SeparableFlow2D("toy", lambda q: np.ones_like(q), lambda p: p,
                           period=(1.0, 1.0))
    # p* = p - dt = -0.1; q1 = q + p* dt = -0.01
    out = symplectic_step_2d([0.0, 0.0], flow, IntegratorConfig(0.1, 0.0),
                             [0.0, 0.0])
    np.testing.assert_allclose(out, [-0.1, -0.01], atol=1e-16)


def test_volume_preserving_zero_field_is_pure_brownian():
    field = zero_flow(3)
    out = volume_preserving_step([1.0, 2.0, 3.0], field,
                                 IntegratorConfig(0.1, 2.0), [0.1, 0.2, 0.3])
    np.testing.assert_allclose(out, [1.2, 2.4, 3.6], atol=1e-15)


def test_volume_preserving_abc_hand_sequence():
    # sequential shears: each component sees the already-updated earlier ones
    x1 = 0.1 * (math.sin(0.0) + math.cos(0.0))
    x2 = 0.1 * (math.sin(x1) + math.cos(0.0))
    x3 = 0.1 * (math.sin(x2) + math.cos(x1))
    out = volume_preserving_step(np.zeros(3), abc_flow(),
                                 IntegratorConfig(0.1, 0.0), np.zeros(3))
    np.testing.assert_allclose(out, [x1, x2, x3], rtol=1e-15)
    np.testing.assert_allclose(out, [0.1, 0.10998334, 0.11047659], atol=1e-8)


def test_volume_preserving_2d_reduces_to_symplectic():
    flow = cellular_flow()
    field = flow.as_velocity_field()
    cfg = IntegratorConfig(0.1, 1.0)
    rng = np.random.default_rng(0)
    state = rng.uniform(-1, 1, size=(64, 2))
    noise = rng.standard_normal((64, 2))
    np.testing.assert_array_equal(volume_preserving_step(state, field, cfg, noise),
                                  symplectic_step_2d(state, flow, cfg, noise))


def test_volume_preserving_requires_component_independence():
    dep = VelocityField("dep", 2, (1.0, 1.0),
                        [lambda cols: cols[0], lambda cols: cols[1]],
                        component_independence=False)
    with pytest.raises(ValueError, match="independence"):
        volume_preserving_step([0.0, 0.0], dep, IntegratorConfig(0.1, 0.0),
                               [0.0, 0.0])


def test_euler_examples():
    field = zero_flow(3)
    out = euler_maruyama_step([0.0, 1.0, 2.0], field, IntegratorConfig(0.1, 1.0),
                              [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(out, [0.5, 1.5, 2.5])
    out = euler_maruyama_step(np.zeros(3), abc_flow(), IntegratorConfig(0.1, 0.0),
                              np.zeros(3))
    np.testing.assert_allclose(out, [0.1, 0.1, 0.1], atol=1e-16)


def test_noise_additivity_is_exact():
    cfg = IntegratorConfig(0.1, 0.7)
    cfg0 = IntegratorConfig(0.1, 0.0)
    rng = np.random.default_rng(1)
    state = rng.uniform(-1, 1, size=(16, 2))
    noise = rng.standard_normal((16, 2))
    flow = cellular_flow()
    det = symplectic_step_2d(state, flow, cfg0, np.zeros_like(noise))
    full = symplectic_step_2d(state, flow, cfg, noise)
    np.testing.assert_array_equal(full, det + 0.7 * noise)

    field = abc_flow()
    s3 = rng.uniform(-1, 1, size=(16, 3))
    n3 = rng.standard_normal((16, 3))
    det3 = volume_preserving_step(s3, field, cfg0, np.zeros_like(n3))
    np.testing.assert_array_equal(volume_preserving_step(s3, field, cfg, n3),
                                  det3 + 0.7 * n3)


@pytest.mark.parametrize("dt,tol", [(0.01, 1e-6), (0.1, 1e-6), (0.5, 1e-6)])
def test_unit_jacobian_splitting_schemes(dt, tol):
    # the maps are exactly volume-preserving up to the probe's O(h^2)
    # stencil error plus roundoff amplification ~eps/h
    rng = np.random.default_rng(2)
    cfg = IntegratorConfig(dt, 0.0)
    flow = cellular_flow()
    for _ in range(20):
        det = deterministic_jacobian_det("symplectic", flow, rng.uniform(0, 1, 2), cfg)
        assert abs(det - 1.0) < tol
    field = abc_flow()
    for _ in range(20):
        det = deterministic_jacobian_det("volume-preserving", field,
                                         rng.uniform(0, 2 * np.pi, 3), cfg)
        assert abs(det - 1.0) < tol


def test_euler_jacobian_deviates():
    rng = np.random.default_rng(3)
    cfg = IntegratorConfig(0.1, 0.0)
    flow = cellular_flow()
    devs = [abs(deterministic_jacobian_det("euler", flow, rng.uniform(0, 1, 2), cfg) - 1.0)
            for _ in range(100)]
    assert sum(d > 1e-6 for d in devs) >= 90


@pytest.mark.parametrize("scheme,flow", [
    ("symplectic", cellular_flow()),
    ("volume-preserving", abc_flow()),
    ("volume-preserving", kolmogorov_flow()),
    ("volume-preserving", kolmogorov3d_type_flow()),
    ("euler", abc_flow()),
])
def test_one_step_consistency_is_second_order(scheme, flow):
    # one step of size dt vs 64 substeps of dt/64: local error O(dt^2),
    # so halving dt shrinks it ~4x
    dim = getattr(flow, "dim", 2)
    x0 = np.full(dim, 0.3)
    errs = []
    for dt in (0.08, 0.04):
        phi = deterministic_map(scheme, flow, IntegratorConfig(dt, 0.0))
        fine = deterministic_map(scheme, flow, IntegratorConfig(dt / 64.0, 0.0))
        xf = x0.copy()
        for _ in range(64):
            xf = fine(xf)
        errs.append(np.linalg.norm(phi(x0) - xf))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError, match="symplectic"):
        deterministic_map("heun", cellular_flow(), IntegratorConfig(0.1, 0.0))
