"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Heavy Monte Carlo tests carry the ``slow`` marker; deselect them during
development with ``-m "not slow"``.  Every tolerance is pinned here, not
calibrated at run time.  Seeds are fixed constants.

Three tests encode checks against external reference values that our
cross-validated solvers cannot reproduce from the flow definitions at the
stated noise level (the independently computed Eulerian and Lagrangian
results agree with each other to well under 1%, but not with those values),
and two convergence-slope windows are narrower than the statistical spread
of the slope estimator at the pinned ensemble sizes.  These tests are
implemented faithfully and left to fail; README.md discusses the numbers.
"""

import subprocess
import sys

import numpy as np
import pytest

from tracerdiff.diffusivity import convergence_study, enhancement_scan, estimate_D
from tracerdiff.ensemble import CheckpointSchedule, run_simulation
from tracerdiff.eulerian import TorusGrid2D, eulerian_diffusivity, solve_cell_problem
from tracerdiff.flows import (abc_flow, cellular_flow, kolmogorov3d_type_flow,
                              kolmogorov_flow, make_flow)
from tracerdiff.integrators import IntegratorConfig, deterministic_jacobian_det
from tracerdiff.kernel_lab import (build_kernel, decay_rate, fit_decay_rate,
                                   invariant_density, corrector_rate_check,
                                   mode_decay_norms, second_eigenvalue)

BOX2 = ((-0.5, 0.5), (-0.5, 0.5))
REF_D11_2D = 0.12629
REF_D11_3D = 0.13106
WORKERS = 2


def _report(name, ok, detail):
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    return line


def _box_for(name):
    return tuple((0.0, L) for L in make_flow(name).period)


# -- criterion 1 -------------------------------------------------------------

def test_criterion_01_brownian_sanity():
    """Zero flow, D0 = 0.01: D11 and D22 within 3 stderr at every checkpoint."""
    d0 = 0.01
    cfg = IntegratorConfig.from_d0(0.01, d0)
    sched = CheckpointSchedule.log_spaced(100.0, 0.01, 8, t_min=1.0)
    accs = run_simulation("none", "symplectic", cfg, 20_000, BOX2, 101, sched,
                          workers=WORKERS)
    worst = 0.0
    for acc in accs:
        e = estimate_D(acc)
        for i in range(2):
            worst = max(worst, abs(e.matrix[i, i] - d0) / (3.0 * e.stderr[i, i]))
    ok = worst <= 1.0
    line = _report("01 brownian sanity", ok,
                   f"max |D-D0|/(3 stderr) = {worst:.2f}")
    assert ok, line


# -- criterion 2 + 13 (shared runs) ------------------------------------------

@pytest.fixture(scope="session")
def lagrangian_reference_runs(tmp_path_factory):
    """Criterion-2 Lagrangian run executed twice through the CLI, with
    --workers 8 and --workers 1, concurrently; returns the two CSV paths."""
    base = tmp_path_factory.mktemp("crit2")
    outs, procs = [], []
    for w in ("8", "1"):
        out = base / f"cellular_w{w}.csv"
        argv = [sys.executable, "-m", "tracerdiff.cli", "--kind", "simulate",
                "--flow", "cellular2d", "--scheme", "symplectic",
                "--d0", "0.01", "--dt", "0.01", "--particles", "50000",
                "--t-final", "2000", "--seed", "202", "--checkpoints", "6",
                "--workers", w, "--out", str(out)]
        procs.append(subprocess.Popen(argv))
        outs.append(out)
    for p in procs:
        assert p.wait(timeout=3600) == 0
    return outs


def _last_d11(csv_path):
    rows = [l.split(",") for l in csv_path.read_text().splitlines()[1:]
            if l and not l.startswith("#")]
    return float(rows[-1][1])


@pytest.fixture(scope="session")
def oracle_d11_256():
    flow = cellular_flow()
    corr = solve_cell_problem(flow, 0.01, TorusGrid2D.for_flow(flow, 256),
                              tol=1e-8)
    d_cov, _ = eulerian_diffusivity(corr, flow)
    return float(d_cov[0, 0])


@pytest.mark.slow
def test_criterion_02a_cross_framework_agreement(lagrangian_reference_runs,
                                                 oracle_d11_256):
    """Eulerian (n=256, tol 1e-8) and Lagrangian (dt=0.01, N=50k, T=2000)
    agree within 5% for the cellular flow at D0 = 0.01."""
    lag = _last_d11(lagrangian_reference_runs[0])
    orc = oracle_d11_256
    rel = abs(lag - orc) / orc
    ok = rel <= 0.05
    _report("02a cross-framework agreement", ok,
            f"lagrangian {lag:.5f} vs eulerian {orc:.5f}: {100 * rel:.2f}%")
    assert ok, f"frameworks disagree by {100 * rel:.2f}% > 5%"


@pytest.mark.slow
def test_criterion_02b_eulerian_matches_reference(oracle_d11_256):
    """Eulerian D11 within 5% of the reference value 0.12629.

    Expected to fail: the converged solver gives ~0.0322 at D0 = 0.01 (the
    reference value corresponds to D0 ~ 0.09 for this flow); the Lagrangian
    estimate independently confirms 0.0322.
    """
    rel = abs(oracle_d11_256 - REF_D11_2D) / REF_D11_2D
    ok = rel <= 0.05
    _report("02b eulerian vs reference 0.12629", ok,
            f"eulerian {oracle_d11_256:.5f}, deviation {100 * rel:.1f}%")
    assert ok, f"eulerian D11 {oracle_d11_256:.5f} deviates {100 * rel:.1f}% from 0.12629"


@pytest.mark.slow
def test_criterion_02c_lagrangian_matches_reference(lagrangian_reference_runs):
    """Lagrangian D11 within 5% of 0.12629 (expected to fail, same cause)."""
    lag = _last_d11(lagrangian_reference_runs[0])
    rel = abs(lag - REF_D11_2D) / REF_D11_2D
    ok = rel <= 0.05
    _report("02c lagrangian vs reference 0.12629", ok,
            f"lagrangian {lag:.5f}, deviation {100 * rel:.1f}%")
    assert ok, f"lagrangian D11 {lag:.5f} deviates {100 * rel:.1f}% from 0.12629"


@pytest.mark.slow
def test_criterion_13_worker_determinism(lagrangian_reference_runs):
    """The criterion-2 run with --workers 8 and --workers 1 produces
    byte-identical CSV bodies."""
    b8 = lagrangian_reference_runs[0].read_bytes()
    b1 = lagrangian_reference_runs[1].read_bytes()
    ok = b8 == b1
    _report("13 worker determinism", ok,
            f"{len(b8)} bytes, identical={ok}")
    assert ok, "workers=8 and workers=1 CSV bodies differ"


# -- criteria 3 and 4: convergence slopes ------------------------------------

@pytest.mark.slow
def test_criterion_03_convergence_slope_2d():
    """Coupled study, dt in {0.2, 0.1, 0.05, 0.025}, ref 0.00625, N=20k,
    T=500: fitted slope in [0.8, 1.6].

    Expected to fail: at these parameters the dt=0.2 point is outside the
    asymptotic regime (its error is ~90% of D11 itself) while the small-dt
    errors sit at the coupled Monte Carlo noise floor (~5e-4 at N=20k), so
    the fitted slope concentrates around 1.8-2.8 regardless of seed.
    """
    table = convergence_study("cellular2d", "symplectic",
                              [0.2, 0.1, 0.05, 0.025], 0.00625,
                              float(np.sqrt(0.02)), 500.0, 20_000, 303,
                              couple=True, init_box=BOX2, workers=WORKERS)
    ok = 0.8 <= table.slope <= 1.6
    errs = ", ".join(f"{e:.2e}" for e in table.errors())
    _report("03 convergence slope 2d", ok,
            f"slope {table.slope:.2f}, errors [{errs}]")
    assert ok, f"slope {table.slope:.2f} outside [0.8, 1.6]"


@pytest.mark.slow
def test_criterion_04_convergence_slope_3d():
    """Same protocol for the 3D flow at T=300: slope in [0.9, 1.7].

    Expected to be unstable: the time-step errors of this flow at D0 = 0.01
    are at or below the Monte Carlo noise floor for N=20k, so the fitted
    slope is noise-dominated.
    """
    table = convergence_study("kolmogorov3d-type", "volume-preserving",
                              [0.2, 0.1, 0.05, 0.025], 0.00625,
                              float(np.sqrt(0.02)), 300.0, 20_000, 404,
                              couple=True, init_box=_box_for("kolmogorov3d-type"),
                              workers=WORKERS)
    ok = 0.9 <= table.slope <= 1.7
    errs = ", ".join(f"{e:.2e}" for e in table.errors())
    _report("04 convergence slope 3d", ok,
            f"slope {table.slope:.2f}, errors [{errs}]")
    assert ok, f"slope {table.slope:.2f} outside [0.9, 1.7]"


# -- criterion 5: uniform-in-time error --------------------------------------

@pytest.mark.slow
def test_criterion_05_uniform_in_time():
    """Cellular flow at dt=0.1: |D11(T) - D11(2T)| within 3 pooled stderr
    for post-mixing T = 1000 (no error growth with horizon)."""
    cfg = IntegratorConfig(0.1, float(np.sqrt(0.02)))
    sched = CheckpointSchedule((1000.0, 2000.0), 0.1)
    accs = run_simulation("cellular2d", "symplectic", cfg, 20_000, BOX2, 505,
                          sched, workers=WORKERS)
    e1, e2 = estimate_D(accs[0]), estimate_D(accs[1])
    diff = abs(e1.d11 - e2.d11)
    pooled = float(np.hypot(e1.stderr[0, 0], e2.stderr[0, 0]))
    ok = diff <= 3.0 * pooled
    _report("05 uniform-in-time error", ok,
            f"|D(T)-D(2T)| = {diff:.2e} vs 3*pooled = {3 * pooled:.2e}")
    assert ok


# -- criterion 6: unit Jacobians ---------------------------------------------

def test_criterion_06_unit_jacobian():
    """Splitting schemes have unit deterministic Jacobian to 1e-6 at 100
    random states; Euler-Maruyama violates it at >= 90 of 100 states."""
    rng = np.random.default_rng(606)
    cfg = IntegratorConfig(0.1, 0.0)
    worst = 0.0
    flow2 = cellular_flow()
    for _ in range(100):
        det = deterministic_jacobian_det("symplectic", flow2, rng.uniform(0, 1, 2), cfg)
        worst = max(worst, abs(det - 1.0))
    for field in (abc_flow(), kolmogorov_flow(), kolmogorov3d_type_flow()):
        scale = np.asarray(field.period)
        for _ in range(100):
            x = rng.uniform(0, 1, 3) * scale
            det = deterministic_jacobian_det("volume-preserving", field, x, cfg)
            worst = max(worst, abs(det - 1.0))
    viol = sum(abs(deterministic_jacobian_det("euler", flow2,
                                              rng.uniform(0, 1, 2), cfg) - 1.0) > 1e-6
               for _ in range(100))
    ok = worst < 1e-6 and viol >= 90
    _report("06 unit jacobian", ok,
            f"splitting max|det-1| = {worst:.2e}; euler violations {viol}/100")
    assert worst < 1e-6, f"splitting-scheme Jacobian deviates by {worst:.2e}"
    assert viol >= 90, f"euler violated unit Jacobian at only {viol}/100 states"


# -- criteria 7-9: kernel laboratory -----------------------------------------

def test_criterion_07_kernel_pure_diffusion():
    """m=64, period 1, sigma=0.5, dt=0.1: row sums exact to 1e-12, uniform
    stationary density to 1e-10, second eigenvalue matches the wrapped
    Gaussian to 1e-6."""
    K = build_kernel(make_flow("none"), IntegratorConfig(0.1, 0.5), 64)
    rowsum_dev = float(np.max(np.abs(K.P.sum(axis=1) - 1.0)))
    pi, _ = invariant_density(K)
    u = 1.0 / K.size
    pi_dev = float(np.max(np.abs(pi - u)) / u)
    lam = abs(second_eigenvalue(K, pi=pi))
    target = float(np.exp(-2.0 * np.pi ** 2 * 0.25 * 0.1))
    lam_err = abs(lam - target)
    ok = rowsum_dev <= 1e-12 and pi_dev <= 1e-10 and lam_err <= 1e-6
    _report("07 kernel pure diffusion", ok,
            f"rowsum {rowsum_dev:.1e}, pi dev {pi_dev:.1e}, |lam2| err {lam_err:.1e}")
    assert rowsum_dev <= 1e-12
    assert pi_dev <= 1e-10
    assert lam_err <= 1e-6


def test_criterion_08_kernel_cellular():
    """Cellular kernel at m=64, dt=0.1, sigma=0.5: stationary density uniform
    to 1e-6 relative; three observable modes decay at decay_rate's rho
    within 10%."""
    K = build_kernel(cellular_flow(), IntegratorConfig(0.1, 0.5), 64)
    pi, _ = invariant_density(K)
    u = 1.0 / K.size
    pi_dev = float(np.max(np.abs(pi - u)) / u)
    rho = decay_rate(K, pi=pi)
    cp, cq = K.centers()
    modes = [np.broadcast_to(np.sin(2 * np.pi * cp)[:, None], (64, 64)),
             np.broadcast_to(np.sin(4 * np.pi * cq)[None, :], (64, 64)),
             np.sin(2 * np.pi * cp)[:, None] * np.sin(4 * np.pi * cq)[None, :]]
    rel_errs = []
    for phi in modes:
        fitted = fit_decay_rate(mode_decay_norms(K, phi, 40, pi=pi))
        rel_errs.append(abs(fitted - rho) / rho)
    ok = pi_dev <= 1e-6 and max(rel_errs) <= 0.10
    _report("08 kernel cellular flow", ok,
            f"pi dev {pi_dev:.1e}, rho {rho:.3f}, mode-fit dev "
            f"{100 * max(rel_errs):.1f}%")
    assert pi_dev <= 1e-6
    assert max(rel_errs) <= 0.10


def test_criterion_09_discrete_cell_problem_rate():
    """Discrete corrector vs spectral corrector for the cellular flow at
    sigma=0.5: successive sup-norm error ratios in [1.4, 2.8]."""
    flow = cellular_flow()
    oracle = solve_cell_problem(flow, 0.125, TorusGrid2D.for_flow(flow, 128),
                                tol=1e-10)
    rows, ratios = corrector_rate_check(flow, 0.5, [0.2, 0.1, 0.05, 0.025], 64,
                                    oracle)
    ok = all(1.4 <= r <= 2.8 for r in ratios)
    _report("09 discrete cell problem rate", ok,
            "ratios " + ", ".join(f"{r:.2f}" for r in ratios))
    assert ok, f"error ratios {ratios} outside [1.4, 2.8]"


# -- criteria 10-12: enhancement scans and the Euler baseline ----------------

@pytest.fixture(scope="session")
def abc_scan_result():
    rows, slope = enhancement_scan("abc", "volume-preserving",
                                   [1e-1, 1e-2, 1e-3], 0.01,
                                   t_rule=lambda d0: min(10.0 / d0, 1e4),
                                   n_particles=10_000, seed=606,
                                   workers=WORKERS)
    return rows, slope


@pytest.mark.slow
def test_criterion_10_abc_maximal_enhancement(abc_scan_result):
    """ABC flow, D0 in {1e-1, 1e-2, 1e-3}, T = min(10/D0, 1e4): log-log
    slope of D11 vs D0 in [-1.25, -0.75] (maximal enhancement ~ 1/D0)."""
    rows, slope = abc_scan_result
    ok = -1.25 <= slope <= -0.75
    detail = ", ".join(f"D11({d0:g})={d11:.3f}" for d0, d11, *_ in rows)
    _report("10 abc maximal enhancement", ok, f"slope {slope:.3f}; {detail}")
    assert ok, f"ABC enhancement slope {slope:.3f} outside [-1.25, -0.75]"


@pytest.mark.slow
def test_criterion_11_kolmogorov_submaximal(abc_scan_result):
    """Kolmogorov flow over the same D0 range: slope in (-0.5, 0], markedly
    flatter than the ABC scan.

    The flatness contrast holds by a wide margin, but the first clause is
    expected to fail by a hair: over this reduced D0 range the (fully mixed,
    checkpoint-verified) D11 curve of this flow is non-monotone, with a dip
    at D0 = 0.01, so the three-point log-log slope comes out slightly
    positive (~+0.07) rather than in (-0.5, 0].
    """
    rows, slope = enhancement_scan("kolmogorov", "volume-preserving",
                                   [1e-3, 1e-2, 1e-1], 0.1,
                                   t_rule=lambda d0: 3000.0,
                                   n_particles=10_000, seed=707,
                                   workers=WORKERS)
    _, abc_slope = abc_scan_result
    ok = -0.5 < slope <= 0.0 and slope >= abc_slope + 0.25
    detail = ", ".join(f"D11({d0:g})={d11:.3f}" for d0, d11, *_ in rows)
    _report("11 kolmogorov sub-maximal enhancement", ok,
            f"slope {slope:.3f} vs abc {abc_slope:.3f}; {detail}")
    assert -0.5 < slope <= 0.0, f"slope {slope:.3f} outside (-0.5, 0]"
    assert slope >= abc_slope + 0.25, "not markedly flatter than the ABC scan"


@pytest.mark.slow
def test_criterion_12_euler_baseline_failure():
    """ABC at D0=1e-3, dt=0.1: Euler disagrees with the volume-preserving
    scheme by >50%, while the volume-preserving dt=0.1 vs dt=0.01 results
    (coupled) agree within 15%."""
    sigma = float(np.sqrt(2e-3))
    box = _box_for("abc")
    table = convergence_study("abc", "volume-preserving", [0.1], 0.01, sigma,
                              1000.0, 5000, 808, couple=True, init_box=box,
                              workers=WORKERS)
    d_vp_coarse = table.rows[0][1]
    rel_step = table.rows[0][2] / table.ref_d11
    accs = run_simulation("abc", "euler", IntegratorConfig(0.1, sigma), 5000,
                          box, 808, CheckpointSchedule.single(1000.0, 0.1),
                          workers=WORKERS)
    d_euler = estimate_D(accs[-1]).d11
    rel_euler = abs(d_euler - d_vp_coarse) / d_vp_coarse
    ok = rel_euler > 0.5 and rel_step <= 0.15
    _report("12 euler baseline failure", ok,
            f"euler {d_euler:.2f} vs vp {d_vp_coarse:.2f} ({100 * rel_euler:.0f}% "
            f"off); vp dt-step agreement {100 * rel_step:.1f}%")
    assert rel_euler > 0.5, f"euler only {100 * rel_euler:.0f}% off"
    assert rel_step <= 0.15, f"vp dt=0.1 vs 0.01 disagree by {100 * rel_step:.1f}%"


# -- criterion 14: 3D reference value ----------------------------------------

@pytest.mark.slow
def test_criterion_14_threed_reference_value():
    """3D Kolmogorov-type flow at dt=0.01, N=50k, T=600: D11 within 10% of
    0.13106.  The noise level is not pinned by the criterion; the reference
    corresponds to D0 = 0.1 for this flow, which is what we run."""
    cfg = IntegratorConfig.from_d0(0.01, 0.1)
    accs = run_simulation("kolmogorov3d-type", "volume-preserving", cfg, 50_000,
                          _box_for("kolmogorov3d-type"), 909,
                          CheckpointSchedule.single(600.0, 0.01),
                          workers=WORKERS)
    d11 = estimate_D(accs[-1]).d11
    rel = abs(d11 - REF_D11_3D) / REF_D11_3D
    ok = rel <= 0.10
    _report("14 3d reference value", ok,
            f"D11 = {d11:.5f}, deviation {100 * rel:.1f}% from {REF_D11_3D}")
    assert ok, f"D11 {d11:.5f} deviates {100 * rel:.1f}% from {REF_D11_3D}"
