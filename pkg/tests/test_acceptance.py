"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS`` or ``FAIL`` line with the measured
numbers, then asserts the criterion at its stated tolerance.  Run the file
directly (``python tests/test_acceptance.py``) to get the twelve lines
without pytest's capture.
"""

import subprocess
import sys
import time

import numpy as np
import pytest

from physmap.formulas import (HomogeneousParams, InhomogeneousBounds, inhomogeneous_bounds,
                              limit_asymptotics, nu_vanishing, r_two_point, rho_hom,
                              variance_constants, variance_exact)
from physmap.mc import (clt_test, count_dispersion_test, estimate_ocean, fkg_test,
                        left_end_equivalence_test, ocean_indicators, wiener_covariance_test)
from physmap.model import DEFAULT_QUAD, Constant, Deterministic, Exponential, ModelSpec, PiecewiseConstant

UNIT = HomogeneousParams(1.0, 1.0, Deterministic(1.0))
SEED = 20240601


@pytest.fixture
def emit(capsys):
    """Print one PASS/FAIL line past pytest's capture and return the verdict."""

    def _emit(number, ok, text, started):
        line = "%s criterion %2d: %s [%.1fs]" % ("PASS" if ok else "FAIL", number, text,
                                                 time.time() - started)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _emit


def test_criterion_01_mean_coverage(emit):
    t0 = time.time()
    G = 200.0
    st = estimate_ocean(UNIT.spec, G, 10_000, SEED)
    rho = rho_hom(UNIT)
    z = (st.mean / G - rho) / (st.mean_se / G)
    ok = abs(z) <= 3 and time.time() - t0 < 30
    assert emit(1, ok, "mean O_G/G = %.6f +- %.6f, rho = %.6f, z = %.2f"
                 % (st.mean / G, st.mean_se / G, rho, z), t0)


def test_criterion_02_two_point(emit):
    t0 = time.time()
    zs = [0.1, 0.5, 0.9, 2.0]
    reps = 100_000
    ind = ocean_indicators(UNIT.spec, [0.0] + zs, reps, SEED)
    parts = []
    ok = True
    for k, z in enumerate(zs, start=1):
        both = ind[:, 0] * ind[:, k]
        p = both.mean()
        se = np.sqrt(p * (1 - p) / reps)
        exact = r_two_point(UNIT.spec, 0.0, z)["total"]
        zscore = (p - exact) / se
        ok &= abs(zscore) <= 3
        parts.append("z=%.1f: %.5f vs %.5f (z=%+.2f)" % (z, exact, p, zscore))
    ok &= time.time() - t0 < 60
    assert emit(2, ok, "; ".join(parts), t0)


def test_criterion_03_variance_sandwich(emit):
    t0 = time.time()
    G = np.arange(1.0, 21.0)
    vc = variance_constants(UNIT)
    v = variance_exact(UNIT, G)
    lower, upper = vc.nu * G - vc.lam, vc.nu * G
    # Inequalities hold up to the quadrature tolerance.
    tol = DEFAULT_QUAD.abs_tol
    sandwich = bool(np.all(lower <= v + tol) and np.all(v <= upper + tol))
    gap = np.abs(v - lower)
    exact_id = bool(np.all(gap < 1e-6))
    ok = sandwich and exact_id and time.time() - t0 < 60
    worst = int(np.argmax(gap))
    assert emit(3, ok, "sandwich %s on G=1..20; |var - (nu G - lam)| max %.3g at G=%g (%.3g for G >= 2)"
                 % ("holds" if sandwich else "violated", gap[worst], G[worst], gap[1:].max()), t0)


def test_criterion_04_small_G(emit):
    t0 = time.time()
    G = 1e-3
    rho = rho_hom(UNIT)
    ratio = variance_exact(UNIT, G) / (rho * (1 - rho) * G * G)
    ok = 0.99 <= ratio <= 1.01
    assert emit(4, ok, "variance_exact / (rho (1 - rho) G^2) = %.6f at G = 1e-3" % ratio, t0)


def test_criterion_05_vanishing_clone_slope(emit):
    t0 = time.time()
    ok = True
    parts = []
    for name, law in (("L=1", Deterministic(1.0)), ("L~Exp(1)", Exponential(1.0))):
        p = HomogeneousParams(1e-3, 1.0, law)
        slope = variance_constants(p).nu / p.kappa
        target = nu_vanishing(p) / p.kappa
        rel = slope / target - 1
        ok &= abs(rel) <= 0.05
        parts.append("%s: nu/kappa = %.5f vs alpha^-2 E phi(alpha L) = %.5f (%+.1f%%)"
                     % (name, slope, target, 100 * rel))
    ok &= time.time() - t0 < 120
    assert emit(5, ok, "; ".join(parts), t0)


def test_criterion_06_limiting_remarks(emit):
    t0 = time.time()
    checks = []
    p = HomogeneousParams(1.0, 1.0, Deterministic(0.05))
    checks.append(("nu / (alpha kappa E L^3 / 3), L=0.05",
                   variance_constants(p).nu / limit_asymptotics(p)["nu_smallL3"], 0.10))
    p = HomogeneousParams(1e-3, 1.0, Deterministic(1.0))
    checks.append(("(1 - rho) / (kappa E L e^{-alpha L}), kappa=1e-3",
                   (1 - rho_hom(p)) / limit_asymptotics(p)["ocean_deficit_smallKappa"], 0.10))
    p = HomogeneousParams(1.0, 1.0, Deterministic(0.01))
    checks.append(("(1 - rho) / (kappa E L), L=0.01",
                   (1 - rho_hom(p)) / limit_asymptotics(p)["ocean_deficit_smallL"], 0.10))
    ok = all(abs(r - 1) <= tol for _, r, tol in checks) and time.time() - t0 < 120
    assert emit(6, ok, "; ".join("%s = %.4f" % (n, r) for n, r, _ in checks), t0)


def test_criterion_07_dispersion(emit):
    t0 = time.time()
    clone = count_dispersion_test(UNIT.spec, 0.0, 100_000, SEED, variant="clone")
    anchored = count_dispersion_test(UNIT.spec, 0.0, 100_000, SEED + 1, variant="anchored")
    ok = clone.p_value > 0.01 and anchored.passed and time.time() - t0 < 60
    assert emit(7, ok, "clone counts chi-square p = %.3f; anchored variance/mean = %.4f, z = %.1f"
                 % (clone.p_value, anchored.statistic, anchored.z_score), t0)


def test_criterion_08_fkg(emit):
    t0 = time.time()
    spec = ModelSpec(PiecewiseConstant([-0.5, 0.5], [0.6, 1.5, 0.9]),
                     PiecewiseConstant([0.0], [1.3, 0.7]), Exponential(1.0))
    grid = np.linspace(-1.5, 1.5, 10)
    z, zp = np.meshgrid(grid, grid)
    r = r_two_point(spec, z, zp)
    worst = float(np.min(r["total"] - r["r_z"] * r["r_zp"]))
    rep = fkg_test(UNIT.spec, 0.0, 0.3, 100_000, SEED)
    ok = worst >= -1e-8 and rep.z_score > 3 and time.time() - t0 < 60
    assert emit(8, ok, "min r(z,z') - r(z) r(z') on 10x10 grid = %.3g; MC difference at 0.3 = %.5f, z = %.1f"
                 % (worst, rep.statistic, rep.z_score), t0)


def test_criterion_09_clt(emit):
    t0 = time.time()
    vc = variance_constants(UNIT)
    clt = clt_test(UNIT.spec, 500.0, 2000, SEED, rho=vc.rho, nu=vc.nu)
    wien = wiener_covariance_test(UNIT.spec, 500.0, [(0.5, 1.0)], 2000, SEED, rho=vc.rho, nu=vc.nu)
    cov, se = wien.details["covariances"][0], wien.details["stderrs"][0]
    ok = clt.p_value > 0.01 and abs(cov - 0.5) <= 3 * se and time.time() - t0 < 300
    assert emit(9, ok, "KS p = %.3f; Cov(Theta(0.5), Theta(1)) = %.4f +- %.4f"
                 % (clt.p_value, cov, se), t0)


def test_criterion_10_reparametrization(emit):
    t0 = time.time()
    hom = left_end_equivalence_test(ModelSpec(Constant(1.5), Constant(1.0), Exponential(1.0)),
                                    (0.0, 10.0), reps=200, seed=SEED)
    piece = ModelSpec(PiecewiseConstant([0.0, 1.0, 2.0], [0.0, 1.0, 2.0, 0.0]), Constant(1.0),
                      Deterministic(1.0))
    inh = left_end_equivalence_test(piece, (-1.0, 3.0), reps=2000, seed=SEED)
    ok = hom.p_value > 0.01 and inh.p_value > 0.01 and time.time() - t0 < 60
    assert emit(10, ok, "homogeneous p = %.3f; piecewise 1/2 blocks p = %.3f" % (hom.p_value, inh.p_value), t0)


def test_criterion_11_inhomogeneous_envelope(emit):
    t0 = time.time()
    G = 200.0
    cuts = np.arange(5.0, G, 5.0)
    kappas = np.resize([0.5, 1.2, 2.0, 0.8], cuts.size + 1)
    alphas = np.resize([2.0, 0.5, 1.0, 1.6, 0.7], cuts.size + 1)
    spec = ModelSpec(PiecewiseConstant(cuts, kappas), PiecewiseConstant(cuts + 2.5, alphas),
                     Deterministic(1.0))
    b = inhomogeneous_bounds(InhomogeneousBounds(0.5, 2.0, 0.5, 2.0, Deterministic(1.0), Deterministic(1.0)))
    st = estimate_ocean(spec, G, 5000, SEED)
    m, ms = st.mean / G, st.mean_se / G
    v, vs = st.variance / G, st.variance_se / G
    ok = (b["rho_minus"] - 3 * ms <= m <= b["rho_plus"] + 3 * ms
          and b["nu_minus"] - 3 * vs <= v <= b["nu_plus"] + 3 * vs
          and time.time() - t0 < 120)
    assert emit(11, ok, "mean/G = %.4f in [%.4f, %.4f]; var/G = %.4f in [%.3g, %.3g]"
                 % (m, b["rho_minus"], b["rho_plus"], v, b["nu_minus"], b["nu_plus"]), t0)


def test_criterion_12_determinism(tmp_path, emit):
    t0 = time.time()
    cfg = tmp_path / "sim.yaml"
    cfg.write_text("model: {clones: {kind: constant, rate: 1.0}, anchors: {kind: constant, rate: 1.0},\n"
                   "        lengths: {kind: exponential, param1: 1.0}}\n"
                   "run: {G: 100, reps: 2000, seed: %d}\n" % SEED)
    outs = []
    for threads in (1, 4, 1, 4):
        res = subprocess.run([sys.executable, "-m", "physmap.cli", "simulate", "--config", str(cfg),
                              "--threads", str(threads)], capture_output=True)
        assert res.returncode == 0, res.stderr
        outs.append(res.stdout)
    ok = len(set(outs)) == 1
    assert emit(12, ok, "simulate output byte-identical across threads {1, 4} (%d bytes)" % len(outs[0]), t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
