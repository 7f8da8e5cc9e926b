"""Monte Carlo harness and statistical tests against the closed forms.

Every replication ``k`` draws from its own stream ``(seed, k)``, results are
stored by replication index and reduced in index order, so the output does
not depend on the number of worker threads.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ArgumentError
from .model import ModelSpec
from .sampler import (RngStream, anchored_mask, in_ocean, ocean_measure, pad_width, realize,
                      sample_anchors, sample_clones, sample_left_end_clones, theta_path)

THREADS_ENV = "PHYSMAP_THREADS"
_CHUNK = 256


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ArgumentError("%s must be an integer" % THREADS_ENV)


def run_replications(fn, reps, seed, threads=None):
    """``[fn(RngStream(seed, k)) for k in range(reps)]`` as an array, in index order."""
    if reps < 0:
        raise ArgumentError("reps must be >= 0")
    threads = threads or default_threads()
    chunks = [range(s, min(s + _CHUNK, reps)) for s in range(0, reps, _CHUNK)]

    def work(ks):
        return [fn(RngStream(seed, k)) for k in ks]

    if threads == 1 or len(chunks) <= 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    flat = [r for part in parts for r in part]
    return np.array(flat, dtype=float) if flat else np.zeros(0)


# --------------------------------------------------------------------------
# Ocean statistics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OceanStats:
    reps: int
    G: float
    seed: int
    mean: float
    variance: float
    third_central_moment: float
    mean_se: float
    variance_se: float
    third_se: float

    def to_dict(self):
        return asdict(self)


def _central(x, k):
    return float(np.mean((x - x.mean()) ** k))


def moment_stats(x):
    """Mean, unbiased variance, third central moment and their standard errors."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ArgumentError("need at least two replications")
    mean = float(np.sum(x) / n)
    m2, m3, m4, m6 = (_central(x, k) for k in (2, 3, 4, 6))
    s2 = m2 * n / (n - 1)
    var_se = np.sqrt(max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n)
    third_se = np.sqrt(max(m6 - m3 * m3 - 6 * m4 * m2 + 9 * m2 ** 3, 0.0) / n)
    return mean, s2, m3, np.sqrt(s2 / n), float(var_se), float(third_se)


def ocean_samples(spec: ModelSpec, G, reps, seed, threads=None, pad=None):
    """``O_G`` for each replication."""
    if G < 0:
        raise ArgumentError("G must be >= 0")
    pad = pad_width(spec) if pad is None else pad

    def one(stream):
        return ocean_measure(realize(spec, (0.0, G), stream, pad=pad).islands, (0.0, G))

    return run_replications(one, reps, seed, threads)


def estimate_ocean(spec: ModelSpec, G, reps, seed, threads=None) -> OceanStats:
    if reps < 2:
        raise ArgumentError("reps must be >= 2")
    x = ocean_samples(spec, G, reps, seed, threads)
    mean, var, m3, mse, vse, tse = moment_stats(x)
    return OceanStats(reps, float(G), seed, mean, var, m3, float(mse), vse, tse)


def ocean_indicators(spec: ModelSpec, points, reps, seed, threads=None):
    """Matrix ``(reps, len(points))`` of ocean indicators, one realization per row."""
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    window = (float(pts.min()), float(pts.max()))
    pad = pad_width(spec)

    def one(stream):
        rows_k = in_ocean(realize(spec, window, stream, pad=pad).islands, pts)
        return rows_k.astype(float)

    threads = threads or default_threads()
    # Vector-valued replications: evaluate per chunk to keep index order.
    chunks = [range(s, min(s + _CHUNK, reps)) for s in range(0, reps, _CHUNK)]

    def work(ks):
        return np.array([one(RngStream(seed, k)) for k in ks]).reshape(len(ks), pts.size)

    if threads == 1 or len(chunks) <= 1:
        rows = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(work, chunks))
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, pts.size))


def joint_ocean_probability(spec: ModelSpec, z, zp, reps, seed, threads=None):
    """MC estimate and standard error of ``P(z in O, z' in O)``."""
    ind = ocean_indicators(spec, [z, zp], reps, seed, threads)
    both = ind[:, 0] * ind[:, 1]
    p = float(both.mean())
    return p, float(np.sqrt(max(p * (1 - p), 0.0) / max(reps, 1)))


# --------------------------------------------------------------------------
# Test reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    p_value: Optional[float]
    z_score: Optional[float]
    passed: bool
    status: str  # "pass", "fail", "degenerate" or "inconclusive"
    seed: int
    reps: int
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _report(name, statistic, passed, seed, reps, p_value=None, z_score=None, status=None, **details):
    if p_value is not None:
        p_value = float(min(max(p_value, 0.0), 1.0))
    status = status or ("pass" if passed else "fail")
    return TestReport(name, float(statistic), p_value,
                      None if z_score is None else float(z_score), bool(passed), status,
                      int(seed), int(reps), {k: _plain(v) for k, v in details.items()})


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def fkg_test(spec: ModelSpec, z, zp, reps, seed, threads=None) -> TestReport:
    """Positive association of the ocean indicators at ``z`` and ``z'``."""
    if reps < 1000:
        raise ArgumentError("fkg_test needs reps >= 1000")
    ind = ocean_indicators(spec, [z, zp], reps, seed, threads)
    a, b = ind[:, 0], ind[:, 1]
    ma, mb = a.mean(), b.mean()
    diff = float(np.mean(a * b) - ma * mb)
    # Influence function of the covariance for the delta-method standard error.
    psi = (a - ma) * (b - mb)
    se = float(psi.std(ddof=1) / np.sqrt(reps))
    if se == 0:
        return _report("fkg", diff, diff >= 0, seed, reps, z_score=None,
                       status="degenerate", difference=diff, stderr=se)
    zs = diff / se
    return _report("fkg", diff, zs > -3.0, seed, reps, p_value=stats.norm.cdf(zs), z_score=zs,
                   difference=diff, stderr=se)


def _rho_nu(spec, rho, nu):
    from .formulas import HomogeneousParams, variance_constants
    if rho is None or nu is None:
        vc = variance_constants(HomogeneousParams.from_spec(spec))
        rho = vc.rho if rho is None else rho
        nu = vc.nu if nu is None else nu
    return rho, nu


def clt_test(spec: ModelSpec, G, reps, seed, rho=None, nu=None, threads=None) -> TestReport:
    """Kolmogorov-Smirnov test of ``(O_G - rho G) / sqrt(nu G)`` against N(0, 1)."""
    if not spec.homogeneous:
        raise ArgumentError("clt_test needs a homogeneous spec")
    rho, nu = _rho_nu(spec, rho, nu)
    x = ocean_samples(spec, G, reps, seed, threads)
    if nu <= 0 or np.ptp(x) == 0:
        return _report("clt", 0.0, True, seed, reps, status="degenerate",
                       reason="deterministic ocean")
    theta = (x - rho * G) / np.sqrt(nu * G)
    res = stats.kstest(theta, "norm", method="asymp")
    return _report("clt", res.statistic, res.pvalue > 0.01, seed, reps, p_value=res.pvalue,
                   theta_mean=float(theta.mean()), theta_var=float(theta.var(ddof=1)),
                   rho=rho, nu=nu)


def wiener_covariance_test(spec: ModelSpec, G, pairs, reps, seed, rho=None, nu=None,
                           threads=None) -> TestReport:
    """Empirical ``Cov(Theta_G(s), Theta_G(t))`` against ``min(s, t)`` for each pair."""
    if not spec.homogeneous:
        raise ArgumentError("wiener_covariance_test needs a homogeneous spec")
    pairs = [(float(s), float(t)) for s, t in pairs]
    if any(not (0 < s <= 1 and 0 < t <= 1) for s, t in pairs):
        raise ArgumentError("grid times must lie in (0, 1]")
    rho, nu = _rho_nu(spec, rho, nu)
    if nu <= 0:
        return _report("wiener_covariance", 0.0, True, seed, reps, status="degenerate")
    grid = np.array(sorted({v for pr in pairs for v in pr}))
    pad = pad_width(spec)
    chunks = [range(s, min(s + _CHUNK, reps)) for s in range(0, reps, _CHUNK)]

    def work(ks):
        return np.array([theta_path(spec, G, grid, RngStream(seed, k), rho, nu, pad=pad) for k in ks])

    threads = threads or default_threads()
    if threads == 1 or len(chunks) <= 1:
        paths = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            paths = list(ex.map(work, chunks))
    paths = np.concatenate(paths, axis=0)
    col = {v: k for k, v in enumerate(grid)}
    zs, covs, ses = [], [], []
    for s, t in pairs:
        a, b = paths[:, col[s]], paths[:, col[t]]
        prod = (a - a.mean()) * (b - b.mean())
        cov = float(prod.sum() / (reps - 1))
        se = float(prod.std(ddof=1) / np.sqrt(reps))
        covs.append(cov)
        ses.append(se)
        zs.append((cov - min(s, t)) / se if se > 0 else np.inf)
    worst = float(np.max(np.abs(zs)))
    p = min(1.0, len(pairs) * 2 * stats.norm.sf(worst))
    return _report("wiener_covariance", worst, worst <= 3.0, seed, reps, p_value=p, z_score=worst,
                   pairs=[list(pr) for pr in pairs], covariances=covs, stderrs=ses)


def _counts_at(spec, x, reps, seed, anchored, threads):
    pad = pad_width(spec)

    def one(stream):
        c = sample_clones(spec, (x, x), pad, stream)
        cover = (c.left_ends <= x) & (x <= c.right_ends)
        if anchored:
            a = sample_anchors(spec, (x, x), pad, stream)
            cover &= anchored_mask(c, a)
        return float(np.count_nonzero(cover))

    return run_replications(one, reps, seed, threads)


def _poisson_chisquare(counts):
    mu = counts.mean()
    kmax = int(counts.max())
    observed = np.bincount(counts.astype(int), minlength=kmax + 1).astype(float)
    expected = stats.poisson.pmf(np.arange(kmax + 1), mu) * counts.size
    expected[-1] += stats.poisson.sf(kmax, mu) * counts.size
    # Merge cells from the top until every expected count is at least 5.
    obs, exp = list(observed), list(expected)
    while len(exp) > 2 and exp[-1] < 5:
        e, o = exp.pop(), obs.pop()
        exp[-1] += e
        obs[-1] += o
    while len(exp) > 2 and exp[0] < 5:
        e, o = exp.pop(0), obs.pop(0)
        exp[0] += e
        obs[0] += o
    if len(exp) < 3:
        return 0.0, 1.0
    res = stats.chisquare(obs, exp, ddof=1)
    return float(res.statistic), float(res.pvalue)


def count_dispersion_test(spec: ModelSpec, x, reps, seed, variant="clone", threads=None) -> TestReport:
    """Poisson law of clone counts, or overdispersion of anchored-clone counts, at ``x``."""
    if variant not in ("clone", "anchored"):
        raise ArgumentError("variant must be 'clone' or 'anchored'")
    if reps < 10_000:
        raise ArgumentError("count_dispersion_test needs reps >= 10^4")
    counts = _counts_at(spec, x, reps, seed, variant == "anchored", threads)
    n = counts.size
    mean = counts.mean()
    name = "%s_dispersion" % variant
    if mean == 0:
        return _report(name, 0.0, False, seed, reps, status="inconclusive", reason="mean count is zero")
    m2, m3, m4 = (_central(counts, k) for k in (2, 3, 4))
    s2 = m2 * n / (n - 1)
    se = np.sqrt(max(m4 - m2 * m2 - 2 * m3 + m2, 0.0) / n)
    excess = s2 - mean
    zs = excess / se if se > 0 else 0.0
    ratio = s2 / mean
    if variant == "clone":
        chi2, p = _poisson_chisquare(counts)
        passed = abs(zs) <= 3.0 and p > 0.01
        return _report(name, ratio, passed, seed, reps, p_value=p, z_score=zs,
                       mean=mean, variance=s2, chi2=chi2)
    return _report(name, ratio, zs > 3.0, seed, reps, p_value=stats.norm.sf(zs), z_score=zs,
                   mean=mean, variance=s2)


def left_end_equivalence_test(spec: ModelSpec, window, boxes=(8, 6), reps=200, seed=0,
                              threads=None) -> TestReport:
    """Two-sample chi-square of (left end, length) between the two parametrizations."""
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ArgumentError("window must have positive length")
    pad = pad_width(spec)
    right_pairs, left_pairs = [], []
    for k in range(reps):
        stream = RngStream(seed, k)
        c = sample_clones(spec, (lo, hi), pad, stream)
        keep = (c.left_ends >= lo) & (c.left_ends <= hi)
        right_pairs.append(np.column_stack([c.left_ends[keep], c.lengths[keep]]))
        y, t = sample_left_end_clones(spec, (lo, hi), stream)
        left_pairs.append(np.column_stack([y, t]))
    A = np.concatenate(right_pairs) if right_pairs else np.zeros((0, 2))
    B = np.concatenate(left_pairs) if left_pairs else np.zeros((0, 2))
    if A.shape[0] == 0 and B.shape[0] == 0:
        return _report("left_end_equivalence", 0.0, True, seed, reps, p_value=1.0,
                       status="degenerate", reason="no clones in either sample")
    nx, ny = boxes
    xedges = np.linspace(lo, hi, nx + 1)
    pooled = np.concatenate([A[:, 1], B[:, 1]])
    yedges = np.unique(np.quantile(pooled, np.linspace(0, 1, ny + 1)))
    if yedges.size < 2:
        yedges = np.array([pooled.min() - 0.5, pooled.max() + 0.5])
    yedges[0], yedges[-1] = -np.inf, np.inf
    ha, _, _ = np.histogram2d(A[:, 0], A[:, 1], bins=[xedges, yedges])
    hb, _, _ = np.histogram2d(B[:, 0], B[:, 1], bins=[xedges, yedges])
    table = np.vstack([ha.ravel(), hb.ravel()])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return _report("left_end_equivalence", 0.0, True, seed, reps, p_value=1.0, status="degenerate")
    chi2, p, dof, _ = stats.chi2_contingency(table)
    return _report("left_end_equivalence", chi2, p > 0.01, seed, reps, p_value=p,
                   dof=int(dof), n_right=int(A.shape[0]), n_left=int(B.shape[0]))
