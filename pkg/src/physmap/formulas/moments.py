"""Moments of the ocean length of order up to three by randomized quasi-Monte Carlo.

``E(O_G^n)`` is ``G^n`` times the mean of ``r(z_1, ..., z_n)`` over uniform
points, and ``r`` is itself an expectation over the anchors nearest to the
points.  For sorted points ``z_1 < ... < z_n`` we draw

* the distance from ``z_1`` to the nearest anchor on its left and from
  ``z_n`` to the nearest anchor on its right (both exponential), and
* for each gap ``(z_k, z_{k+1})`` the distance ``E1`` from ``z_k`` to the
  first anchor on its right and ``E2`` from ``z_{k+1}`` to the last anchor
  on its left.  The gap holds no anchor if ``E1 >= d``, one anchor if
  ``E1 < d <= E1 + E2`` and at least two otherwise.

Given the anchors, the points are all in the ocean iff no clone covers both a
point and an anchor.  Such a clone covers some adjacent (point, anchor) pair
of the merged sorted sequence, and a clone covering two such pairs covers
everything between them.  The Poisson measure of the union is therefore the
telescoping sum over mixed adjacent pairs ``(e_j, e_{j+1})`` of
``E(e_j, e_{j+1}) - E(e_p, e_{j+1})``, where ``e_p`` is the left end of the
previous mixed pair.  The classes of the gaps split the result into the
``3^{n-1}`` terms ``r_{i, i'}``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from ..errors import ArgumentError
from .homogeneous import HomogeneousParams, _params

_POINT, _ANCHOR = 0, 1


@dataclass(frozen=True)
class ThirdMoment:
    """``E(O_G^n)`` with a randomized-QMC standard error and its per-class terms."""
    value: float
    stderr: float
    n: int
    G: float
    terms: dict = field(default_factory=dict)
    term_stderr: dict = field(default_factory=dict)
    converged: bool = True


def _exponent(p, slots, kinds):
    """Poisson measure of the clones covering a point and an anchor.

    ``slots`` is ``(N, m)`` with NaN for absent entries; ``kinds`` gives the
    type of each column.
    """
    H = p.lengths.tail_integral
    N = slots.shape[0]
    total = np.zeros(N)
    last = np.full(N, np.nan)
    last_kind = np.full(N, -1)
    pair_left = np.full(N, np.nan)
    for j, kind in enumerate(kinds):
        e = slots[:, j]
        present = ~np.isnan(e)
        mixed = present & (last_kind >= 0) & (last_kind != kind)
        has_prev = mixed & ~np.isnan(pair_left)
        span = np.where(mixed, e - np.nan_to_num(last), 0.0)
        back = np.where(has_prev, e - np.nan_to_num(pair_left), 0.0)
        total += np.where(mixed, H(span), 0.0) - np.where(has_prev, H(back), 0.0)
        pair_left = np.where(mixed, last, pair_left)
        last = np.where(present, e, last)
        last_kind = np.where(present, kind, last_kind)
    return p.kappa * total


def _sample_values(p, G, n, u):
    """Integrand values and gap classes for a block of points ``u`` in ``[0, 1)^d``."""
    a = p.alpha
    u = np.clip(u, 1e-16, 1 - 1e-16)
    z = np.sort(G * u[:, :n], axis=1)
    expo = -np.log1p(-u[:, n:]) / a
    left = z[:, 0] - expo[:, 0]
    right = z[:, -1] + expo[:, 1]
    cols = [left, z[:, 0]]
    kinds = [_ANCHOR, _POINT]
    classes = np.zeros((u.shape[0], n - 1), dtype=int)
    for k in range(n - 1):
        d = z[:, k + 1] - z[:, k]
        e1, e2 = expo[:, 2 + 2 * k], expo[:, 3 + 2 * k]
        cls = np.where(e1 >= d, 0, np.where(e1 + e2 >= d, 1, 2))
        classes[:, k] = cls
        s = np.where(cls >= 1, z[:, k] + e1, np.nan)
        t = np.where(cls == 2, z[:, k + 1] - e2, np.nan)
        cols += [s, t, z[:, k + 1]]
        kinds += [_ANCHOR, _ANCHOR, _POINT]
    cols.append(right)
    kinds.append(_ANCHOR)
    slots = np.column_stack(cols)
    return np.exp(-_exponent(p, slots, kinds)), classes


def third_moment(params, G, n=3, log2_points=14, randomizations=16, seed=0, tol=None):
    """``E(O_G^n)`` for ``n`` in ``{1, 2, 3}`` by scrambled-Sobol integration.

    ``n = 1`` and ``n = 2`` serve as cross-checks against ``rho G`` and the
    exact variance.  When ``tol`` is given and the standard error exceeds
    it, the result is returned with ``converged=False``.
    """
    p = _params(params)
    if not G > 0:
        raise ArgumentError("G must be > 0")
    if n not in (1, 2, 3):
        raise ArgumentError("n must be 1, 2 or 3")
    if randomizations < 2:
        raise ArgumentError("need at least two randomizations for a standard error")
    labels = [tuple(int(c) for c in np.unravel_index(k, (3,) * (n - 1))) for k in range(3 ** (n - 1))]
    if p.alpha == 0 or p.kappa == 0:
        # Full ocean: the value is deterministic.  With anchors the classes still split it.
        return ThirdMoment(float(G) ** n, 0.0, n, float(G), converged=True)
    dim = n + 2 + 2 * (n - 1)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xC0FFEE]))
    means = np.zeros(randomizations)
    term_means = np.zeros((randomizations, len(labels)))
    for r in range(randomizations):
        sob = qmc.Sobol(d=dim, scramble=True, seed=int(rng.integers(2 ** 63)))
        vals, classes = _sample_values(p, G, n, sob.random_base2(log2_points))
        means[r] = vals.mean()
        code = np.zeros(vals.size, dtype=int)
        for k in range(n - 1):
            code = code * 3 + classes[:, k]
        term_means[r] = np.bincount(code, weights=vals, minlength=len(labels)) / vals.size
    scale = float(G) ** n
    value = scale * means.mean()
    stderr = scale * means.std(ddof=1) / np.sqrt(randomizations)
    terms = {lab: scale * term_means[:, k].mean() for k, lab in enumerate(labels)}
    term_se = {lab: scale * term_means[:, k].std(ddof=1) / np.sqrt(randomizations)
               for k, lab in enumerate(labels)}
    converged = tol is None or stderr <= tol
    return ThirdMoment(float(value), float(stderr), n, float(G), terms, term_se, converged)


__all__ = ["ThirdMoment", "third_moment", "HomogeneousParams"]
