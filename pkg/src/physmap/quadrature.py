"""Vectorized adaptive Gauss-Kronrod quadrature.

Every routine here integrates a *batch* of one-dimensional integrals at once.
The integrand is called as ``f(x, idx)`` where ``x`` has shape ``(P, 21)``
(the Kronrod nodes of ``P`` pending subintervals) and ``idx`` has shape
``(P,)`` and names the component each subinterval belongs to.  It must
return an array of shape ``(P, 21)`` or ``(P, 21, k)`` for vector-valued
integrands.  Nesting is done by calling :func:`integrate` from inside an
integrand with one component per outer node, which keeps all work in numpy.

All intervals must be finite; semi-infinite integrals are truncated by the
callers, who know the tail envelopes of their integrands.
"""

import numpy as np

from .errors import NumericError

# QUADPACK qk21 abscissae/weights (positive half, descending).
_XGK_HALF = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WGK_HALF = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980519358,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG_HALF = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

XGK = np.concatenate([-_XGK_HALF[:-1], _XGK_HALF[::-1]])
WGK = np.concatenate([_WGK_HALF[:-1], _WGK_HALF[::-1]])
# Gauss nodes sit at odd positions of the positive half (xgk[1], xgk[3], ...).
WG = np.zeros(21)
_gauss_pos = [1, 3, 5, 7, 9]
for _k, _p in enumerate(_gauss_pos):
    WG[_p] = _WG_HALF[_k]
    WG[20 - _p] = _WG_HALF[_k]
del _k, _p

_EPS = np.finfo(float).eps
_MIN_REL_WIDTH = 1e-13

DEFAULT_ABS_TOL = 1e-9
DEFAULT_REL_TOL = 1e-8
DEFAULT_MAX_SUBDIV = 2 ** 14


def _tolerances(quad):
    if quad is None:
        return DEFAULT_ABS_TOL, DEFAULT_REL_TOL, DEFAULT_MAX_SUBDIV
    return quad.abs_tol, quad.rel_tol, quad.max_subdiv


def _initial_segments(lo, hi, points):
    m = lo.size
    if points is None:
        keep = hi > lo
        comp = np.nonzero(keep)[0]
        return lo[keep].copy(), hi[keep].copy(), comp
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = np.broadcast_to(pts, (m, pts.size))
    pts = np.array(pts, dtype=float)
    inside = (pts > lo[:, None]) & (pts < hi[:, None])
    pts[~inside] = np.nan
    edges = np.concatenate([lo[:, None], pts, hi[:, None]], axis=1)
    edges.sort(axis=1)  # nan sorts last
    left = edges[:, :-1]
    right = edges[:, 1:]
    ok = np.isfinite(left) & np.isfinite(right) & (right > left)
    rows, _ = np.nonzero(ok)
    return left[ok], right[ok], rows


def integrate(f, lo, hi, quad=None, points=None, raise_on_failure=True):
    """Integrate a batch of components ``f(., i)`` over ``[lo[i], hi[i]]``.

    Parameters
    ----------
    f : callable
        ``f(x, idx)`` as described in the module docstring.
    lo, hi : array_like
        Finite integration limits, broadcast against each other.  Components
        with ``hi <= lo`` integrate to zero.
    quad : QuadConfig-like, optional
        Object with ``abs_tol``, ``rel_tol`` and ``max_subdiv``.
    points : array_like, optional
        Interior breakpoints, shape ``(k,)`` or ``(m, k)``; NaN entries and
        points outside ``(lo, hi)`` are ignored.

    Returns
    -------
    values, errors : ndarray
        ``values`` has shape ``(m,)`` or ``(m, k)``; ``errors`` has shape ``(m,)``.
    """
    abs_tol, rel_tol, max_subdiv = _tolerances(quad)
    lo, hi = np.broadcast_arrays(np.atleast_1d(np.asarray(lo, dtype=float)),
                                 np.atleast_1d(np.asarray(hi, dtype=float)))
    lo = lo.ravel().copy()
    hi = hi.ravel().copy()
    m = lo.size
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise NumericError("integration limits must be finite")
    span = np.where(hi > lo, hi - lo, 1.0)

    seg_lo, seg_hi, seg_idx = _initial_segments(lo, hi, points)
    acc = None
    err_acc = np.zeros(m)
    nsub = np.bincount(seg_idx, minlength=m).astype(np.int64)
    failed = np.zeros(m, dtype=bool)

    while seg_lo.size:
        half = 0.5 * (seg_hi - seg_lo)
        mid = 0.5 * (seg_hi + seg_lo)
        x = mid[:, None] + half[:, None] * XGK[None, :]
        fx = np.asarray(f(x, seg_idx), dtype=float)
        if fx.shape[:2] != x.shape:
            fx = np.broadcast_to(fx, x.shape + fx.shape[2:])
        if not np.all(np.isfinite(fx)):
            raise NumericError("integrand produced non-finite values")
        extra = fx.shape[2:]
        if acc is None:
            acc = np.zeros((m,) + extra)
        wk = WGK.reshape((1, 21) + (1,) * len(extra))
        wg = WG.reshape((1, 21) + (1,) * len(extra))
        hh = half.reshape((-1,) + (1,) * len(extra))
        resk = hh * np.sum(wk * fx, axis=1)
        resg = hh * np.sum(wg * fx, axis=1)
        mean = np.sum(wk * fx, axis=1) / 2.0
        resabs = np.abs(hh) * np.sum(wk * np.abs(fx), axis=1)
        resasc = np.abs(hh) * np.sum(wk * np.abs(fx - mean[:, None]), axis=1)
        abserr = np.abs(resk - resg)
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(resasc > 0,
                              resasc * np.minimum(1.0, (200.0 * abserr / np.where(resasc > 0, resasc, 1.0)) ** 1.5),
                              abserr)
        scaled = np.maximum(scaled, 50 * _EPS * resabs)
        if extra:
            seg_err = scaled.reshape(scaled.shape[0], -1).max(axis=1)
            seg_mag = np.abs(resk).reshape(resk.shape[0], -1)
        else:
            seg_err = scaled
            seg_mag = np.abs(resk)[:, None]

        # Current estimate of each component's magnitude sets its tolerance.
        total = np.abs(acc).reshape(m, -1).copy()
        np.add.at(total, seg_idx, seg_mag)
        tol = np.maximum(abs_tol, rel_tol * total.max(axis=1))
        share = tol[seg_idx] * (2.0 * half) / span[seg_idx]
        tiny = 2.0 * half <= _MIN_REL_WIDTH * np.maximum(1.0, np.abs(mid))
        over = nsub[seg_idx] >= max_subdiv
        done = (seg_err <= share) | tiny | over
        failed[seg_idx[done & ~(seg_err <= share)]] = True

        np.add.at(acc, seg_idx[done], resk[done])
        np.add.at(err_acc, seg_idx[done], seg_err[done])

        todo = ~done
        if not np.any(todo):
            break
        lo_t, hi_t, idx_t = seg_lo[todo], seg_hi[todo], seg_idx[todo]
        mid_t = 0.5 * (lo_t + hi_t)
        seg_lo = np.concatenate([lo_t, mid_t])
        seg_hi = np.concatenate([mid_t, hi_t])
        seg_idx = np.concatenate([idx_t, idx_t])
        nsub += np.bincount(idx_t, minlength=m)

    if acc is None:
        # Every interval was empty; probe once for the output shape.
        probe = np.asarray(f(np.full((1, 21), lo[0] if m else 0.0), np.zeros(1, dtype=int)), dtype=float)
        acc = np.zeros((m,) + probe.shape[2:])
    if raise_on_failure and np.any(failed):
        tot = np.abs(acc).reshape(m, -1).max(axis=1)
        tol = np.maximum(abs_tol, rel_tol * tot)
        bad = failed & (err_acc > 10 * tol)
        if np.any(bad):
            raise NumericError(
                "adaptive quadrature did not converge on %d component(s)" % int(bad.sum()),
                error_estimate=float(err_acc[bad].max()))
    return acc, err_acc


def integrate_scalar(f, lo, hi, quad=None, points=None):
    """Integrate a plain vectorized function ``f(x)`` over one interval."""
    val, err = integrate(lambda x, idx: f(x), lo, hi, quad=quad, points=points)
    return float(val[0]), float(err[0])


def cumulative(f, lo, uppers, owner, quad=None):
    """Evaluate ``F(u) = integral of f(., owner) from lo[owner] to u`` for many ``u``.

    Each owner's upper limits are sorted and the integral is accumulated over
    consecutive gaps, so the cost is one short integral per requested point
    rather than one full-length integral.  Upper limits below ``lo[owner]``
    yield zero.
    """
    uppers = np.asarray(uppers, dtype=float).ravel()
    owner = np.asarray(owner).ravel()
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    n = uppers.size
    if n == 0:
        return np.zeros(0)
    u = np.maximum(uppers, lo[owner])
    order = np.lexsort((u, owner))
    u_s = u[order]
    o_s = owner[order]
    first = np.ones(n, dtype=bool)
    first[1:] = o_s[1:] != o_s[:-1]
    prev = np.empty(n)
    prev[first] = lo[o_s[first]]
    prev[~first] = u_s[:-1][~first[1:]]
    pieces, _ = integrate(lambda x, i: f(x, o_s[i]), prev, u_s, quad=quad)
    # Restart the running sum at each owner boundary.
    csum = np.cumsum(pieces)
    starts = np.nonzero(first)[0]
    base = np.repeat(csum[starts] - pieces[starts], np.diff(np.append(starts, n)))
    out = np.empty(n)
    out[order] = csum - base
    return out
