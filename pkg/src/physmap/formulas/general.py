"""Coverage and ocean probabilities for general (inhomogeneous) models.

Notation used throughout:

``E(x, y)``  expected number of clones covering both ``x <= y``, so that the
             probability that no clone covers both is ``J(x, y) = exp(-E(x, y))``;
``Lam(x)``   cumulative anchor measure, so ``A(x, y) = exp(-(Lam(y) - Lam(x)))``.

The ocean probabilities are integrals over the positions of the anchors
closest to the points of interest.  Anchor-side integrals are truncated where
the anchor measure of the skipped stretch exceeds ``log(1 / tail_mass)``,
which bounds the neglected probability by ``tail_mass``.
"""

import numpy as np

from ..errors import ArgumentError, NumericError
from ..model import DEFAULT_QUAD, Constant, Density, PiecewiseConstant, PiecewiseLengths, as_pieces
from ..quadrature import cumulative, integrate


# --------------------------------------------------------------------------
# Clone exponent E(x, y)
# --------------------------------------------------------------------------

def _clone_pieces(spec):
    """Partition of the line into pieces of constant clone rate and length law."""
    try:
        return _PIECES_CACHE[spec]
    except (KeyError, TypeError):
        pass
    pieces = _build_clone_pieces(spec)
    try:
        if len(_PIECES_CACHE) > 64:
            _PIECES_CACHE.clear()
        _PIECES_CACHE[spec] = pieces
    except TypeError:  # unhashable spec
        pass
    return pieces


_PIECES_CACHE = {}


def _build_clone_pieces(spec):
    c = spec.clones
    lbps, laws = as_pieces(spec.lengths)
    edges = sorted(set(tuple(c.breakpoints) + tuple(lbps)))
    bounds = [-np.inf] + edges + [np.inf]
    pieces = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        probe = a + 0.5 if not np.isfinite(b) else (b - 0.5 if not np.isfinite(a) else 0.5 * (a + b))
        rate = float(c.rate_at(np.array([probe]))[0])
        law = spec.lengths.law_at(probe) if isinstance(spec.lengths, PiecewiseLengths) else laws[0]
        pieces.append((a, b, rate, law))
    return pieces


def _law_truncation(spec, quad):
    lbps, laws = as_pieces(spec.lengths)
    scale = max(spec.clones.sup, 1e-300)
    return max(law.truncation(quad.tail_mass / scale) for law in laws)


def clone_exponent(spec, x, y, quad=None):
    """``E(x, y) = int_y^inf P(L_t >= t - x) c(dt)`` for ``x <= y`` (vectorized)."""
    quad = quad or DEFAULT_QUAD
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(x > y + 1e-12 * np.maximum(1.0, np.abs(y))):
        raise ArgumentError("clone_exponent needs x <= y")
    y = np.maximum(x, y)
    if isinstance(spec.clones, Density):
        return _clone_exponent_density(spec, x, y, quad)
    out = np.zeros(x.shape)
    for a, b, rate, law in _clone_pieces(spec):
        if rate == 0.0:
            continue
        start = np.maximum(y, a)
        active = start < b
        if not np.any(active):
            continue
        upper = law.tail_integral(np.where(active, start - x, 0.0))
        lower = law.tail_integral(b - x) if np.isfinite(b) else 0.0
        out = out + np.where(active, rate * (upper - lower), 0.0)
    return out


def _clone_exponent_density(spec, x, y, quad):
    shape = x.shape
    xf, yf = x.ravel(), y.ravel()
    top = xf + _law_truncation(spec, quad)
    lbps, laws = as_pieces(spec.lengths)
    c = spec.clones

    def f(t, i):
        u = t - xf[i][:, None]
        if isinstance(spec.lengths, PiecewiseLengths):
            piece = spec.lengths.piece(t)
            s = np.zeros(t.shape)
            for k, law in enumerate(laws):
                s = np.where(piece == k, law.survival(np.maximum(u, 0.0)), s)
        else:
            s = laws[0].survival(np.maximum(u, 0.0))
        return c.rate_at(t) * s

    kinks = np.array(sorted(set(k for law in laws for k in law.kinks)))
    fixed = np.array(list(c.breakpoints) + list(lbps))
    pts = np.concatenate([np.broadcast_to(fixed, (xf.size, fixed.size)),
                          xf[:, None] + kinks[None, :]], axis=1) if (fixed.size or kinks.size) else None
    vals, _ = integrate(f, yf, np.maximum(top, yf), quad=quad, points=pts)
    return vals.reshape(shape)


def J_general(spec, x, y, quad=None):
    """Probability that no single clone covers both ``x`` and ``y`` (``x <= y``)."""
    e = clone_exponent(spec, x, y, quad)
    if not np.all(np.isfinite(e)):
        raise NumericError("clone exponent diverged")
    out = np.exp(-e)
    return float(out) if out.ndim == 0 else out


def _log_ratio(spec, x, first, last, y, quad):
    """``log(J(x, first) J(last, y) / J(x, y))``, clamped to be <= 0."""
    v = -clone_exponent(spec, x, first, quad) - clone_exponent(spec, last, y, quad) \
        + clone_exponent(spec, x, y, quad)
    return np.minimum(v, 0.0)


# --------------------------------------------------------------------------
# Anchors
# --------------------------------------------------------------------------

def anchor_cumulative(spec, x, quad=None):
    return np.asarray(spec.anchors.cumulative(np.asarray(x, dtype=float), quad), dtype=float)


def A_gap(spec, x, y, quad=None):
    """Probability of no anchor in ``[x, y]``."""
    if np.any(np.asarray(x) > np.asarray(y)):
        raise ArgumentError("A_gap needs x <= y")
    out = np.exp(-(anchor_cumulative(spec, y, quad) - anchor_cumulative(spec, x, quad)))
    return float(out) if out.ndim == 0 else out


def _anchor_reach(spec, z, direction, quad):
    """Point ``w`` beyond ``z`` with anchor mass of ``[z, w]`` equal to ``log(1/tail_mass)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    target = np.log(1.0 / quad.tail_mass)
    a = spec.anchors
    if isinstance(a, Constant):
        if a.rate == 0:
            raise NumericError("anchor intensity is zero")
        return z + direction * target / a.rate
    sup = a.sup
    if sup == 0:
        raise NumericError("anchor intensity is zero")
    lam_z = anchor_cumulative(spec, z, quad)
    if isinstance(a, PiecewiseConstant):
        w = a.inverse_cumulative(lam_z + direction * target, direction)
        if np.any(~np.isfinite(w)):
            raise NumericError("anchor measure is finite on a half-line; ocean formulas need "
                               "anchors on both sides almost surely")
        return w

    def mass(d):
        return direction * (anchor_cumulative(spec, z + direction * d, quad) - lam_z)

    d_hi = np.full(z.shape, target / sup)
    for _ in range(60):
        short = mass(d_hi) < target
        if not np.any(short):
            break
        d_hi = np.where(short, 2.0 * d_hi, d_hi)
    else:
        raise NumericError("anchor measure is finite on a half-line; ocean formulas need "
                           "anchors on both sides almost surely")
    d_lo = np.zeros(z.shape)
    for _ in range(80):
        mid = 0.5 * (d_lo + d_hi)
        short = mass(mid) < target
        d_lo = np.where(short, mid, d_lo)
        d_hi = np.where(short, d_hi, mid)
    return z + direction * d_hi


def _breaks(spec, base=None):
    """Fixed breakpoints plus length kinks offset from ``base`` (per component)."""
    fixed = list(spec.clones.breakpoints) + list(spec.anchors.breakpoints) + list(as_pieces(spec.lengths)[0])
    _, laws = as_pieces(spec.lengths)
    kinks = sorted(set(k for law in laws for k in law.kinks))
    fixed = np.array(fixed, dtype=float)
    if base is None:
        return fixed if fixed.size else None
    cols = [np.broadcast_to(fixed, (base[0][0].size, fixed.size))]
    for b, sign in base:
        cols.append(b[:, None] + sign * np.array(kinks)[None, :])
    out = np.concatenate(cols, axis=1)
    return out if out.shape[1] else None


def _no_anchors(spec):
    return isinstance(spec.anchors, Constant) and spec.anchors.rate == 0


# --------------------------------------------------------------------------
# Mean counts
# --------------------------------------------------------------------------

def mean_clone_count(spec, x, quad=None):
    """E(n_C(x)): mean number of clones covering ``x``."""
    out = clone_exponent(spec, x, x, quad)
    return float(out) if np.ndim(out) == 0 else out


def mean_anchored_count(spec, x, quad=None):
    """E(n_A(x)): mean number of anchored clones covering ``x``."""
    quad = quad or DEFAULT_QUAD
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if _no_anchors(spec):
        return 0.0 if x.size == 1 else np.zeros(x.shape)
    lbps, laws = as_pieces(spec.lengths)
    c = spec.clones
    top = _law_truncation(spec, quad)
    inner = quad.tighter()

    def law_index(zz):
        if isinstance(spec.lengths, PiecewiseLengths):
            return spec.lengths.piece(zz)
        return np.zeros(zz.shape, dtype=int)

    def expectation(law, zz, xx):
        """E[(1 - exp(-a([z - L, z]))) 1{L >= z - x}] for one law."""
        lam_z = anchor_cumulative(spec, zz, quad)
        atoms = law.atoms()
        if atoms is not None:
            acc = np.zeros(zz.shape)
            for v, p in atoms:
                hit = v >= zz - xx
                acc += p * hit * -np.expm1(-(lam_z - anchor_cumulative(spec, zz - v, quad)))
            return acc
        zf, xf, lf = zz.ravel(), xx.ravel(), lam_z.ravel()
        _, t_top = law.support_bounds(quad)

        def g(t, j):
            lam_l = anchor_cumulative(spec, zf[j][:, None] - t, quad)
            return law.density(t) * -np.expm1(-(lf[j][:, None] - lam_l))

        vals, _ = integrate(g, zf - xf, np.maximum(t_top, zf - xf), quad=inner,
                            points=np.array(law.kinks) if law.kinks else None)
        return vals.reshape(zz.shape)

    def f(z, i):
        xx = np.broadcast_to(x[i][:, None], z.shape)
        out = np.zeros(z.shape)
        idx = law_index(z)
        for k, law in enumerate(laws):
            sel = idx == k
            if np.any(sel):
                out = np.where(sel, expectation(law, z, xx), out)
        return c.rate_at(z) * out

    kinks = sorted(set(kk for law in laws for kk in law.kinks))
    pts = _breaks(spec)
    extra = np.array([[xi + kk for kk in kinks] for xi in x]) if kinks else None
    if pts is not None and extra is not None:
        pts = np.concatenate([np.broadcast_to(pts, (x.size, pts.size)), extra], axis=1)
    elif extra is not None:
        pts = extra
    vals, _ = integrate(f, x, x + top, quad=quad, points=pts)
    return float(vals[0]) if vals.size == 1 else vals


# --------------------------------------------------------------------------
# One- and two-point ocean probabilities
# --------------------------------------------------------------------------

def _left_kernel(spec, z, s, quad):
    """``F(z, s) = int_{x <= z} J(x|z|s) A(x, s) a(dx)`` for ``s >= z`` (arrays of equal shape)."""
    zf, sf = np.ravel(z), np.ravel(s)
    lo = _anchor_reach(spec, zf, -1.0, quad)
    lam_s = anchor_cumulative(spec, sf, quad)

    def f(x, i):
        zz, ss = zf[i][:, None], sf[i][:, None]
        lr = _log_ratio(spec, x, zz, zz, ss, quad)
        return spec.anchors.rate_at(x) * np.exp(lr - (lam_s[i][:, None] - anchor_cumulative(spec, x, quad)))

    vals, _ = integrate(f, lo, zf, quad=quad, points=_breaks(spec, [(zf, -1.0), (sf, -1.0)]))
    return vals.reshape(np.shape(s))


def _right_kernel(spec, zp, t, quad):
    """``G(z', t) = int_{y >= z'} J(t|z'|y) A(t, y) a(dy)`` for ``t <= z'``."""
    zf, tf = np.ravel(zp), np.ravel(t)
    hi = _anchor_reach(spec, zf, 1.0, quad)
    lam_t = anchor_cumulative(spec, tf, quad)

    def f(y, i):
        zz, tt = zf[i][:, None], tf[i][:, None]
        lr = _log_ratio(spec, tt, zz, zz, y, quad)
        return spec.anchors.rate_at(y) * np.exp(lr - (anchor_cumulative(spec, y, quad) - lam_t[i][:, None]))

    vals, _ = integrate(f, zf, hi, quad=quad, points=_breaks(spec, [(zf, 1.0), (tf, 1.0)]))
    return vals.reshape(np.shape(t))


def r_one_point(spec, z, quad=None):
    """P(z in ocean) by integrating over the nearest anchors on each side of ``z``."""
    quad = quad or DEFAULT_QUAD
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if _no_anchors(spec):
        out = np.ones(z.shape)
    else:
        out = _r_single(spec, z, quad)
    return float(out[0]) if out.size == 1 else out


def _r_single(spec, z, quad):
    inner = quad.tighter()
    hi = _anchor_reach(spec, z, 1.0, quad)

    def f(s, i):
        zz = np.broadcast_to(z[i][:, None], s.shape)
        return spec.anchors.rate_at(s) * _left_kernel(spec, zz, s, inner)

    vals, err = integrate(f, z, hi, quad=quad, points=_breaks(spec, [(z, 1.0)]))
    return np.clip(vals, 0.0, 1.0)


def _r_single_right(spec, zp, quad):
    inner = quad.tighter()
    lo = _anchor_reach(spec, zp, -1.0, quad)

    def f(t, i):
        zz = np.broadcast_to(zp[i][:, None], t.shape)
        return spec.anchors.rate_at(t) * _right_kernel(spec, zz, t, inner)

    vals, _ = integrate(f, lo, zp, quad=quad, points=_breaks(spec, [(zp, -1.0)]))
    return np.clip(vals, 0.0, 1.0)


def r_two_point(spec, z, zp, quad=None):
    """Joint ocean probability of ``z`` and ``z'`` with its decomposition.

    Returns a dict of arrays (scalars for scalar input) with keys ``r0``,
    ``r1``, ``r2``, ``r3``, ``total``, ``r_z`` and ``r_zp``:
    ``r0``/``r1``/``r2`` split by zero, one, or at least two anchors between
    the points.  ``r3`` is the part of ``r_z * r_zp`` where the nearest anchor
    right of ``z`` lies at or beyond the nearest anchor left of ``z'``, and
    ``r2 = (r_z * r_zp - r3) / J(z, z')``.
    """
    quad = quad or DEFAULT_QUAD
    z, zp = np.broadcast_arrays(np.atleast_1d(np.asarray(z, dtype=float)),
                                np.atleast_1d(np.asarray(zp, dtype=float)))
    lo_pt, hi_pt = np.minimum(z, zp), np.maximum(z, zp)
    scalar = np.ndim(z) == 1 and z.size == 1
    if _no_anchors(spec):
        ones, zeros = np.ones(lo_pt.shape), np.zeros(lo_pt.shape)
        res = dict(r0=ones, r1=zeros, r2=zeros, r3=zeros, total=ones, r_z=ones, r_zp=ones)
    else:
        # Each unordered pair is computed once.
        pairs, inverse = np.unique(np.column_stack([lo_pt.ravel(), hi_pt.ravel()]), axis=0,
                                   return_inverse=True)
        uniq = _two_point(spec, pairs[:, 0], pairs[:, 1], quad)
        res = {k: v[inverse.ravel()].reshape(lo_pt.shape) for k, v in uniq.items()}
    if np.any(res["r3"] < -10 * quad.abs_tol):
        raise NumericError("r3 came out negative", error_estimate=float(-res["r3"].min()))
    if scalar:
        return {k: float(v[0]) for k, v in res.items()}
    return res


def _two_point(spec, z, zp, quad):
    inner = quad.tighter()
    r_z = _r_single(spec, z, quad)
    r_zp = _r_single_right(spec, zp, quad)
    lam = lambda v: anchor_cumulative(spec, v, quad)  # noqa: E731

    # r0: no anchor between z and z'.
    xlo = _anchor_reach(spec, z, -1.0, quad)
    yhi = _anchor_reach(spec, zp, 1.0, quad)

    def r0_outer(x, i):
        xf = x.ravel()
        ii = np.repeat(i, x.shape[1])
        zz, zzp, yy_hi = z[ii], zp[ii], yhi[ii]
        lam_x = lam(xf)

        def r0_inner(y, j):
            xx = xf[j][:, None]
            lr = _log_ratio(spec, xx, zz[j][:, None], zzp[j][:, None], y, inner)
            return spec.anchors.rate_at(y) * np.exp(lr - (lam(y) - lam_x[j][:, None]))

        vals, _ = integrate(r0_inner, zzp, yy_hi, quad=inner,
                            points=_breaks(spec, [(zzp, 1.0), (xf, 1.0)]))
        return spec.anchors.rate_at(x) * vals.reshape(x.shape)

    r0, _ = integrate(r0_outer, xlo, z, quad=quad, points=_breaks(spec, [(z, -1.0), (zp, -1.0)]))

    # r1: exactly one anchor s in (z, z').
    def r1_f(s, i):
        zz = np.broadcast_to(z[i][:, None], s.shape)
        zzp = np.broadcast_to(zp[i][:, None], s.shape)
        return spec.anchors.rate_at(s) * _left_kernel(spec, zz, s, inner) * _right_kernel(spec, zzp, s, inner)

    r1, _ = integrate(r1_f, z, zp, quad=quad, points=_breaks(spec, [(z, 1.0), (zp, -1.0)]))

    # r3: leftmost anchor right of z (s) is at or beyond the rightmost anchor left of z' (t).
    tlo = _anchor_reach(spec, zp, -1.0, quad)
    shi = np.maximum(_anchor_reach(spec, z, 1.0, quad), z)

    def phi_integrand(t, owner):
        zz = np.broadcast_to(zp[owner][:, None], t.shape)
        return spec.anchors.rate_at(t) * _right_kernel(spec, zz, t, inner)

    def r3_f(s, i):
        u = np.minimum(s, zp[i][:, None])
        owners = np.broadcast_to(i[:, None], s.shape)
        phi = cumulative(phi_integrand, tlo, u.ravel(), owners.ravel(), quad=inner).reshape(s.shape)
        zz = np.broadcast_to(z[i][:, None], s.shape)
        return spec.anchors.rate_at(s) * _left_kernel(spec, zz, s, inner) * phi

    r3, _ = integrate(r3_f, z, shi, quad=quad, points=_breaks(spec, [(z, 1.0), (zp, 1.0)]))
    r3 = np.maximum(r3, 0.0)
    # With an anchor between the points, a clone covering [z, z'] is excluded
    # by both one-point factors; dividing by J(z, z') counts it only once.
    overlap = np.exp(clone_exponent(spec, z, zp, quad))
    r1 = overlap * r1
    r2 = overlap * (r_z * r_zp - r3)
    total = r0 + r1 + r2
    return dict(r0=r0, r1=r1, r2=r2, r3=r3, total=total, r_z=r_z, r_zp=r_zp)
