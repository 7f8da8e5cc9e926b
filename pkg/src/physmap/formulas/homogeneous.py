"""Closed reductions for the homogeneous model (constant kappa, alpha, one length law).

With ``H(u) = E[(L - u)^+]`` the probability that no clone covers both ends
of a stretch of length ``u`` is ``J(u) = exp(-kappa H(u))``.  The quantities
below are built from

``g(t) = int_0^inf alpha e^{-alpha x} J(x) J(t) / J(x + t) dx``,
``q(t) = alpha e^{-alpha t} g(t)``,

where ``q(t)`` is the density of the distance from a point in the ocean to
the nearest anchor on one side, weighted by the ocean event.  Then
``rho = int q``, ``rbar_1 = (q * q) / alpha`` and
``rbar_3(z) = P(S + T >= z)`` type integrals of ``q x q``.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.stats import gamma

from ..errors import ArgumentError, NumericError
from ..model import DEFAULT_QUAD, Constant, LengthLaw, ModelSpec, PiecewiseLengths, QuadConfig
from ..quadrature import cumulative, integrate


@dataclass(frozen=True)
class HomogeneousParams:
    kappa: float
    alpha: float
    lengths: LengthLaw

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ArgumentError("kappa must be finite and >= 0")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ArgumentError("alpha must be finite and >= 0")
        if isinstance(self.lengths, PiecewiseLengths):
            raise ArgumentError("homogeneous parameters need a single length law")

    @classmethod
    def from_spec(cls, spec: ModelSpec):
        if not spec.homogeneous:
            raise ArgumentError("model is not homogeneous")
        return cls(spec.clones.rate, spec.anchors.rate, spec.lengths)

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec(Constant(self.kappa), Constant(self.alpha), self.lengths)


def _params(p: Union[HomogeneousParams, ModelSpec]) -> HomogeneousParams:
    return HomogeneousParams.from_spec(p) if isinstance(p, ModelSpec) else p


def _H(p, u):
    return p.lengths.tail_integral(np.maximum(u, 0.0))


def J_hom(params, u):
    """``J(u) = exp(-kappa E[(L - u)^+])`` for ``u >= 0``."""
    p = _params(params)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ArgumentError("J_hom needs u >= 0")
    out = np.exp(-p.kappa * _H(p, u))
    return float(out) if out.ndim == 0 else out


def _log_ratio(p, x, y, gap=0.0):
    """``log(J(x) J(y) / J(x + gap + y))``, clamped to be <= 0."""
    return np.minimum(-p.kappa * (_H(p, x) + _H(p, y) - _H(p, x + y + gap)), 0.0)


def _kinks(p):
    return np.array(sorted(set(p.lengths.kinks)), dtype=float)


def _horizon(p, quad, power=0):
    """Truncation ``T`` with ``int_T^inf (alpha t)^power alpha e^{-alpha t} dt / power! = tail_mass``."""
    return float(gamma.isf(quad.tail_mass, power + 1)) / p.alpha


def _pts(p, shifts):
    """Length kinks and kinks shifted by ``-shift`` for each component."""
    k = _kinks(p)
    if k.size == 0:
        return None
    cols = [np.broadcast_to(k, (shifts[0].size, k.size))]
    for s in shifts:
        cols.append(k[None, :] - s[:, None])
    return np.concatenate(cols, axis=1)


def _g(p, t, quad):
    """``g(t)`` for an array ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    tf = t.ravel()
    if p.kappa == 0:
        return np.ones(t.shape)
    T = _horizon(p, quad)

    def f(x, i):
        return p.alpha * np.exp(-p.alpha * x + _log_ratio(p, x, tf[i][:, None]))

    vals, _ = integrate(f, np.zeros(tf.size), np.full(tf.size, T), quad=quad, points=_pts(p, [tf]))
    # Beyond T the ratio equals J(t) up to the neglected exponential mass.
    vals = vals + np.exp(-p.alpha * T) * np.exp(-p.kappa * _H(p, tf))
    return vals.reshape(t.shape)


def _q(p, t, quad):
    t = np.asarray(t, dtype=float)
    return p.alpha * np.exp(-p.alpha * t) * _g(p, t, quad)


def _q_moments(p, quad):
    """``(rho, m1, m2)``: the first three moments of ``q``."""
    T = _horizon(p, quad, power=2)
    inner = quad.tighter()

    def f(t, i):
        qq = _q(p, t, inner)
        return np.stack([qq, t * qq, t * t * qq], axis=-1)

    vals, _ = integrate(f, 0.0, T, quad=quad, points=_kinks(p) if _kinks(p).size else None)
    return tuple(float(v) for v in vals[0])


def rho_hom(params, quad=None):
    """Ocean fraction ``rho = P(0 in ocean)`` of the homogeneous model."""
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    if p.alpha == 0 or p.kappa == 0:
        return 1.0
    rho = _q_moments(p, quad)[0]
    return float(min(max(rho, 0.0), 1.0))


# --------------------------------------------------------------------------
# Correlation components
# --------------------------------------------------------------------------

def _rbar0(p, z, quad):
    """``rbar_0(z)``: both points in the ocean with no anchor between them."""
    z = np.asarray(z, dtype=float)
    zf = z.ravel()
    T = _horizon(p, quad)
    inner = quad.tighter()
    a = p.alpha

    def outer(x, i):
        xf = x.ravel()
        zz = np.repeat(zf[i], x.shape[1])

        def inner_f(y, j):
            return a * np.exp(-a * y + _log_ratio(p, xf[j][:, None], y, zz[j][:, None]))

        vals, _ = integrate(inner_f, np.zeros(xf.size), np.full(xf.size, T), quad=inner,
                            points=_pts(p, [xf + zz]))
        return a * np.exp(-a * x) * vals.reshape(x.shape)

    vals, _ = integrate(outer, np.zeros(zf.size), np.full(zf.size, T), quad=quad, points=_pts(p, [zf]))
    return (np.exp(-a * zf) * vals).reshape(z.shape)


def _qq_conv(p, w, quad):
    """``(q * q)(w) = int_0^w q(t) q(w - t) dt``."""
    wf = np.asarray(w, dtype=float).ravel()
    inner = quad.tighter()

    def f(t, i):
        ww = wf[i][:, None]
        return _q(p, t, inner) * _q(p, ww - t, inner)

    k = _kinks(p)
    # q(t) kinks at the length kinks k, and q(w - t) at t = w - k.
    pts = None if k.size == 0 else np.concatenate(
        [np.broadcast_to(k, (wf.size, k.size)), wf[:, None] - k[None, :]], axis=1)
    vals, _ = integrate(f, np.zeros(wf.size), wf, quad=quad, points=pts)
    return vals.reshape(np.shape(w))


def _overlap(p, z):
    """``1 / J(z)``: a clone spanning both points is excluded by both one-point factors."""
    return np.exp(p.kappa * _H(p, z))


def _D_top(p, quad):
    """Point beyond which ``1/J(z) - 1`` is below ``tail_mass``."""
    return p.lengths.truncation(quad.tail_mass / max(p.kappa, 1e-300))


def rbar(params, z, i, quad=None):
    """Component ``rbar_i(z)`` of the two-point ocean probability at distance ``z``.

    ``i`` is 0 (no anchor between the points), 1 (exactly one) or 2 (at
    least two).  ``i = 3`` gives ``rho^2 - rbar_2``, so that the covariance
    of the ocean indicators is ``rbar_0 + rbar_1 - rbar_3``.
    """
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ArgumentError("rbar needs z >= 0")
    if i not in (0, 1, 2, 3):
        raise ArgumentError("component index must be 0, 1, 2 or 3")
    if p.alpha == 0:
        raise ArgumentError("rbar needs alpha > 0")
    if p.kappa == 0:
        out = _rbar_trivial(p, z, i)
        return float(out) if np.ndim(out) == 0 else out
    if i == 0:
        out = _rbar0(p, z, quad)
    elif i == 1:
        out = _qq_conv(p, z, quad) / p.alpha * _overlap(p, z)
    else:
        rho2 = rho_hom(p, quad) ** 2
        r2 = (rho2 - _split_product(p, z, quad)) * _overlap(p, z)
        out = r2 if i == 2 else rho2 - r2
    return float(out) if np.ndim(out) == 0 else out


def _rbar_trivial(p, z, i):
    """kappa = 0: everything is ocean, and only the anchor count between the points matters."""
    az = p.alpha * z
    if i == 0:
        return np.exp(-az)
    if i == 1:
        return az * np.exp(-az)
    if i == 3:
        return np.exp(-az) * (1.0 + az)
    return 1.0 - np.exp(-az) * (1.0 + az)


def _split_product(p, z, quad):
    """``int int_{s + t >= z} q(s) q(t)``, as ``rho^2 - int_0^z q(s) Q(z - s) ds``.

    This is the part of ``rho^2`` where the anchors nearest to the two points
    (on the inner sides) are not in the right order.
    """
    zf = np.asarray(z, dtype=float).ravel()
    inner = quad.tighter()
    rho = rho_hom(p, quad)

    def f(s, i):
        owners = np.zeros(s.size, dtype=int)
        Q = cumulative(lambda t, o: _q(p, t, inner), np.zeros(1), (zf[i][:, None] - s).ravel(), owners, quad=inner)
        return _q(p, s, inner) * Q.reshape(s.shape)

    k = _kinks(p)
    vals, _ = integrate(f, np.zeros(zf.size), zf, quad=quad, points=k if k.size else None)
    return (rho * rho - vals).reshape(np.shape(z))


@dataclass(frozen=True)
class VarianceConstants:
    """Constants of ``Var(O_G) = nu G - lam + tau(G)``.

    ``nu_i`` and ``lambda_i`` are ``int 2 rbar_i`` and ``int 2 z rbar_i``;
    component 3 enters with a minus sign.
    """
    nu0: float
    nu1: float
    nu3: float
    lambda0: float
    lambda1: float
    lambda3: float
    rho: float = float("nan")

    @property
    def nu(self):
        return self.nu0 + self.nu1 - self.nu3

    @property
    def lam(self):
        return self.lambda0 + self.lambda1 - self.lambda3


def _D_tails(p, w, quad):
    """``(int_w^inf D, int_w^inf 2 z D)`` with ``D(z) = 1/J(z) - 1``, per entry of ``w``."""
    wf = np.asarray(w, dtype=float).ravel()
    top = _D_top(p, quad)

    def f(z, i):
        d = np.expm1(p.kappa * _H(p, z))
        return np.stack([d, 2 * z * d], axis=-1)

    k = _kinks(p)
    vals, _ = integrate(f, np.minimum(wf, top), np.full(wf.size, top), quad=quad,
                        points=k if k.size else None)
    return vals.reshape(np.shape(w) + (2,))


def variance_constants(params, quad=None) -> VarianceConstants:
    """Asymptotic variance rate ``nu`` and offset ``lam`` with their components."""
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    if p.alpha == 0:
        return VarianceConstants(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, rho=1.0)
    a = p.alpha
    if p.kappa == 0:
        return VarianceConstants(2 / a, 2 / a, 4 / a, 2 / a ** 2, 4 / a ** 2, 6 / a ** 2, rho=1.0)
    rho, m1, m2 = _q_moments(p, quad)
    inner = quad.tighter()
    kinks = _kinks(p)
    pts = np.concatenate([kinks, 2 * kinks]) if kinks.size else None

    def f0(z, i):
        r0 = _rbar0(p, z, inner)
        return np.stack([2 * r0, 2 * z * r0], axis=-1)

    v0, _ = integrate(f0, 0.0, _horizon(p, quad, power=1), quad=quad, points=pts)

    # Terms driven by K = q * q, the density of the sum of the two inner anchor distances.
    def fK(w, i):
        K = _qq_conv(p, w, inner)
        ov = _overlap(p, w)
        tails = _D_tails(p, w, inner)
        return np.stack([2 / a * K * ov, 2 / a * w * K * ov,
                         2 * K * tails[..., 0], K * tails[..., 1]], axis=-1)

    vK, _ = integrate(fK, 0.0, _horizon(p, quad, power=2), quad=quad, points=pts)
    nu0, lam0 = (float(v) for v in v0[0])
    nu1, lam1, cnu, clam = (float(v) for v in vK[0])
    nu3 = 4 * rho * m1 - cnu
    lam3 = 2 * rho * m2 + 2 * m1 * m1 - clam
    return VarianceConstants(nu0, nu1, nu3, lam0, lam1, lam3, rho=rho)


def variance_exact(params, G, quad=None):
    """``Var(O_G)`` on a window of length ``G`` from the two-point probabilities.

    Integrates ``2 (G - z)`` against the indicator covariance
    ``rbar_0 + rbar_1 - rbar_3``.  ``G`` may be an array.
    """
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    G = np.asarray(G, dtype=float)
    if np.any(G < 0):
        raise ArgumentError("G must be >= 0")
    if p.alpha == 0 or p.kappa == 0 or G.size == 0:
        out = np.zeros(G.shape)
        return float(out) if out.ndim == 0 else out
    Gf = G.ravel()
    Gmax = float(np.max(Gf))
    if Gmax == 0:
        out = np.zeros(G.shape)
        return float(out) if out.ndim == 0 else out
    # Small windows have variance of order G^2, so the outer tolerances scale
    # with G^2.  Inner values enter with weights of size at most G over a range
    # of length G, so a linear scaling suffices for them.
    scale = min(1.0, Gmax)
    q2 = QuadConfig(abs_tol=quad.abs_tol * scale ** 2, rel_tol=quad.rel_tol,
                    tail_mass=quad.tail_mass * scale ** 2, max_subdiv=quad.max_subdiv)
    inner = QuadConfig(abs_tol=quad.abs_tol * scale, rel_tol=quad.rel_tol,
                       tail_mass=quad.tail_mass * scale, max_subdiv=quad.max_subdiv).tighter()
    a = p.alpha
    kinks = _kinks(p)
    gg = Gf[None, None, :]

    def f0(z, i):
        r0 = _rbar0(p, z, inner)
        return 2.0 * np.maximum(gg - z[..., None], 0.0) * r0[..., None]

    pts0 = np.concatenate([Gf, kinks])
    s0, _ = integrate(f0, 0.0, Gmax, quad=q2, points=pts0)

    def mass_D(w):
        """``int_w^G 2 (G - z) D(z) dz`` for every node ``w`` and every ``G``."""
        wf = w.ravel()

        def fd(z, j):
            d = np.expm1(p.kappa * _H(p, z))
            return 2.0 * np.maximum(Gf[None, None, :] - z[..., None], 0.0) * d[..., None]

        top = min(Gmax, _D_top(p, inner))
        vals, _ = integrate(fd, np.minimum(wf, top), np.full(wf.size, top), quad=inner,
                            points=np.concatenate([Gf, kinks]))
        return vals.reshape(w.shape + (Gf.size,))

    def fK(w, i):
        K = _qq_conv(p, w, inner)[..., None]
        ww = w[..., None]
        k1 = (2.0 / a) * np.maximum(gg - ww, 0.0) * _overlap(p, w)[..., None]
        k3 = gg * gg - (gg - np.minimum(gg, ww)) ** 2
        return K * (k1 - k3 + mass_D(w))

    ptsK = np.concatenate([Gf, kinks, 2 * kinks])
    sK, _ = integrate(fK, 0.0, _horizon(p, q2, power=2) + Gmax, quad=q2, points=ptsK)
    out = (s0[0] + sK[0]).reshape(G.shape)
    if np.any(out < -10 * q2.abs_tol * max(1.0, Gmax)):
        raise NumericError("variance came out negative", error_estimate=float(-out.min()))
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def tau_bound(params, G):
    """Bound ``|tau(G)| <= 2 alpha^-2 (3 + alpha G) e^{-alpha G}``."""
    p = _params(params)
    if p.alpha <= 0:
        raise ArgumentError("tau_bound needs alpha > 0")
    G = np.asarray(G, dtype=float)
    out = 2.0 / p.alpha ** 2 * (3.0 + p.alpha * G) * np.exp(-p.alpha * G)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Small-kappa limits
# --------------------------------------------------------------------------

def _phi_series_coeffs(nmax=30):
    from math import factorial
    return [(-1) ** n * (1.0 / factorial(n) - 0.5 / factorial(n - 2)) for n in range(3, nmax)]


_PHI_COEFFS = np.array(_phi_series_coeffs())


def phi(x):
    """``phi(x) = x - 1 + e^{-x} (1 - x^2 / 2)``, accurate near zero."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ArgumentError("phi needs x >= 0")
    direct = x - 1.0 + np.exp(-x) * (1.0 - 0.5 * x * x)
    small = x < 0.5
    if np.any(small):
        xs = np.where(small, x, 0.0)
        series = np.zeros_like(xs)
        for c in _PHI_COEFFS[::-1]:
            series = series * xs + c
        series = series * xs ** 3
        direct = np.where(small, series, direct)
    return float(direct) if direct.ndim == 0 else direct


def _expect(law, f, quad):
    atoms = law.atoms()
    if atoms is not None:
        return float(sum(pr * f(np.array(v)) for v, pr in atoms))
    return float(law.expect(f, quad))


def nu_vanishing(params, quad=None):
    """First-order prediction ``kappa alpha^-2 E[phi(alpha L)]`` of ``nu`` for small kappa."""
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    if p.alpha <= 0:
        raise ArgumentError("nu_vanishing needs alpha > 0")
    a = p.alpha
    return p.kappa * _expect(p.lengths, lambda x: phi(a * x), quad) / a ** 2


def h_moment(params, n, quad=None):
    """``h_n = int_0^inf ((alpha x)^n / n!) e^{-alpha x} H(x) dx``."""
    from math import factorial
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    a = p.alpha
    T = _horizon(p, quad, power=n)
    upper = min(T, p.lengths.upper) if np.isfinite(p.lengths.upper) else T

    def f(x, i):
        return (a * x) ** n / factorial(n) * np.exp(-a * x) * _H(p, x)

    vals, _ = integrate(f, 0.0, upper, quad=quad, points=_kinks(p) if _kinks(p).size else None)
    return float(vals[0])


def nu_slope_h(params, quad=None):
    """Small-kappa slope of ``nu`` written as ``2 h_1 - h_2``."""
    p = _params(params)
    return 2 * h_moment(p, 1, quad) - h_moment(p, 2, quad)


def limit_asymptotics(params, quad=None):
    """First-order predictions in the limiting regimes.

    ``nu_smallL3``: ``alpha kappa E(L^3) / 3`` for short clones;
    ``ocean_deficit_smallKappa``: ``1 - rho`` to first order in kappa,
    ``kappa E(L e^{-alpha L})``; ``ocean_deficit_smallL``: ``kappa E(L)``.
    """
    p = _params(params)
    quad = quad or DEFAULT_QUAD
    a, k = p.alpha, p.kappa
    return {
        "nu_smallL3": a * k * _expect(p.lengths, lambda x: x ** 3, quad) / 3.0,
        "ocean_deficit_smallKappa": k * _expect(p.lengths, lambda x: x * np.exp(-a * x), quad),
        "ocean_deficit_smallL": k * p.lengths.mean,
    }


# --------------------------------------------------------------------------
# Mixing and inhomogeneous bounds
# --------------------------------------------------------------------------

def mixing_bound(params, n, quad=None):
    """Bounds on the mixing coefficient for blocks separated by ``n``.

    ``one_minus_J`` is ``1 - J(n)``, the chance that some clone spans the
    gap; ``tail_integral`` is ``kappa E[(L - n)^+]``, its first-order upper
    bound.  ``bound`` is the smaller of the two.
    """
    p = _params(params)
    if n < 0:
        raise ArgumentError("n must be >= 0")
    t = p.kappa * float(_H(p, np.array(float(n))))
    one_minus_J = -np.expm1(-t)
    second = p.lengths.moment(2) if hasattr(p.lengths, "moment") else np.inf
    return {"one_minus_J": float(one_minus_J), "tail_integral": float(t),
            "bound": float(min(one_minus_J, t)), "summable": bool(np.isfinite(second))}


@dataclass(frozen=True)
class InhomogeneousBounds:
    kappa_minus: float
    kappa_plus: float
    alpha_minus: float
    alpha_plus: float
    L_minus: LengthLaw
    L_plus: LengthLaw

    def __post_init__(self):
        if not (0 < self.kappa_minus <= self.kappa_plus < np.inf):
            raise ArgumentError("need 0 < kappa_minus <= kappa_plus < inf")
        if not (0 < self.alpha_minus <= self.alpha_plus < np.inf):
            raise ArgumentError("need 0 < alpha_minus <= alpha_plus < inf")
        grid = np.linspace(0.0, max(self.L_plus.support_bounds(DEFAULT_QUAD)[1],
                                    self.L_minus.support_bounds(DEFAULT_QUAD)[1]), 513)
        if np.any(self.L_minus.survival(grid) > self.L_plus.survival(grid) + 1e-12):
            raise ArgumentError("L_minus must be stochastically smaller than L_plus")


def inhomogeneous_bounds(b: InhomogeneousBounds, quad=None):
    """Uniform bounds on ``rho`` and ``nu`` for models sandwiched by ``b``.

    The ocean fraction is monotone in the parameters: more or longer clones
    and more anchors shrink it.
    """
    quad = quad or DEFAULT_QUAD
    rho_minus = rho_hom(HomogeneousParams(b.kappa_plus, b.alpha_plus, b.L_plus), quad)
    rho_plus = rho_hom(HomogeneousParams(b.kappa_minus, b.alpha_minus, b.L_minus), quad)
    nu_plus = 4.0 / b.alpha_minus
    nu_minus = ((1.0 - rho_plus) * rho_minus) ** 2 / (4.0 * b.kappa_plus)
    return {"rho_minus": rho_minus, "rho_plus": rho_plus,
            "nu_minus": nu_minus, "nu_plus": nu_plus}
