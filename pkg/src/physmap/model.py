"""Model description: intensity measures, clone-length laws and their reparametrizations.

Clones are intervals ``[x - t, x]`` whose right ends ``x`` form a Poisson
process of intensity ``c(dx)`` and whose lengths ``t`` are drawn from a law
that may depend on ``x``.  Anchors are an independent Poisson process of
intensity ``a(dx)``.  Everything here is immutable.
"""

from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np

from .errors import ArgumentError, NumericError
from .quadrature import integrate

_AUDIT_POINTS = 1024


@dataclass(frozen=True)
class QuadConfig:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8
    tail_mass: float = 1e-12
    max_subdiv: int = 2 ** 14

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.tail_mass, self.max_subdiv) <= 0:
            raise ArgumentError("quadrature settings must all be positive")
        if self.tail_mass >= self.abs_tol:
            raise ArgumentError("tail_mass must be smaller than abs_tol")

    def tighter(self, factor=1e-2):
        """Config for an inner integral nested inside one using ``self``."""
        return QuadConfig(self.abs_tol * factor, self.rel_tol, self.tail_mass * factor,
                          self.max_subdiv)


DEFAULT_QUAD = QuadConfig()


# --------------------------------------------------------------------------
# Intensity measures
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    rate: float

    def __post_init__(self):
        if not (self.rate >= 0 and np.isfinite(self.rate)):
            raise ArgumentError("rate must be finite and >= 0")

    @property
    def sup(self):
        return float(self.rate)

    @property
    def breakpoints(self):
        return ()

    def rate_at(self, x):
        return np.full(np.shape(x), float(self.rate))

    def cumulative(self, x, quad=None):
        """Signed measure of ``[0, x]``."""
        return self.rate * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Rate ``rates[0]`` on ``(-inf, b0)``, ``rates[k]`` on ``[b(k-1), bk)``, ``rates[-1]`` after the last break."""

    breakpoints: Tuple[float, ...]
    rates: Tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        rt = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rates", rt)
        if len(rt) != len(bp) + 1:
            raise ArgumentError("need len(rates) == len(breakpoints) + 1")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ArgumentError("breakpoints must be strictly increasing")
        if any(not (r >= 0 and np.isfinite(r)) for r in rt):
            raise ArgumentError("rates must be finite and >= 0")
        # Signed measure of [0, b] at each breakpoint, so that cumulative() is
        # a lookup plus one linear piece.
        b = np.array(bp)
        r = np.array(rt)
        edges = np.concatenate([[-np.inf], b, [np.inf]])
        knots = np.zeros(b.size)
        for k, rate in enumerate(rt):
            if rate > 0:
                knots += rate * (np.clip(b, edges[k], edges[k + 1]) - np.clip(0.0, edges[k], edges[k + 1]))
        object.__setattr__(self, "_b", b)
        object.__setattr__(self, "_r", r)
        object.__setattr__(self, "_knots", knots)

    @property
    def sup(self):
        return max(self.rates)

    def rate_at(self, x):
        k = np.searchsorted(self._b, np.asarray(x, dtype=float), side="right")
        return self._r[k]

    def cumulative(self, x, quad=None):
        """Signed measure of ``[0, x]`` (negative for ``x < 0``)."""
        x = np.asarray(x, dtype=float)
        if self._b.size == 0:
            return self._r[0] * x
        k = np.searchsorted(self._b, x, side="right")
        j = np.maximum(k - 1, 0)
        return self._knots[j] + self._r[k] * (x - self._b[j])

    def inverse_cumulative(self, v, side):
        """Point ``w`` with ``cumulative(w) = v``: the smallest such point for
        ``side = 1`` and the largest for ``side = -1``.  Returns NaN where the
        level is never reached."""
        v = np.asarray(v, dtype=float)
        b, r, K = self._b, self._r, self._knots
        if b.size == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(r[0] > 0, v / r[0], np.nan)
        j = np.searchsorted(K, v, side="left" if side > 0 else "right")
        # Piece j holds the crossing; anchor on its left breakpoint, or on b[0] for j = 0.
        ref = np.where(j == 0, 0, j - 1)
        rate = r[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = b[ref] + (v - K[ref]) / rate
        return np.where(rate > 0, w, np.nan)


@dataclass(frozen=True)
class Density:
    """Rate ``f(x)`` on ``support`` and zero outside; ``bound`` dominates ``f``."""

    f: Callable
    bound: float
    support: Tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        lo, hi = (float(s) for s in self.support)
        object.__setattr__(self, "support", (lo, hi))
        if not (lo < hi):
            raise ArgumentError("support must be a nonempty interval")
        if not (self.bound >= 0 and np.isfinite(self.bound)):
            raise ArgumentError("bound must be finite and >= 0")
        a = lo if np.isfinite(lo) else min(-50.0, hi - 100.0)
        b = hi if np.isfinite(hi) else max(50.0, a + 100.0)
        grid = np.linspace(a, b, _AUDIT_POINTS)
        vals = np.asarray(self.f(grid), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise ArgumentError("density must be finite and nonnegative on its support")
        if np.any(vals > self.bound * (1 + 1e-12)):
            raise ArgumentError("density exceeds its declared bound on the audit grid")

    @property
    def sup(self):
        return float(self.bound)

    @property
    def breakpoints(self):
        return tuple(s for s in self.support if np.isfinite(s))

    def rate_at(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.support[0]) & (x < self.support[1])
        xs = np.where(inside, x, np.clip(x, *self._finite_hull()))
        return np.where(inside, np.asarray(self.f(xs), dtype=float), 0.0)

    def _finite_hull(self):
        lo, hi = self.support
        return (lo if np.isfinite(lo) else -1e300, hi if np.isfinite(hi) else 1e300)

    def cumulative(self, x, quad=None):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo = np.minimum(x, 0.0)
        hi = np.maximum(x, 0.0)
        lo = np.clip(lo, *self._finite_hull())
        hi = np.clip(hi, *self._finite_hull())
        vals, _ = integrate(lambda t, i: self.rate_at(t), lo, hi, quad=quad,
                            points=self.breakpoints or None)
        return np.sign(x) * vals


IntensityMeasure = Union[Constant, PiecewiseConstant, Density]


def measure(intensity, interval, quad=None):
    """Mass that ``intensity`` gives to the closed interval ``[lo, hi]``."""
    lo, hi = interval
    if lo > hi:
        raise ArgumentError("reversed interval [%r, %r]" % (lo, hi))
    if lo == hi:
        return 0.0
    if isinstance(intensity, Density):
        a, b = np.clip([lo, hi], *intensity._finite_hull())
        if b <= a:
            return 0.0
        val, _ = integrate(lambda t, i: intensity.rate_at(t), a, b, quad=quad,
                           points=intensity.breakpoints or None)
        return float(val[0])
    return float(intensity.cumulative(hi) - intensity.cumulative(lo))


# --------------------------------------------------------------------------
# Length laws
# --------------------------------------------------------------------------

class _LawBase:
    """Shared helpers; subclasses supply survival, tail_integral, quantile, sample."""

    def survival(self, t):
        raise NotImplementedError

    def expect(self, fn, quad=None):
        """E(fn(L)) -- exact for atomic laws, quadrature against the density otherwise."""
        atoms = self.atoms()
        if atoms is not None:
            return float(sum(p * fn(np.array(v)) for v, p in atoms))
        a, b = self.support_bounds(quad)
        val, _ = integrate(lambda t, i: fn(t) * self.density(t), a, b, quad=quad,
                           points=self.kinks or None)
        return float(val[0])

    def atoms(self):
        return None

    def moment(self, k, quad=None):
        return self.expect(lambda t: t ** k, quad)

    @property
    def mean(self):
        return float(self.tail_integral(0.0))

    def support_bounds(self, quad=None):
        if np.isfinite(self.upper):
            return 0.0, float(self.upper)
        # Doubling the tail quantile leaves polynomially weighted tails negligible.
        return 0.0, 2.0 * float(self.quantile(1.0 - (quad or DEFAULT_QUAD).tail_mass))

    def truncation(self, tail_mass):
        """Smallest practical ``u`` with ``E((L - u)^+) <= tail_mass``."""
        if np.isfinite(self.upper):
            return float(self.upper)
        lo, hi = 0.0, max(1.0, self.mean)
        while self.tail_integral(hi) > tail_mass:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.tail_integral(mid) > tail_mass:
                lo = mid
            else:
                hi = mid
        return hi


@dataclass(frozen=True)
class Deterministic(_LawBase):
    length: float

    def __post_init__(self):
        if not (self.length >= 0 and np.isfinite(self.length)):
            raise ArgumentError("length must be finite and >= 0")

    @property
    def upper(self):
        return float(self.length)

    @property
    def kinks(self):
        return (float(self.length),)

    def atoms(self):
        return ((float(self.length), 1.0),)

    def survival(self, t):
        return (np.asarray(t, dtype=float) <= self.length).astype(float)

    def tail_integral(self, u):
        return np.maximum(self.length - np.asarray(u, dtype=float), 0.0)

    def quantile(self, p):
        return float(self.length)

    def sample(self, rng, n):
        return np.full(n, float(self.length))


@dataclass(frozen=True)
class Exponential(_LawBase):
    mean_length: float

    def __post_init__(self):
        if not (self.mean_length > 0 and np.isfinite(self.mean_length)):
            raise ArgumentError("mean must be finite and > 0")

    @property
    def upper(self):
        return np.inf

    @property
    def kinks(self):
        return ()

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, np.exp(-np.maximum(t, 0) / self.mean_length) / self.mean_length, 0.0)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.maximum(t, 0.0) / self.mean_length)

    def tail_integral(self, u):
        u = np.asarray(u, dtype=float)
        m = self.mean_length
        return np.where(u >= 0, m * np.exp(-np.maximum(u, 0.0) / m), m - u)

    def quantile(self, p):
        return float(-self.mean_length * np.log1p(-p))

    def sample(self, rng, n):
        return rng.exponential(self.mean_length, n)


@dataclass(frozen=True)
class UniformInterval(_LawBase):
    a: float
    b: float

    def __post_init__(self):
        if not (0 <= self.a < self.b and np.isfinite(self.b)):
            raise ArgumentError("need 0 <= a < b < inf")

    @property
    def upper(self):
        return float(self.b)

    @property
    def kinks(self):
        return tuple(k for k in (float(self.a), float(self.b)) if k > 0)

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= self.a) & (t <= self.b), 1.0 / (self.b - self.a), 0.0)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        return np.clip((self.b - t) / (self.b - self.a), 0.0, 1.0)

    def tail_integral(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.a, self.b
        below = 0.5 * (a + b) - u
        inside = (b - u) ** 2 / (2.0 * (b - a))
        return np.where(u <= a, below, np.where(u < b, inside, 0.0))

    def quantile(self, p):
        return float(self.a + p * (self.b - self.a))

    def sample(self, rng, n):
        return rng.uniform(self.a, self.b, n)


@dataclass(frozen=True)
class DiscreteAtoms(_LawBase):
    values: Tuple[float, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probabilities, dtype=float)
        if v.ndim != 1 or v.shape != p.shape or v.size == 0:
            raise ArgumentError("values and probabilities must be equal-length 1-d sequences")
        if np.any(v < 0) or np.any(~np.isfinite(v)) or np.any(p < 0):
            raise ArgumentError("values and probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ArgumentError("probabilities must sum to 1")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", tuple(v[order].tolist()))
        object.__setattr__(self, "probabilities", tuple(p[order].tolist()))

    @property
    def upper(self):
        return max(self.values)

    @property
    def kinks(self):
        return tuple(v for v in self.values if v > 0)

    def atoms(self):
        return tuple(zip(self.values, self.probabilities))

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        v = np.asarray(self.values)
        p = np.asarray(self.probabilities)
        return np.sum(p * (v[None, :] >= t.reshape(-1, 1)), axis=1).reshape(t.shape)

    def tail_integral(self, u):
        u = np.asarray(u, dtype=float)
        v = np.asarray(self.values)
        p = np.asarray(self.probabilities)
        return np.sum(p * np.maximum(v[None, :] - u.reshape(-1, 1), 0.0), axis=1).reshape(u.shape)

    def quantile(self, p):
        cdf = np.cumsum(self.probabilities)
        k = int(np.searchsorted(cdf, p - 1e-15, side="left"))
        return float(self.values[min(k, len(self.values) - 1)])

    def sample(self, rng, n):
        return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probabilities))


LengthLaw = Union[Deterministic, Exponential, UniformInterval, DiscreteAtoms]


@dataclass(frozen=True)
class PiecewiseLengths:
    """Position-dependent length law: ``laws[k]`` applies to right ends in piece ``k``.

    Pieces follow the same convention as :class:`PiecewiseConstant`.
    """

    breakpoints: Tuple[float, ...]
    laws: Tuple[LengthLaw, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "laws", tuple(self.laws))
        if len(self.laws) != len(bp) + 1:
            raise ArgumentError("need len(laws) == len(breakpoints) + 1")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ArgumentError("breakpoints must be strictly increasing")

    def piece(self, x):
        return np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right")

    def law_at(self, x):
        return self.laws[int(self.piece(x))]

    @property
    def upper(self):
        return max(law.upper for law in self.laws)

    @property
    def kinks(self):
        return tuple(sorted(set(k for law in self.laws for k in law.kinks)))


def as_pieces(lengths):
    """Breakpoints and per-piece laws for either kind of length specification."""
    if isinstance(lengths, PiecewiseLengths):
        return lengths.breakpoints, lengths.laws
    return (), (lengths,)


@dataclass(frozen=True)
class ModelSpec:
    clones: IntensityMeasure
    anchors: IntensityMeasure
    lengths: Union[LengthLaw, PiecewiseLengths]
    homogeneous: bool = field(init=False)

    def __post_init__(self):
        hom = (isinstance(self.clones, Constant) and isinstance(self.anchors, Constant)
               and not isinstance(self.lengths, PiecewiseLengths))
        object.__setattr__(self, "homogeneous", hom)

    @classmethod
    def homogeneous_spec(cls, kappa, alpha, lengths):
        return cls(Constant(kappa), Constant(alpha), lengths)

    def law_pieces(self):
        return as_pieces(self.lengths)

    def length_upper(self):
        return self.lengths.upper


def survival(lengths, x, t):
    """P(L_x >= t), closed at ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ArgumentError("length argument must be >= 0")
    law = lengths.law_at(x) if isinstance(lengths, PiecewiseLengths) else lengths
    out = law.survival(t)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Left-end reparametrization
# --------------------------------------------------------------------------

def _piece_index(bps, x):
    return np.searchsorted(bps, np.asarray(x, dtype=float), side="right")


def left_end_intensity(spec, y, quad=None):
    """Density of the left-end intensity ``c'(y) = int_y^inf c(dx) P(L_x in x - dy)``.

    Atoms of the length laws contribute ``p * c(y + v)``; continuous parts are
    integrated over right ends ``x > y``.
    """
    quad = quad or DEFAULT_QUAD
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bps, laws = spec.law_pieces()
    bps = np.asarray(bps, dtype=float)
    c = spec.clones
    out = np.zeros(y.shape)
    for k, law in enumerate(laws):
        atoms = law.atoms()
        if atoms is not None:
            for v, p in atoms:
                xr = y + v
                out += p * c.rate_at(xr) * (_piece_index(bps, xr) == k)
            continue
        _, top = law.support_bounds(quad)
        brk = list(bps) + list(c.breakpoints)

        def f(x, i, law=law, k=k):
            xx = x
            yy = y[i][:, None]
            return c.rate_at(xx) * law.density(xx - yy) * (_piece_index(bps, xx) == k)

        pts = np.array([[b for b in brk] + [yy + kk for kk in law.kinks] for yy in y]) if (brk or law.kinks) else None
        vals, _ = integrate(f, y, y + top, quad=quad, points=pts)
        out += vals
    if not np.all(np.isfinite(out)):
        raise NumericError("left-end intensity is not finite")
    return out if out.size > 1 else float(out[0])


def sample_left_end_lengths(spec, y, rng, max_tries=100000):
    """Draw one length per left end ``y`` from ``P(L'_y in dt) = c(y+t) P(L_{y+t} in dt) / c'(dy)``.

    Rejection sampler: pick a length piece uniformly, draw from its law, keep
    the draw when the right end ``y + t`` falls in that piece, with
    probability ``c(y + t) / sup c``.  Only defined where ``c'(y) > 0``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bps, laws = spec.law_pieces()
    bps = np.asarray(bps, dtype=float)
    cmax = spec.clones.sup
    out = np.full(y.shape, np.nan)
    pending = np.arange(y.size)
    tries = 0
    while pending.size:
        tries += 1
        if tries > max_tries:
            raise ArgumentError("left-end length law undefined where c'(y) = 0")
        n = pending.size
        k = rng.integers(0, len(laws), n)
        t = np.empty(n)
        for j, law in enumerate(laws):
            sel = k == j
            if np.any(sel):
                t[sel] = law.sample(rng, int(sel.sum()))
        xr = y[pending] + t
        u = rng.random(n)
        ok = (_piece_index(bps, xr) == k) & (u * cmax < spec.clones.rate_at(xr))
        out[pending[ok]] = t[ok]
        pending = pending[~ok]
    return out
