"""Realizations of clones, anchors, islands and the ocean on a finite window.

Clone right ends are drawn on ``[lo, hi + pad]`` and anchors on
``[lo - pad, hi + pad]``; with ``pad`` from :func:`pad_width` the window
statistics are exact up to a tail probability.  All intervals are closed:
a clone ``[x - t, x]`` is anchored by an anchor sitting on either endpoint,
and touching islands merge.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .model import (Constant, Density, PiecewiseConstant, PiecewiseLengths,
                    left_end_intensity, sample_left_end_lengths)

_MASK64 = (1 << 64) - 1

CLONE_SUBSTREAM = 0
ANCHOR_SUBSTREAM = 1
AUX_SUBSTREAM = 2


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by ``(seed, stream_id)``.

    Uses the Philox bijection: the 128-bit key is ``(seed, stream_id)`` and the
    high counter word separates the clone, anchor and auxiliary substreams, so
    a replication's draws do not depend on which worker runs it.
    """

    seed: int
    stream_id: int = 0

    def generator(self, substream=0):
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        counter = np.array([0, 0, 0, substream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _generator(rng, substream):
    if isinstance(rng, RngStream):
        return rng.generator(substream)
    if isinstance(rng, np.random.Generator):
        return rng
    raise ArgumentError("rng must be an RngStream or numpy Generator")


def _window(window):
    if np.isscalar(window):
        lo, hi = 0.0, float(window)
    else:
        lo, hi = (float(w) for w in window)
    if hi < lo:
        raise ArgumentError("window must satisfy lo <= hi")
    return lo, hi


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CloneSet:
    right_ends: np.ndarray
    lengths: np.ndarray
    region: tuple

    @property
    def left_ends(self):
        return self.right_ends - self.lengths

    def __len__(self):
        return self.right_ends.size

    @classmethod
    def from_pairs(cls, pairs, region=None):
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        order = np.argsort(pairs[:, 0], kind="stable")
        x, t = pairs[order, 0], pairs[order, 1]
        if np.any(t < 0):
            raise ArgumentError("clone lengths must be >= 0")
        if region is None:
            region = (float(x.min()), float(x.max())) if x.size else (0.0, 0.0)
        return cls(_frozen(x), _frozen(t), tuple(region))


@dataclass(frozen=True, eq=False)
class AnchorSet:
    positions: np.ndarray
    region: tuple

    def __len__(self):
        return self.positions.size

    @classmethod
    def from_positions(cls, positions, region=None):
        p = np.sort(np.asarray(positions, dtype=float).ravel())
        if region is None:
            region = (float(p.min()), float(p.max())) if p.size else (0.0, 0.0)
        return cls(_frozen(p), tuple(region))


@dataclass(frozen=True, eq=False)
class IslandSet:
    starts: np.ndarray
    ends: np.ndarray

    def __len__(self):
        return self.starts.size

    @property
    def intervals(self):
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    @classmethod
    def from_intervals(cls, intervals):
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        return islands(CloneSet.from_pairs(np.column_stack([iv[:, 1], iv[:, 1] - iv[:, 0]])))


def pad_width(spec, epsilon=1e-9):
    """Boundary padding: the largest length, or its ``1 - epsilon`` quantile when unbounded."""
    if not epsilon > 0:
        raise ArgumentError("epsilon must be > 0")
    laws = spec.lengths.laws if isinstance(spec.lengths, PiecewiseLengths) else (spec.lengths,)
    pad = 0.0
    for law in laws:
        q = law.upper if np.isfinite(law.upper) else law.quantile(1.0 - epsilon)
        if not np.isfinite(q):
            raise ArgumentError("length law has no finite quantile at 1 - epsilon")
        pad = max(pad, float(q))
    return pad


def _poisson_points(intensity, lo, hi, gen):
    if hi <= lo:
        return np.zeros(0)
    if isinstance(intensity, Constant):
        n = gen.poisson(intensity.rate * (hi - lo))
        return np.sort(gen.uniform(lo, hi, n))
    if isinstance(intensity, PiecewiseConstant):
        edges = np.concatenate([[-np.inf], intensity.breakpoints, [np.inf]])
        parts = []
        for k, r in enumerate(intensity.rates):
            a, b = max(lo, edges[k]), min(hi, edges[k + 1])
            if b > a and r > 0:
                parts.append(gen.uniform(a, b, gen.poisson(r * (b - a))))
        return np.sort(np.concatenate(parts)) if parts else np.zeros(0)
    if isinstance(intensity, Density):
        n = gen.poisson(intensity.bound * (hi - lo))
        x = gen.uniform(lo, hi, n)
        u = gen.random(n)
        return np.sort(x[u * intensity.bound < intensity.rate_at(x)])
    raise ArgumentError("unknown intensity type %r" % type(intensity).__name__)


def _draw_lengths(lengths, x, gen):
    if not isinstance(lengths, PiecewiseLengths):
        return lengths.sample(gen, x.size)
    out = np.empty(x.size)
    piece = lengths.piece(x)
    for k, law in enumerate(lengths.laws):
        sel = piece == k
        if np.any(sel):
            out[sel] = law.sample(gen, int(sel.sum()))
    return out


def sample_clones(spec, window, pad, rng):
    """Clones with right ends on ``[lo, hi + pad]``; lengths drawn at each right end."""
    lo, hi = _window(window)
    if pad < 0:
        raise ArgumentError("pad must be >= 0")
    gen = _generator(rng, CLONE_SUBSTREAM)
    x = _poisson_points(spec.clones, lo, hi + pad, gen)
    t = _draw_lengths(spec.lengths, x, gen)
    return CloneSet(_frozen(x), _frozen(t), (lo, hi + pad))


def sample_anchors(spec, window, pad, rng):
    lo, hi = _window(window)
    if pad < 0:
        raise ArgumentError("pad must be >= 0")
    gen = _generator(rng, ANCHOR_SUBSTREAM)
    p = _poisson_points(spec.anchors, lo - pad, hi + pad, gen)
    return AnchorSet(_frozen(p), (lo - pad, hi + pad))


def anchored_mask(clones, anchors):
    """Boolean mask of clones whose closed interval contains at least one anchor."""
    a = anchors.positions
    if a.size == 0 or len(clones) == 0:
        return np.zeros(len(clones), dtype=bool)
    k = np.searchsorted(a, clones.left_ends, side="left")
    return (k < a.size) & (a[np.minimum(k, a.size - 1)] <= clones.right_ends)


def anchored_clones(clones, anchors):
    keep = anchored_mask(clones, anchors)
    return CloneSet(_frozen(clones.right_ends[keep]), _frozen(clones.lengths[keep]), clones.region)


def islands(anchored):
    """Merge the closed intervals of ``anchored`` into maximal connected islands."""
    if len(anchored) == 0:
        return IslandSet(_frozen([]), _frozen([]))
    left = anchored.left_ends
    right = anchored.right_ends
    order = np.argsort(left, kind="stable")
    left, right = left[order], right[order]
    reach = np.maximum.accumulate(right)
    new = np.ones(left.size, dtype=bool)
    new[1:] = left[1:] > reach[:-1]
    first = np.nonzero(new)[0]
    last = np.append(first[1:] - 1, left.size - 1)
    starts, ends = left[first], reach[last]
    keep = ends > starts  # lone zero-length clones cover a single point
    return IslandSet(_frozen(starts[keep]), _frozen(ends[keep]))


def ocean_measure(isl, interval):
    a, b = interval
    if a > b:
        raise ArgumentError("reversed interval")
    covered = np.clip(np.minimum(isl.ends, b) - np.maximum(isl.starts, a), 0.0, None).sum()
    return float((b - a) - covered)


def cumulative_ocean(isl, lo, uppers):
    """``O([lo, u])`` for every ``u`` in ``uppers``."""
    u = np.asarray(uppers, dtype=float)
    if len(isl) == 0:
        return u - lo
    s = np.maximum(isl.starts, lo)[None, :]
    e = isl.ends[None, :]
    covered = np.clip(np.minimum(e, u[:, None]) - s, 0.0, None).sum(axis=1)
    return (u - lo) - covered


def in_ocean(isl, points):
    """Indicator that each point lies outside every (closed) island."""
    p = np.asarray(points, dtype=float)
    if len(isl) == 0:
        return np.ones(p.shape, dtype=bool)
    k = np.searchsorted(isl.starts, p, side="right") - 1
    covered = (k >= 0) & (isl.ends[np.maximum(k, 0)] >= p)
    return ~covered


def count_covering(clones, x):
    return int(np.count_nonzero((clones.left_ends <= x) & (x <= clones.right_ends)))


def count_anchored_covering(clones, anchors, x):
    return count_covering(anchored_clones(clones, anchors), x)


@dataclass(frozen=True, eq=False)
class Realization:
    clones: CloneSet
    anchors: AnchorSet
    anchored: CloneSet
    islands: IslandSet
    window: tuple


def realize(spec, window, rng, pad=None, epsilon=1e-9):
    """Sample clones and anchors around ``window`` and build the islands."""
    lo, hi = _window(window)
    if pad is None:
        pad = pad_width(spec, epsilon)
    c = sample_clones(spec, (lo, hi), pad, rng)
    a = sample_anchors(spec, (lo, hi), pad, rng)
    anc = anchored_clones(c, a)
    return Realization(c, a, anc, islands(anc), (lo, hi))


def theta_path(spec, G, grid, rng, rho, nu, pad=None):
    """One path of ``(O_{Gt} - rho G t) / sqrt(nu G)`` at the grid times ``t``."""
    if nu < 0:
        raise ArgumentError("nu must be >= 0")
    grid = np.asarray(grid, dtype=float)
    if np.any((grid < 0) | (grid > 1)):
        raise ArgumentError("grid times must lie in [0, 1]")
    real = realize(spec, (0.0, G), rng, pad=pad)
    o = cumulative_ocean(real.islands, 0.0, G * grid)
    num = o - rho * G * grid
    num[grid == 0] = 0.0
    if nu == 0:
        # Only a deterministic ocean is allowed to have zero asymptotic variance.
        if np.any(np.abs(num) > 1e-12 * max(G, 1.0)):
            raise ArgumentError("nu must be > 0 for a random ocean")
        return np.zeros_like(num)
    return num / np.sqrt(nu * G)


def sample_left_end_clones(spec, window, rng, quad=None):
    """Clones drawn through the left-end parametrization ``(c', L')``.

    Left ends are thinned against ``sup c`` (which dominates ``c'``) using
    :func:`left_end_intensity`; lengths come from the transported law.
    Returns ``(left_ends, lengths)``.
    """
    lo, hi = _window(window)
    gen = _generator(rng, AUX_SUBSTREAM)
    bound = spec.clones.sup
    n = gen.poisson(bound * (hi - lo))
    y = np.sort(gen.uniform(lo, hi, n))
    u = gen.random(n)
    if n:
        cp = np.atleast_1d(left_end_intensity(spec, y, quad))
        y = y[u * bound < cp]
    t = sample_left_end_lengths(spec, y, gen) if y.size else np.zeros(0)
    return y, t


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["%.17g" % v for v in row])


def export_realization(real, directory):
    """Write clones.csv, anchors.csv and islands.csv into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_csv(os.path.join(directory, "clones.csv"), ["right_end", "length"],
              zip(real.clones.right_ends, real.clones.lengths))
    write_csv(os.path.join(directory, "anchors.csv"), ["position"],
              ((p,) for p in real.anchors.positions))
    write_csv(os.path.join(directory, "islands.csv"), ["start", "end"],
              zip(real.islands.starts, real.islands.ends))
