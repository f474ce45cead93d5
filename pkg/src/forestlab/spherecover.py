"""Coverings of projective space by bi-spherical caps and Monte Carlo
measures of the rotation sets they control.

A bi-spherical cap ``K(v, eta)`` is the set of unit vectors whose line lies
within projective distance ``eta`` of ``[v]``; in angles it is the pair of
antipodal caps of geodesic radius ``arcsin(eta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .errors import UnsupportedDimension
from .linalg import ProjectivePoint, haar_rotations, projective_distance_rows

__all__ = ["CapCover", "XSetSpec", "MCEstimate", "build_cap_cover", "verify_cover",
           "cover_gaps", "x_set_measure_mc", "sphere_cover", "circle_count"]

MAX_DIM = 3


@dataclass
class CapCover:
    d: int
    eta: float
    centres: np.ndarray = field(repr=False)
    verified_gap: Optional[float] = None

    @property
    def vectors(self) -> np.ndarray:
        return self.centres

    @property
    def count(self) -> int:
        return len(self.centres)

    @property
    def constant(self) -> float:
        """``count * eta^d``, the implied constant of the O(eta^-d) bound."""
        return self.count * self.eta ** self.d

    def points(self) -> list[ProjectivePoint]:
        return [ProjectivePoint(c) for c in self.centres]

    def without(self, index: int) -> "CapCover":
        return CapCover(self.d, self.eta, np.delete(self.centres, index, axis=0))

    def to_dict(self) -> dict:
        return {"d": self.d, "eta": self.eta, "count": self.count,
                "constant": self.constant, "verified_gap": self.verified_gap,
                "centres": [[float(x) for x in c] for c in self.centres]}


def _circle(beta: float) -> np.ndarray:
    """Points on S^1 with every point within angle < beta of one of them."""
    if beta >= math.pi:
        return np.array([[1.0, 0.0]])
    N = math.floor(math.pi / beta) + 1
    t = 2 * math.pi * np.arange(N) / N
    return np.stack([np.cos(t), np.sin(t)], axis=1)


def _sub_radius(h: float, alpha: float, s: float) -> float:
    """Longitude radius for a band of half-width h so that points within the
    band and within that longitude angle of a centre are < alpha away.

    Uses cos(dist) >= cos(h) - s (1 - cos(lon)), with s bounding the product
    of the cosines of the two latitudes.
    """
    x = 1.0 - 0.999 * (math.cos(h) - math.cos(alpha)) / max(s, 1e-300)
    return math.pi if x <= -1.0 else math.acos(x)


def _bands(lo: float, hi: float, alpha: float):
    B = max(1, math.ceil((hi - lo) / alpha))
    h = (hi - lo) / (2 * B)
    return [lo + (2 * j + 1) * h for j in range(B)], h


def _lift(phi: float, sub: np.ndarray) -> np.ndarray:
    return np.hstack([math.cos(phi) * sub, np.full((len(sub), 1), math.sin(phi))])


def sphere_cover(m: int, alpha: float) -> np.ndarray:
    """Points on the full sphere S^m with every point within angle < alpha."""
    if m == 1:
        return _circle(alpha)
    out = []
    centres, h = _bands(-math.pi / 2, math.pi / 2, alpha)
    for phi in centres:
        low = 0.0 if abs(phi) <= h else abs(phi) - h
        beta = _sub_radius(h, alpha, math.cos(low))
        out.append(_lift(phi, sphere_cover(m - 1, beta)))
    return np.vstack(out)


def _canonical_rows(X: np.ndarray) -> np.ndarray:
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    idx = np.argmax(np.abs(X) > 1e-12, axis=1)
    sign = np.sign(X[np.arange(len(X)), idx])
    X = X * sign[:, None]
    _, keep = np.unique(np.round(X, 9), axis=0, return_index=True)
    return X[np.sort(keep)] + 0.0


def circle_count(eta: float) -> int:
    """Number of equally spaced projective angles whose caps of radius eta
    cover the circle.  The margin adds a centre when pi / (2 asin eta) is an
    integer, where the midpoint gap would equal eta exactly."""
    return math.floor(math.pi / (2 * math.asin(eta)) * (1 + 1e-9)) + 1


def build_cap_cover(d: int, eta: float) -> CapCover:
    """Centres of bi-spherical caps of radius ``eta`` covering S^d.

    d = 1: equally spaced projective angles.  d >= 2: latitude bands on the
    upper hemisphere (the equator band covers both halves of the equator),
    each with a longitude cover of the right radius; then antipodal copies
    are merged.
    """
    if d < 1 or d > MAX_DIM:
        raise UnsupportedDimension(f"cap covers are built for 1 <= d <= {MAX_DIM}, got {d}")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    alpha = math.asin(eta)
    if d == 1:
        N = circle_count(eta)
        t = math.pi * np.arange(N) / N
        C = np.stack([np.cos(t), np.sin(t)], axis=1)
        return CapCover(1, eta, _canonical_rows(C))
    out = []
    centres, h = _bands(0.0, math.pi / 2, alpha)
    for phi in centres:
        beta = _sub_radius(h, alpha, math.cos(max(0.0, phi - h)))
        out.append(_lift(phi, sphere_cover(d - 1, beta)))
    return CapCover(d, eta, _canonical_rows(np.vstack(out)))


def cover_gaps(centres: np.ndarray, X: np.ndarray, chunk: int = 20_000) -> np.ndarray:
    """Projective distance from each row of ``X`` to the nearest centre."""
    C = np.asarray(centres, float)
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    out = np.empty(len(X))
    for i in range(0, len(X), chunk):
        Y = X[i:i + chunk]
        Y = Y / np.linalg.norm(Y, axis=1, keepdims=True)
        c = np.max(np.abs(Y @ C.T), axis=1)
        out[i:i + chunk] = np.sqrt(np.maximum(0.0, 1.0 - np.minimum(c, 1.0) ** 2))
    return out


def verify_cover(cover: CapCover, trials: int = 100_000, seed: int = 0) -> float:
    """Largest projective gap to the centres over uniform random unit vectors.

    Also stored on the cover as ``verified_gap``.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((trials, cover.d + 1))
    gap = float(np.max(cover_gaps(cover.centres, X)))
    cover.verified_gap = gap
    return gap


@dataclass(frozen=True)
class XSetSpec:
    """Rotation tuples with ``psi([b], [R_i M_i q_i]) < eta_i`` for every i."""

    b: np.ndarray
    qs: tuple
    etas: tuple
    matrices: tuple

    def __post_init__(self):
        if not (len(self.qs) == len(self.etas) == len(self.matrices)) or not self.qs:
            raise ValueError("need one q, eta and matrix per grid")
        if any(not 0 < e <= 1 for e in self.etas):
            raise ValueError("radii must lie in (0, 1]")
        if any(not np.any(np.asarray(q)) for q in self.qs):
            raise ValueError("q_i must be nonzero")
        object.__setattr__(self, "b", np.asarray(self.b, float) / np.linalg.norm(self.b))
        object.__setattr__(self, "matrices", tuple(np.asarray(m, float) for m in self.matrices))
        object.__setattr__(self, "qs", tuple(np.asarray(q, float) for q in self.qs))

    @property
    def k(self) -> int:
        return len(self.qs)

    @property
    def d(self) -> int:
        return self.b.size - 1


@dataclass(frozen=True)
class MCEstimate:
    hits: int
    trials: int
    low: float
    high: float

    @property
    def proportion(self) -> float:
        return self.hits / self.trials

    @property
    def width(self) -> float:
        return self.high - self.low

    def to_dict(self) -> dict:
        return {"proportion": self.proportion, "hits": self.hits, "trials": self.trials,
                "ci95": [self.low, self.high]}


def wilson(hits: int, trials: int) -> MCEstimate:
    ci = binomtest(hits, trials).proportion_ci(0.95, method="wilson")
    return MCEstimate(hits, trials, float(ci.low), float(ci.high))


def x_set_measure_mc(spec: XSetSpec, trials: int = 100_000, seed: int = 0,
                     chunk: int = 10_000) -> MCEstimate:
    """Haar-measure estimate of the X-set with a 95% Wilson interval.

    Chunk ``c`` draws from its own stream ``SeedSequence([seed, c])``, so the
    estimate does not depend on how chunks are scheduled.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    d = spec.d
    hits = 0
    for c, start in enumerate(range(0, trials, chunk)):
        m = min(chunk, trials - start)
        rng = np.random.default_rng(np.random.SeedSequence([seed, c]))
        inside = np.ones(m, bool)
        for M, q, eta in zip(spec.matrices, spec.qs, spec.etas):
            R = haar_rotations(d, m, rng)
            img = R @ (M @ q)
            inside &= projective_distance_rows(img, np.broadcast_to(spec.b, img.shape)) < eta
        hits += int(inside.sum())
    return wilson(hits, trials)
