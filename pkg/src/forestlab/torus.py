"""Linear and discrete flows on the torus, delta-density and the Diophantine
inequalities that control filling times.

Distances on the torus use the sup norm: ``d(x, y) = min_z ||x - y - z||_inf``.
A set is delta-dense when every point of the torus is within distance
``<= delta`` of it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import (HypothesisViolated, RecursionBudgetExceeded,
                     SearchBudgetExceeded, ZeroPivot)
from .linalg import projective_distance, sup_dist_to_integers
from .rationality import integer_relation

__all__ = [
    "FlowSpec", "DensityReport", "DiophantineWitness", "pivot_index",
    "discrete_flow", "flow_segments", "torus_distance", "is_delta_dense",
    "filling_time", "dirichlet_witness", "transference_constant",
    "transference_apply", "lft3_hypothesis", "lft4_witness_search",
    "GOLDEN",
]

GOLDEN = (1 + 5 ** 0.5) / 2
RESOLUTION_FACTOR = 1e-3
PAIR_BUDGET = 5 * 10 ** 7


def pivot_index(u) -> int:
    """Index of the largest |u_i|; ties go to the largest index."""
    a = np.abs(np.asarray(u, float))
    return int(a.size - 1 - np.argmax(a[::-1]))


def _pivot_ratios(u):
    u = np.asarray(u, float)
    p = pivot_index(u)
    if abs(u[p]) < 1e-15:
        raise ZeroPivot("pivot coordinate is zero")
    return np.delete(u, p) / u[p]


@dataclass(frozen=True)
class FlowSpec:
    """A unit direction with a horizon (``T`` continuous, ``S`` discrete) and
    a density parameter."""

    u: np.ndarray
    delta: float
    T: Optional[float] = None
    S: Optional[int] = None

    def __post_init__(self):
        u = np.array(self.u, dtype=float).ravel()
        if u.size < 2:
            raise ValueError("flows need at least two coordinates")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector (use FlowSpec.make)")
        if not 0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 1/2]")
        if self.T is not None and not self.T >= 0:
            raise ValueError("T must be non-negative")
        if self.S is not None and (int(self.S) != self.S or self.S < 0):
            raise ValueError("S must be a non-negative integer")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def make(cls, u, delta, T=None, S=None) -> "FlowSpec":
        u = np.asarray(u, float)
        return cls(u / np.linalg.norm(u), delta, T, S)

    @property
    def d(self) -> int:
        return self.u.size - 1

    @property
    def pivot(self) -> int:
        return pivot_index(self.u)


def discrete_flow(u, S: int) -> np.ndarray:
    """Points ``m r mod 1`` for ``|m| <= S``, where ``r`` holds the other
    coordinates of ``u`` divided by the pivot one.  Duplicates (to 1e-12)
    are collapsed; rows are sorted."""
    r = _pivot_ratios(u)
    m = np.arange(-int(S), int(S) + 1)[:, None]
    pts = np.mod(m * r[None, :], 1.0)
    pts[pts > 1.0 - 1e-12] = 0.0
    pts = np.round(pts, 12)
    return np.unique(pts, axis=0)


def flow_segments(u, T: float):
    """Decompose ``{t u mod 1 : |t| <= T}`` into straight pieces in [0,1]^n.

    Returns ``(starts, vecs)``: piece j is ``starts[j] + lam * vecs[j]``,
    ``0 <= lam <= 1``.
    """
    u = np.asarray(u, float)
    cuts = [np.array([-T, T])]
    for ui in u:
        if ui != 0.0:
            lo, hi = sorted((-T * ui, T * ui))
            k = np.arange(math.floor(lo), math.ceil(hi) + 1)
            cuts.append(k / ui)
    t = np.concatenate(cuts)
    t = np.unique(t[(t >= -T) & (t <= T)])
    if t.size == 1:
        return np.mod(t[0] * u, 1.0)[None, :], np.zeros((1, u.size))
    mids = 0.5 * (t[:-1] + t[1:])
    shift = np.floor(mids[:, None] * u[None, :])
    starts = t[:-1, None] * u[None, :] - shift
    vecs = (t[1:] - t[:-1])[:, None] * u[None, :]
    return np.clip(starts, 0.0, 1.0), vecs


def _shifted(starts, vecs):
    n = starts.shape[1]
    shifts = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=n)))
    S = (starts[:, None, :] + shifts[None, :, :]).reshape(-1, n)
    V = np.repeat(vecs, len(shifts), axis=0)
    return S, V


def torus_distance(points, starts, vecs) -> np.ndarray:
    """Exact sup-norm torus distance from each point to a union of pieces."""
    P = np.mod(np.atleast_2d(np.asarray(points, float)), 1.0)
    S, V = _shifted(np.asarray(starts, float), np.asarray(vecs, float))
    pi = np.repeat(np.arange(len(P)), len(S))
    si = np.tile(np.arange(len(S)), len(P))
    d = kernels.pair_sup_dist(P, S, V, pi, si)
    return d.reshape(len(P), len(S)).min(axis=1)


@dataclass
class DensityReport:
    """Outcome of a delta-density decision.

    ``dense`` is True only when every box was discharged.  When a point at
    distance > delta was found, ``point``/``distance`` hold the farthest
    one seen.  ``undecided`` marks runs stopped at the resolution floor; they
    report ``dense=False`` with the farthest point examined.
    """

    dense: bool
    delta: float
    resolution: float
    point: Optional[np.ndarray] = None
    distance: Optional[float] = None
    undecided: bool = False
    boxes: int = 0

    @property
    def certified_not_dense(self) -> bool:
        return not self.dense and not self.undecided

    def to_dict(self) -> dict:
        return {
            "dense": self.dense,
            "undecided": self.undecided,
            "delta": self.delta,
            "resolution": self.resolution,
            "farthest_point": None if self.point is None else [float(x) for x in self.point],
            "distance": self.distance,
            "boxes": self.boxes,
        }


def _decide(starts, vecs, delta, floor_factor=RESOLUTION_FACTOR, pair_budget=PAIR_BUDGET):
    """Box subdivision of [0,1)^n against the delta-neighbourhood of the pieces."""
    n = starts.shape[1]
    if delta >= 0.5:
        # any two torus points are within 1/2 in the sup norm
        return DensityReport(True, delta, 0.0)
    S, V = _shifted(starts, vecs)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    children = np.array(list(itertools.product((-0.5, 0.5), repeat=n)))
    floor = delta * floor_factor
    centers = np.full((1, n), 0.5)
    r = 0.5
    pb = np.zeros(len(S), dtype=np.int64)
    pc = np.arange(len(S), dtype=np.int64)
    total = 0
    while True:
        nb = len(centers)
        total += nb
        d = kernels.pair_sup_dist(centers, S, V, pb, pc) if len(pb) else np.zeros(0)
        mind = np.full(nb, np.inf)
        np.minimum.at(mind, pb, d)
        bad = mind > delta
        if np.any(bad):
            idx = np.flatnonzero(bad)
            pts = centers[idx]
            dist = torus_distance(pts, starts, vecs)
            order = np.lexsort(tuple(pts[:, i] for i in range(n - 1, -1, -1)) + (-dist,))
            j = order[0]
            return DensityReport(False, delta, r, pts[j].copy(), float(dist[j]), False, total)
        done = mind + r <= delta
        # a box whose corners all lie within delta of one piece is covered
        # by that piece's (convex) neighbourhood
        sel = (d <= delta) & ~done[pb]
        if np.any(sel):
            spb, spc = pb[sel], pc[sel]
            cpts = (centers[spb][:, None, :] + r * corners[None, :, :]).reshape(-1, n)
            cpi = np.arange(len(cpts), dtype=np.int64)
            csi = np.repeat(spc, len(corners))
            cd = kernels.pair_sup_dist(cpts, S, V, cpi, csi).reshape(-1, len(corners))
            covered = np.max(cd, axis=1) <= delta
            done[spb[covered]] = True
        if np.all(done):
            return DensityReport(True, delta, r, boxes=total)
        if r / 2 < floor:
            open_idx = np.flatnonzero(~done)
            pts = centers[open_idx]
            dist = torus_distance(pts, starts, vecs)
            j = int(np.argmax(dist))
            return DensityReport(False, delta, r, pts[j].copy(), float(dist[j]), True, total)
        keep = ~done[pb] & (d <= delta + r)
        pb, pc = pb[keep], pc[keep]
        live = np.flatnonzero(~done)
        remap = np.full(nb, -1, dtype=np.int64)
        remap[live] = np.arange(live.size)
        nc = len(children)
        if len(pb) * nc > pair_budget:
            raise RecursionBudgetExceeded(
                f"{len(pb) * nc} box/piece pairs at half-width {r / 2:.3g}")
        r /= 2
        centers = (centers[live][:, None, :] + 2 * r * children[None, :, :]).reshape(-1, n)
        pb = (remap[pb][:, None] * nc + np.arange(nc)[None, :]).ravel()
        pc = np.repeat(pc, nc)


def is_delta_dense(flow: FlowSpec, mode: str = "continuous") -> DensityReport:
    """Decide sup-norm delta-density of the continuous flow ``Delta_T(u)`` in
    [0,1)^(d+1) or of the discrete flow ``Sigma_S(u)`` in [0,1)^d."""
    if mode == "continuous":
        if flow.T is None:
            raise ValueError("continuous mode needs T")
        starts, vecs = flow_segments(flow.u, flow.T)
        cap = 4 * (flow.d + 1) * flow.T + 4
        if len(starts) > cap:
            # cannot happen for unit directions: pieces <= 2T||u||_1 + d + 2
            raise RecursionBudgetExceeded(f"{len(starts)} pieces exceed cap {cap:.0f}")
    elif mode == "discrete":
        if flow.S is None:
            raise ValueError("discrete mode needs S")
        starts = discrete_flow(flow.u, flow.S)
        vecs = np.zeros_like(starts)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _decide(starts, vecs, flow.delta)


def _dense_at(u, T, delta):
    return is_delta_dense(FlowSpec(u, delta, T=T)).dense


def filling_time(u, delta: float, rel_tol: float = 1e-2, T_max: float = 1e4,
                 H: int = 50, tol: float = 1e-9) -> float:
    """Smallest T (to relative accuracy ``rel_tol``, reported from above)
    with ``Delta_T(u)`` delta-dense; ``math.inf`` when a rational relation
    keeps the flow's closure from being delta-dense."""
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)
    if not 0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    if delta >= 0.5:
        return 0.0
    rel = integer_relation(u, H, tol)
    if rel is not None:
        p = _rational_direction(u, H)
        if p is not None:
            period = float(np.linalg.norm(p))
            rep = is_delta_dense(FlowSpec(u, delta, T=period / 2))
            if rep.certified_not_dense:
                return math.inf
            if rep.undecided:
                # the closed orbit is within the resolution floor of delta
                raise SearchBudgetExceeded(
                    f"closed orbit density undecided at resolution {rep.resolution:.3g}")
            T_max = min(T_max, period / 2)
        else:
            # closure lies in {x : q.x in Z}, whose farthest point is 1/(2||q||_1) away
            if 1.0 / (2 * sum(abs(x) for x in rel.q)) >= delta:
                return math.inf
    lo, hi = 0.0, min(1.0, T_max)
    while not _dense_at(u, hi, delta):
        if hi >= T_max:
            raise SearchBudgetExceeded(f"flow not {delta}-dense by T={T_max}")
        lo, hi = hi, min(2 * hi, T_max)
    while hi - lo > rel_tol * hi / 2:
        mid = 0.5 * (lo + hi)
        if _dense_at(u, mid, delta):
            hi = mid
        else:
            lo = mid
    return hi


def _rational_direction(u, H):
    """Primitive integer p parallel to u with ||p||_inf <= H, if any."""
    j = pivot_index(u)
    r = u / u[j]
    for m in range(1, H + 1):
        p = np.rint(m * r)
        if np.max(np.abs(m * r - p)) < 1e-9:
            return p.astype(np.int64)
    return None


def dirichlet_witness(ratios, X: int) -> int:
    """The ``m`` in ``1..X`` minimising ``max_i ||m r_i||`` (smallest on ties).

    Minkowski's theorem guarantees the minimum is at most ``X^(-1/d)``.
    """
    r = np.atleast_1d(np.asarray(ratios, float))
    if X < 2:
        raise ValueError("X must be >= 2")
    m = np.arange(1, int(X) + 1)
    vals = sup_dist_to_integers(m[:, None] * r[None, :])
    j = int(np.argmin(vals))
    bound = float(X) ** (-1.0 / r.size)
    if vals[j] > bound * (1 + 1e-12):
        raise AssertionError(f"Dirichlet bound failed: {vals[j]} > {bound}")
    return int(m[j])


def transference_constant(ratios, X) -> tuple[float, int]:
    """``min over 0 < |m| < X`` of ``max_i ||m r_i||`` and the minimising m."""
    r = np.atleast_1d(np.asarray(ratios, float))
    m = np.arange(1, math.ceil(X))
    if m.size == 0:
        return math.inf, 0
    vals = sup_dist_to_integers(m[:, None] * r[None, :])
    j = int(np.argmin(vals))
    return float(vals[j]), int(m[j])


@dataclass(frozen=True)
class TransferenceBounds:
    C: float
    X: float
    h: int
    C_prime: float
    X_prime: float


def transference_bounds(ratios, C, X) -> TransferenceBounds:
    N = np.atleast_1d(ratios).size
    h = math.floor(X ** -1.0 * C ** -float(N))
    return TransferenceBounds(C, X, h, (h + 1) * C / 2, (h + 1) * X / 2)


def check_transference_hypothesis(ratios, C, X):
    """Raise HypothesisViolated at the first ``m`` (order 1, -1, 2, -2, ...)
    with ``0 < |m| < X`` and ``max_i ||m r_i|| < C``."""
    r = np.atleast_1d(np.asarray(ratios, float))
    for m in range(1, math.ceil(X)):
        val = float(sup_dist_to_integers(m * r))
        # ||-m r|| = ||m r||, so the positive m is the first violator
        if val < C:
            raise HypothesisViolated(m, val, C)


def transference_apply(ratios, C, X, targets) -> int:
    """An integer x with ``|x| <= X'`` and ``max_i ||r_i x - alpha_i|| <= C'``.

    ``C=None`` uses the largest admissible constant found by enumeration.
    Candidates are tried in the order 0, 1, -1, 2, -2, ...
    """
    r = np.atleast_1d(np.asarray(ratios, float))
    alpha = np.atleast_1d(np.asarray(targets, float))
    if alpha.shape != r.shape:
        raise ValueError("one target per ratio")
    if C is None:
        C, m = transference_constant(r, X)
        if not C > 0:
            raise HypothesisViolated(m, C, C)
    check_transference_hypothesis(r, C, X)
    b = transference_bounds(r, C, X)
    K = math.floor(b.X_prime + 1e-9)
    k = np.arange(1, K + 1)
    xs = np.concatenate([[0], np.stack([k, -k], axis=1).ravel()])
    err = sup_dist_to_integers(xs[:, None] * r[None, :] - alpha[None, :])
    err = np.atleast_1d(err)
    ok = np.flatnonzero(err <= b.C_prime * (1 + 1e-12))
    if ok.size == 0:
        raise AssertionError("transference search failed; the bounds guarantee a solution")
    return int(xs[ok[0]])


def lft3_hypothesis(u, S: int, delta: float) -> tuple[bool, Optional[int]]:
    """Check ``max_i ||m r_i|| >= S^(-1/d)`` for all ``0 < |m| < S^(1-1/d)/delta``.

    Returns ``(True, None)`` or ``(False, m)`` with the first violator
    (smallest positive m; -m violates as well).
    """
    r = _pivot_ratios(u)
    d = r.size
    X = S ** (1.0 - 1.0 / d) / delta
    thr = S ** (-1.0 / d)
    m = np.arange(1, math.ceil(X))
    if m.size == 0:
        return True, None
    vals = np.atleast_1d(sup_dist_to_integers(m[:, None] * r[None, :]))
    bad = np.flatnonzero(vals < thr)
    if bad.size:
        return False, int(m[bad[0]])
    return True, None


@dataclass(frozen=True)
class DiophantineWitness:
    q: tuple
    sup_norm: int
    psi: float
    norm_bound: float
    psi_bound: float

    def to_dict(self) -> dict:
        return {"q": list(self.q), "sup_norm": self.sup_norm, "psi": self.psi,
                "norm_bound": self.norm_bound, "psi_bound": self.psi_bound}


def lft4_witness_search(u, S: int, delta: float) -> Optional[DiophantineWitness]:
    """Smallest (sup norm, then lexicographic, first nonzero entry positive)
    integer q with ``||q||_inf < S^(1-1/d)/delta`` and
    ``psi([u],[q]) < (d+1) / (||q||_inf S^(1/d))``.

    The scan is exhaustive: for such q the non-pivot entries lie within
    ``2 (d+1)^(3/2) S^(-1/d)`` of ``q_pivot u_i / u_pivot``.
    """
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)
    d = u.size - 1
    if d < 1:
        raise ValueError("need d >= 1")
    if not S > (d + 1) ** (d / 2):
        raise ValueError(f"need S > (d+1)^(d/2) = {(d + 1) ** (d / 2):.4g}")
    p = pivot_index(u)
    r = np.delete(u, p) / u[p]
    norm_bound = S ** (1.0 - 1.0 / d) / delta
    qmax = math.ceil(norm_bound) - 1
    w = 2 * (d + 1) ** 1.5 / S ** (1.0 / d)
    best = None
    best_key = None
    for m in range(0, qmax + 1):
        if best_key is not None and m > best_key[0]:
            break
        c = m * r
        ranges = [np.arange(max(math.ceil(ci - w), -qmax), min(math.floor(ci + w), qmax) + 1)
                  for ci in c]
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d)
        Q = np.insert(grid, p, m, axis=1).astype(np.int64)
        Q = Q[np.any(Q != 0, axis=1)]
        if len(Q) == 0:
            continue
        sup = np.max(np.abs(Q), axis=1)
        Un = Q / np.linalg.norm(Q, axis=1, keepdims=True)
        cos = np.clip(Un @ u, -1, 1)
        psi = np.linalg.norm(Un - cos[:, None] * u[None, :], axis=1)
        ok = (sup < norm_bound) & (psi < (d + 1) / (sup * S ** (1.0 / d)))
        for j in np.flatnonzero(ok):
            q = _canon(Q[j])
            key = (int(sup[j]), q)
            if best_key is None or key < best_key:
                best_key = key
                best = DiophantineWitness(q, int(sup[j]), float(psi[j]), norm_bound,
                                          (d + 1) / (int(sup[j]) * S ** (1.0 / d)))
    return best


def _canon(q):
    q = [int(x) for x in q]
    for x in q:
        if x:
            return tuple(q) if x > 0 else tuple(-y for y in q)
    return tuple(q)
