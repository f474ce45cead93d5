"""Grids, finite unions of grids and their directional visibility."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import HalfspaceIntersection
from scipy.stats import qmc

from . import kernels
from .errors import EnumerationBudgetExceeded
from .linalg import Matrix, as_array, check_invertible
from .reduction import lll_reduce, nearest_plane_radius

__all__ = [
    "GridSpec", "Forest", "SegmentQuery", "VisibilityOutcome", "CoveringRadius",
    "ProfilePoint", "covering_radius", "enumerate_near_segment",
    "directional_visibility", "visibility_profile", "anchor_plan",
    "rational_period", "build_unipotent", "rotated_copy_matrices",
    "build_rotated_union", "HONEYCOMB", "DEFAULT_CELL_BUDGET",
]

DEFAULT_CELL_BUDGET = 10 ** 8

HONEYCOMB = np.array([[1.0, 0.5], [0.0, 0.8660254037844386]])


def _as_matrix(m) -> Matrix:
    return m if isinstance(m, Matrix) else Matrix(np.asarray(m, dtype=float))


@dataclass(frozen=True, eq=False)
class GridSpec:
    """The grid ``matrix @ Z^n + translation``."""

    matrix: Matrix
    translation: np.ndarray = None

    def __post_init__(self):
        m = _as_matrix(self.matrix)
        object.__setattr__(self, "matrix", m)
        t = np.zeros(m.n) if self.translation is None else np.asarray(self.translation, float).ravel()
        if t.shape != (m.n,):
            raise ValueError(f"translation must have length {m.n}")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @property
    def n(self) -> int:
        return self.matrix.n

    @cached_property
    def reduced(self):
        """(LLL-reduced basis, unimodular U) with basis = matrix @ U."""
        return lll_reduce(self.matrix.values)

    def points(self, z) -> np.ndarray:
        z = np.asarray(z)
        return z @ self.matrix.values.T + self.translation


@dataclass(frozen=True, eq=False)
class Forest:
    grids: tuple

    def __post_init__(self):
        grids = tuple(g if isinstance(g, GridSpec) else GridSpec(*g) for g in self.grids)
        if not grids:
            raise ValueError("a forest needs at least one grid")
        if len({g.n for g in grids}) != 1:
            raise ValueError("all grids must share one dimension")
        object.__setattr__(self, "grids", grids)

    @classmethod
    def from_matrices(cls, matrices, translations=None) -> "Forest":
        if translations is None:
            translations = [None] * len(matrices)
        return cls(tuple(GridSpec(m, t) for m, t in zip(matrices, translations)))

    @property
    def n(self) -> int:
        return self.grids[0].n

    @property
    def k(self) -> int:
        return len(self.grids)

    @property
    def matrices(self) -> list:
        return [g.matrix for g in self.grids]


@dataclass(frozen=True)
class SegmentQuery:
    """Segment ``{anchor + t*direction : |t| <= l}`` searched up to ``l_max``."""

    anchor: np.ndarray
    direction: np.ndarray
    epsilon: float
    l_max: float = None

    def __post_init__(self):
        a = np.asarray(self.anchor, float).ravel()
        b = np.asarray(self.direction, float).ravel()
        if a.shape != b.shape:
            raise ValueError("anchor and direction dimensions differ")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector (use SegmentQuery.make to normalise)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        l_max = self.l_max
        if l_max is None:
            l_max = 1e6 * self.epsilon ** (-a.size)
        if not l_max > 0:
            raise ValueError("l_max must be positive")
        object.__setattr__(self, "anchor", a)
        object.__setattr__(self, "direction", b)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "l_max", float(l_max))

    @classmethod
    def make(cls, anchor, direction, epsilon, l_max=None) -> "SegmentQuery":
        b = np.asarray(direction, float)
        return cls(anchor, b / np.linalg.norm(b), epsilon, l_max)


@dataclass(frozen=True)
class VisibilityOutcome:
    """``Hit`` with the minimal half-length, or ``Blocked``.

    ``certified`` marks a Blocked outcome that holds for every length (all
    grids have a periodic pull-back direction and a full period was
    scanned), as opposed to one that only holds up to ``l_max``.
    """

    status: str
    length: float = float("inf")
    grid: Optional[int] = None
    coords: Optional[tuple] = None
    certified: bool = False

    @property
    def hit(self) -> bool:
        return self.status == "hit"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "length": None if self.status != "hit" else self.length,
            "grid": self.grid,
            "coords": None if self.coords is None else list(self.coords),
            "certified": self.certified,
        }


@dataclass(frozen=True)
class CoveringRadius:
    value: float
    exact: bool

    def __float__(self):
        return self.value


def covering_radius(grid) -> CoveringRadius:
    """Euclidean covering radius of ``matrix @ Z^n``.

    Exact for n <= 3: the Voronoi cell is cut out by the half-spaces of all
    short combinations of an LLL-reduced basis and its farthest vertex is the
    covering radius.  For n > 3 the nearest-plane bound is returned with
    ``exact=False``.
    """
    M = grid.matrix.values if isinstance(grid, GridSpec) else check_invertible(as_array(grid))
    n = M.shape[0]
    B, _ = lll_reduce(M)
    if n == 1:
        return CoveringRadius(abs(float(B[0, 0])) / 2.0, True)
    if n > 3:
        return CoveringRadius(nearest_plane_radius(B), False)
    span = 3 if n == 2 else 2
    coeffs = np.array([c for c in itertools.product(range(-span, span + 1), repeat=n) if any(c)])
    vecs = coeffs @ B.T
    halfspaces = np.hstack([vecs, -0.5 * np.sum(vecs * vecs, axis=1, keepdims=True)])
    hs = HalfspaceIntersection(halfspaces, np.zeros(n))
    return CoveringRadius(float(np.max(np.linalg.norm(hs.intersections, axis=1))), True)


def enumerate_near_segment(grid: GridSpec, q: SegmentQuery, l: float,
                           cell_budget: int = DEFAULT_CELL_BUDGET) -> list:
    """Every ``z`` with dist(M z + g, L(a, b, l)) < eps, sorted, as tuples."""
    if not 0 < l <= q.l_max:
        raise ValueError("need 0 < l <= l_max")
    B, U = grid.reduced
    z, _, status = kernels.tube_points(B, grid.translation, q.anchor, q.direction,
                                       q.epsilon, l, cell_budget)
    if status == kernels.OVER_BUDGET:
        raise EnumerationBudgetExceeded(f"tube box exceeds {cell_budget} cells")
    orig = z @ U.T
    return sorted(tuple(int(x) for x in row) for row in orig)


def rational_period(grid: GridSpec, b, height: int = 10_000, tol: float = 1e-9) -> float:
    """Length of the translation period of the line direction ``b`` modulo
    the grid, or ``inf`` when ``M^{-1} b`` is not parallel to an integer
    vector of sup norm <= ``height``."""
    M = grid.matrix.values
    u = np.linalg.solve(M, np.asarray(b, float))
    piv = int(u.size - 1 - np.argmax(np.abs(u[::-1])))
    r = u / u[piv]
    m = np.arange(1, height + 1)[:, None]
    near = np.rint(m * r)
    ok = np.flatnonzero(np.max(np.abs(m * r - near), axis=1) < tol)
    if ok.size == 0:
        return float("inf")
    p = near[ok[0]]
    return float(np.linalg.norm(M @ p))


def _grid_first_hits(grid, anchors, dirs, eps, caps, cell_budget):
    B, U = grid.reduced
    e, z, status = kernels.first_hits(B, grid.translation, anchors, dirs, eps, caps,
                                      l0=max(4.0 * eps, 1.0), cell_budget=cell_budget)
    return e, z @ U.T, status


def _forest_hits(forest, anchors, dirs, eps, l_max, cell_budget, period_height=10_000):
    """Minimal entry length over all grids for each (anchor, direction) row.

    Returns (length, grid, coords, status, certified)."""
    Q = anchors.shape[0]
    best = np.full(Q, np.inf)
    grid_of = np.full(Q, -1)
    coords = np.zeros((Q, forest.n), dtype=np.int64)
    over = np.zeros(Q, dtype=bool)
    all_periodic = np.ones(Q, dtype=bool)
    uniq, inverse = np.unique(np.round(dirs, 15), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for i, grid in enumerate(forest.grids):
        periods = np.array([rational_period(grid, d, period_height) for d in uniq])[inverse]
        periodic = np.isfinite(periods)
        all_periodic &= periodic
        caps = np.minimum(np.where(periodic, periods + eps, np.inf), l_max)
        caps = np.minimum(caps, best)
        todo = np.flatnonzero(caps > 0)
        if todo.size == 0:
            continue
        e, z, status = _grid_first_hits(grid, anchors[todo], dirs[todo], eps, caps[todo], cell_budget)
        over[todo[status == kernels.OVER_BUDGET]] = True
        better = (status == kernels.HIT) & (e < best[todo])
        idx = todo[better]
        best[idx] = e[better]
        grid_of[idx] = i
        coords[idx] = z[better]
    certified = ~np.isfinite(best) & all_periodic & ~over
    return best, grid_of, coords, over, certified


def directional_visibility(forest: Forest, q: SegmentQuery,
                           cell_budget: int = DEFAULT_CELL_BUDGET) -> VisibilityOutcome:
    """Minimal half-length at which L(a, b, l) meets the eps-neighbourhood.

    The per-point entry length is computed in closed form, so the result is
    exact up to rounding; the search only decides which points to look at.
    """
    if q.anchor.size != forest.n:
        raise ValueError("query dimension does not match the forest")
    best, grid_of, coords, over, certified = _forest_hits(
        forest, q.anchor[None], q.direction[None], q.epsilon, q.l_max, cell_budget)
    if np.isfinite(best[0]):
        return VisibilityOutcome("hit", float(best[0]), int(grid_of[0]),
                                 tuple(int(x) for x in coords[0]))
    if over[0]:
        raise EnumerationBudgetExceeded(f"tube box exceeds {cell_budget} cells before l_max")
    return VisibilityOutcome("blocked", certified=bool(certified[0]))


def anchor_plan(n: int, radius: float, count: Optional[int] = None) -> np.ndarray:
    """Low-discrepancy anchors in the closed ball of ``radius``.

    Unscrambled Halton points in the cube, kept if inside the ball, so the
    plan is deterministic; the first anchor is the centre.
    """
    count = 4 ** n if count is None else int(count)
    sampler = qmc.Halton(d=n, scramble=False)
    out = [np.zeros(n)]
    while len(out) < count:
        pts = 2.0 * sampler.random(max(64, 4 * count)) - 1.0
        for p in pts:
            if p @ p <= 1.0:
                out.append(p)
                if len(out) == count:
                    break
    return radius * np.array(out)


@dataclass
class ProfilePoint:
    epsilon: float
    v_hat: float
    blocked: bool
    over_budget: bool
    anchor: Optional[np.ndarray] = None
    direction: Optional[np.ndarray] = None
    grid: Optional[int] = None
    coords: Optional[tuple] = None
    certified: bool = False
    queries: int = 0
    blocked_queries: int = 0


def visibility_profile(forest: Forest, epsilons: Sequence[float], covers,
                       anchors=None, l_max=None,
                       cell_budget: int = DEFAULT_CELL_BUDGET) -> list[ProfilePoint]:
    """Estimate V(eps) = max over sampled (a, b) of 2 * phi_eps(a, b).

    ``covers`` is a sequence (one per epsilon) of CapCover objects or arrays
    of unit directions; ``anchors`` is an array of anchor points (default: the
    low-discrepancy plan in the ball of the largest covering radius).  A
    profile point is ``blocked`` when some sampled pair reaches no tree
    within ``l_max``; the first such pair is recorded as the witness.
    """
    if anchors is None:
        rho = max(covering_radius(g).value for g in forest.grids)
        anchors = anchor_plan(forest.n, rho)
    anchors = np.atleast_2d(np.asarray(anchors, float))
    out = []
    for eps, cover in zip(epsilons, covers):
        dirs = np.asarray(getattr(cover, "vectors", cover), float)
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        A = np.repeat(anchors, len(dirs), axis=0)
        D = np.tile(dirs, (len(anchors), 1))
        lm = 1e6 * eps ** (-forest.n) if l_max is None else l_max
        best, grid_of, coords, over, certified = _forest_hits(forest, A, D, eps, lm, cell_budget)
        point = ProfilePoint(eps, 0.0, False, bool(over.any()), queries=len(A))
        blocked = ~np.isfinite(best) & ~over
        point.blocked_queries = int(blocked.sum())
        if blocked.any():
            j = int(np.flatnonzero(blocked)[0])
            point.v_hat = float("inf")
            point.blocked = True
            point.certified = bool(certified[j])
            point.anchor, point.direction = A[j], D[j]
        elif over.any():
            j = int(np.flatnonzero(over)[0])
            point.v_hat = float("inf")
            point.anchor, point.direction = A[j], D[j]
        else:
            j = int(np.argmax(best))
            point.v_hat = 2.0 * float(best[j])
            point.anchor, point.direction = A[j], D[j]
            point.grid = int(grid_of[j])
            point.coords = tuple(int(x) for x in coords[j])
        out.append(point)
    return out


def build_unipotent(x) -> Matrix:
    """Identity of size d+1 with ``x`` in the last column above the diagonal."""
    x = np.atleast_1d(np.asarray(x, float))
    d = x.size
    T = np.eye(d + 1)
    T[:d, d] = x
    return Matrix(T)


def rotated_copy_matrices(n: int) -> list[np.ndarray]:
    """Rotations Y_1..Y_n in SO(n) with Y_i e_n = e_i and Y_n = I.

    For i < n, Y_i is the quarter turn in the (e_i, e_n) plane taking e_n to
    e_i and e_i to -e_n.
    """
    out = []
    for i in range(n - 1):
        Y = np.eye(n)
        Y[i, i] = 0.0
        Y[n - 1, n - 1] = 0.0
        Y[i, n - 1] = 1.0
        Y[n - 1, i] = -1.0
        out.append(Y)
    out.append(np.eye(n))
    return out


def build_rotated_union(forest: Forest) -> Forest:
    """The forest of all grids Y_i M_j Z^n + Y_i g_j (i outer, j inner)."""
    grids = []
    for Y in rotated_copy_matrices(forest.n):
        Ym = Matrix(Y, tuple(tuple(int(v) for v in row) for row in Y))
        for g in forest.grids:
            m = Ym @ g.matrix if g.matrix.is_exact else Matrix(Y @ g.matrix.values)
            grids.append(GridSpec(m, Y @ g.translation))
    return Forest(tuple(grids))
