"""Integer relations and the dense-forest criterion for unions of grids.

A union of grids ``M_i Z^n + g_i`` is a dense forest for every choice of
translations exactly when no direction ``b`` makes all the pull-backs
``M_i^{-1} b`` rationally dependent.  Equivalently, there are no nonzero
integer vectors ``p_i`` whose duals ``w_i = M_i^{-T} p_i`` all lie in one
hyperplane (the hyperplane orthogonal to ``b``).  The checks here search
for such certificates up to a height bound; not finding one is a bounded
statement, never a proof.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import SearchBudgetExceeded
from .linalg import Matrix, fraction_inverse
from .reduction import lll_reduce

__all__ = [
    "RelationWitness", "ForestVerdict", "DirectionVerdict", "integer_relation",
    "dense_forest_check", "direction_dependence", "primitive_vectors",
    "DEFAULT_HEIGHT", "DEFAULT_TOL",
]

DEFAULT_HEIGHT = 50
DEFAULT_TOL = 1e-9
DEFAULT_BUDGET = 10 ** 9


@dataclass(frozen=True)
class RelationWitness:
    q: tuple
    residual: float
    exact: bool = False

    @property
    def height(self) -> int:
        return max(abs(x) for x in self.q)


def _canonical(q):
    q = [int(x) for x in q]
    for x in q:
        if x:
            return tuple(q) if x > 0 else tuple(-y for y in q)
    return tuple(q)


def _is_exact_vector(v) -> bool:
    return all(isinstance(x, (Fraction, int, np.integer)) for x in v)


def _verify(q, v, vf, tol):
    if _is_exact_vector(v):
        r = abs(sum((Fraction(int(a)) * Fraction(b) for a, b in zip(q, v)), Fraction(0)))
        return r == 0, float(r), True
    res = abs(float(np.dot(np.asarray(q, float), vf)))
    return res < tol * float(np.linalg.norm(vf)), res, False


def integer_relation(v, H: int = DEFAULT_HEIGHT, tol: float = DEFAULT_TOL,
                     scan_budget: int = 10 ** 8) -> Optional[RelationWitness]:
    """Find nonzero integer ``q`` with ``||q||_inf <= H`` and ``|q.v| < tol*||v||``.

    Exhaustive over the box for n <= 3 (and for larger n when the box is
    within ``scan_budget``); otherwise candidates come from an LLL-reduced
    relation lattice.  Entries given as Fractions are checked exactly and
    only exact relations are returned for them.  The reported witness is the
    smallest in (sup norm, lexicographic) order with first nonzero entry
    positive.
    """
    if H < 1 or not tol > 0:
        raise ValueError("need H >= 1 and tol > 0")
    exact = _is_exact_vector(v)
    vf = np.array([float(x) for x in v], dtype=float)
    n = vf.size
    if not np.any(vf):
        return RelationWitness(_canonical([1] + [0] * (n - 1)), 0.0, exact)
    search_tol = min(tol, 1e-12) if exact else tol
    if n <= 3 or (2 * H + 1) ** (n - 1) <= scan_budget:
        q, _, found = kernels.relation_scan(vf[None], H, search_tol)
        if not found[0]:
            return None
        cand = [_canonical(q[0])]
    else:
        cand = _lll_candidates(vf, H, search_tol)
    for q in cand:
        ok, res, ex = _verify(q, v, vf, tol)
        if ok:
            return RelationWitness(q, res, ex)
    return None


def _lll_candidates(vf, H, tol):
    n = vf.size
    scale = 1.0 / (tol * np.linalg.norm(vf))
    B = np.vstack([np.eye(n), scale * vf[None, :]])
    red, U = lll_reduce(B)
    cols = [U[:, j] for j in range(n)]
    cols += [U[:, i] + s * U[:, j] for i in range(n) for j in range(i + 1, n) for s in (-1, 1)]
    out = set()
    for c in cols:
        if np.any(c) and np.max(np.abs(c)) <= H and abs(c @ vf) < tol * np.linalg.norm(vf):
            out.add(_canonical(c))
    return sorted(out, key=lambda q: (max(abs(x) for x in q), q))


def primitive_vectors(n: int, H: int) -> np.ndarray:
    """Primitive integer vectors with ``||p||_inf <= H``, one per sign class
    (first nonzero entry positive), ordered by sup norm then lexicographically."""
    rng = np.arange(-H, H + 1)
    grids = np.meshgrid(*[rng] * n, indexing="ij")
    P = np.stack([g.ravel() for g in grids], axis=1)
    P = P[np.any(P != 0, axis=1)]
    first = P[np.arange(len(P)), np.argmax(P != 0, axis=1)]
    P = P[first > 0]
    g = np.gcd.reduce(np.abs(P), axis=1)
    P = P[g == 1]
    norms = np.max(np.abs(P), axis=1)
    order = np.lexsort(tuple(P[:, i] for i in range(n - 1, -1, -1)) + (norms,))
    return P[order]


@dataclass
class ForestVerdict:
    """Result of :func:`dense_forest_check`.

    ``status`` is ``"not_dense_forest"`` (a certificate: the ``p_i`` and the
    common direction ``b``) or ``"no_obstruction"`` (nothing found up to
    ``height``).
    """

    status: str
    height: int
    tolerance: float
    p: Optional[list] = None
    b: Optional[np.ndarray] = None
    residual: Optional[float] = None
    exact: bool = False
    shortcut: bool = False

    @property
    def is_forest_obstructed(self) -> bool:
        return self.status == "not_dense_forest"

    def pullbacks(self, matrices) -> list:
        """The vectors v_i = M_i^{-1} b; all M_i v_i coincide with b."""
        return [np.linalg.solve(np.asarray(m, float), self.b) for m in matrices]

    def to_dict(self) -> dict:
        witness = None
        if self.p is not None:
            witness = {
                "p": [list(map(int, p)) for p in self.p],
                "b": [float(x) for x in self.b],
                "residual": self.residual,
                "exact": self.exact,
            }
        return {"status": self.status, "witness": witness,
                "height": self.height, "tolerance": self.tolerance}


def _as_matrices(Ms) -> list[Matrix]:
    out = [m if isinstance(m, Matrix) else Matrix(np.asarray(m, float)) for m in Ms]
    if not out:
        raise ValueError("need at least one matrix")
    if len({m.n for m in out}) != 1:
        raise ValueError("matrices must share one dimension")
    return out


def _canonical_unit(b):
    b = np.asarray(b, float)
    b = b / np.linalg.norm(b)
    nz = np.flatnonzero(np.abs(b) > 1e-15)
    b = -b if b[nz[0]] < 0 else b
    return b + 0.0


def _stack_residual(W):
    Wn = W / np.linalg.norm(W, axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(Wn)
    n = W.shape[1]
    sig = s[n - 1] if len(s) >= n else 0.0
    return float(sig), _canonical_unit(vt[-1])


def _exact_check(mats, ps):
    """Exact rank test of the stacked w_i; returns (ok, b) or (False, None)."""
    rows = []
    for m, p in zip(mats, ps):
        inv = fraction_inverse(m.exact)
        n = len(inv)
        rows.append([sum((inv[j][i] * int(p[j]) for j in range(n)), Fraction(0)) for i in range(n)])
    null = _fraction_nullspace(rows)
    if null is None:
        return False, None
    return True, _canonical_unit([float(x) for x in null])


def _fraction_nullspace(rows):
    """A nonzero rational vector orthogonal to every row, or None."""
    n = len(rows[0])
    A = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, len(A)) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        pv = A[r][c]
        A[r] = [x / pv for x in A[r]]
        for i in range(len(A)):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [x - f * y for x, y in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    free = [c for c in range(n) if c not in pivots]
    if not free:
        return None
    f = free[0]
    x = [Fraction(0)] * n
    x[f] = Fraction(1)
    for i, c in enumerate(pivots):
        x[c] = -A[i][f]
    return x


def _finish(mats, ps, H, tol, shortcut=False):
    W = np.array([np.linalg.solve(m.values.T, np.asarray(p, float)) for m, p in zip(mats, ps)])
    if all(m.is_exact for m in mats):
        ok, b = _exact_check(mats, ps)
        if ok:
            return ForestVerdict("not_dense_forest", H, tol, [tuple(map(int, p)) for p in ps],
                                 b, 0.0, True, shortcut)
        return None
    sig, b = _stack_residual(W)
    if sig < tol:
        return ForestVerdict("not_dense_forest", H, tol, [tuple(map(int, p)) for p in ps],
                             b, sig, False, shortcut)
    return None


def dense_forest_check(Ms: Sequence, H: int = DEFAULT_HEIGHT, tol: float = DEFAULT_TOL,
                       budget: int = DEFAULT_BUDGET) -> ForestVerdict:
    """Search for a certificate that ``M_1, ..., M_k`` do not give dense forests.

    With fewer grids than dimensions a common orthogonal direction always
    exists and is returned directly.  Otherwise the search enumerates
    primitive ``p`` for n-1 of the grids, which fixes ``b``, and solves for
    the remaining ``p_j`` with an exhaustive relation scan of
    ``M_j^{-1} b``.  For n = 3 certificates where all ``w_i`` are parallel
    are searched as well; for n >= 4 only certificates whose ``w_i`` span a
    hyperplane are searched.
    """
    mats = _as_matrices(Ms)
    n, k = mats[0].n, len(mats)
    if n == 1:
        # every nonzero real is rationally independent on its own
        return ForestVerdict("no_obstruction", H, tol)
    if k < n:
        ps = [tuple([1] + [0] * (n - 1))] * k
        v = _finish(mats, ps, H, tol, shortcut=True)
        if v is None:
            # the stack always has a kernel; fall back to the floating answer
            W = np.array([np.linalg.solve(m.values.T, np.asarray(p, float)) for m, p in zip(mats, ps)])
            sig, b = _stack_residual(W)
            v = ForestVerdict("not_dense_forest", H, tol, ps, b, sig, False, True)
        return v

    prims = primitive_vectors(n, H)
    rest_cost = (2 * H + 1) ** (n - 1)
    subsets = list(itertools.combinations(range(k), n - 1))
    cost = len(subsets) * len(prims) ** (n - 1) * max(1, k - n + 1) * rest_cost
    if cost > budget:
        raise SearchBudgetExceeded(
            f"reduced search needs ~{cost:.3g} steps (budget {budget}); lower H or raise budget")

    relation_tol = max(tol, 1e-12) * 1e3
    best = None
    if n == 3:
        best = _parallel_search(mats, prims, H, tol)
    for sub in subsets:
        found = _subset_search(mats, sub, prims, H, tol, relation_tol)
        if found is not None and (best is None or _witness_key(found) < _witness_key(best)):
            best = found
        if best is not None and n == 2:
            break
    if best is not None:
        return best
    return ForestVerdict("no_obstruction", H, tol)


def _witness_key(v: ForestVerdict):
    return tuple(itertools.chain.from_iterable((max(map(abs, p)),) + tuple(p) for p in v.p))


def _relations_for(mats, j, B, H, tol):
    """Relation scan of M_j^{-1} b for every row b of B."""
    V = np.linalg.solve(mats[j].values, B.T).T
    return kernels.relation_scan(V, H, tol)


def _subset_search(mats, sub, prims, H, tol, relation_tol):
    n, k = mats[0].n, len(mats)
    others = [j for j in range(k) if j not in sub]
    duals = [np.linalg.solve(mats[i].values.T, prims.T).T for i in sub]
    for combo in itertools.product(range(len(prims)), repeat=n - 2):
        # n - 1 chosen grids: the first varies fastest in a vectorised batch
        fixed = [duals[t + 1][combo[t]] for t in range(n - 2)]
        W = np.stack([np.broadcast_to(f, duals[0].shape) for f in fixed] + [duals[0]], axis=1)
        # normal of the hyperplane spanned by the n-1 rows: last right singular vector
        _, s, vt = np.linalg.svd(W)
        B = vt[:, -1, :]
        keep = s[:, -1] > 1e-9 * s[:, 0] if n > 2 else np.ones(len(W), bool)
        if n > 2:
            keep &= s[:, n - 2] > 1e-9 * s[:, 0]
        idx = np.flatnonzero(keep)
        if idx.size == 0:
            continue
        chosen = {sub[0]: prims[idx]}
        for t in range(n - 2):
            chosen[sub[t + 1]] = np.broadcast_to(prims[combo[t]], (idx.size, n))
        ok = np.ones(idx.size, bool)
        sols = {}
        for j in others:
            q, _, found = _relations_for(mats, j, B[idx], H, relation_tol)
            ok &= found
            sols[j] = q
        for r in np.flatnonzero(ok):
            ps = []
            for i in range(k):
                ps.append(chosen[i][r] if i in chosen else sols[i][r])
            v = _finish(mats, [_canonical(p) for p in ps], H, tol)
            if v is not None:
                return v
    return None


def _parallel_search(mats, prims, H, tol):
    """Certificates with every w_i parallel to w_1 (rank one stacks)."""
    k = len(mats)
    W1 = np.linalg.solve(mats[0].values.T, prims.T).T
    ok = np.ones(len(prims), bool)
    sols = {}
    for j in range(1, k):
        Y = W1 @ mats[j].values  # rows M_j^T w_1
        q, found = _parallel_integer(Y, H)
        ok &= found
        sols[j] = q
    for r in np.flatnonzero(ok):
        ps = [prims[r]] + [sols[j][r] for j in range(1, k)]
        v = _finish(mats, [_canonical(p) for p in ps], H, tol)
        if v is not None:
            return v
    return None


def _parallel_integer(Y, H, tol=1e-9):
    """Smallest primitive integer vector parallel to each row of Y."""
    m, n = Y.shape
    piv = n - 1 - np.argmax(np.abs(Y[:, ::-1]), axis=1)
    R = Y / Y[np.arange(m), piv][:, None]
    out = np.zeros((m, n), dtype=np.int64)
    found = np.zeros(m, bool)
    for t in range(1, H + 1):
        near = np.rint(t * R)
        good = ~found & (np.max(np.abs(t * R - near), axis=1) < tol * t) & (np.max(np.abs(near), axis=1) <= H)
        out[good] = near[good].astype(np.int64)
        found |= good
    return out, found


@dataclass(frozen=True)
class DirectionVerdict:
    grid: int
    dependent: bool
    witness: Optional[RelationWitness] = None


def direction_dependence(Ms: Sequence, b, H: int = DEFAULT_HEIGHT,
                         tol: float = DEFAULT_TOL) -> list[DirectionVerdict]:
    """Per grid, whether ``M_i^{-1} b`` has a bounded integer relation.

    If no grid is independent, lines in direction ``b`` avoid every grid's
    neighbourhood for almost every anchor once eps is small enough.
    """
    mats = _as_matrices(Ms)
    b = np.asarray(b, float)
    out = []
    for i, m in enumerate(mats):
        w = integer_relation(np.linalg.solve(m.values, b), H, tol)
        out.append(DirectionVerdict(i, w is not None, w))
    return out
