"""Real matrices, the Iwasawa factorisation and projective geometry of S^d."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import SingularMatrix

__all__ = [
    "Matrix", "ProjectivePoint", "IwasawaParts", "as_array", "det_tolerance",
    "check_invertible", "iwasawa_decompose", "projective_distance",
    "projective_distance_rows", "projective_lipschitz_bound",
    "projective_lipschitz_estimate", "sample_rotation", "haar_rotations",
    "sup_dist_to_integers", "rotation2", "parse_entry",
]


def parse_entry(x) -> Fraction | float:
    """Parse one matrix entry: numbers pass through, ``"p/q"`` strings and
    Fractions become exact rationals."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return float(x)


def det_tolerance(values: np.ndarray) -> float:
    n = values.shape[0]
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    return 1e-12 * scale ** n


def check_invertible(values) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise SingularMatrix(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SingularMatrix("matrix has non-finite entries")
    det = np.linalg.det(a)
    if not abs(det) > det_tolerance(a):
        raise SingularMatrix(f"|det| = {abs(det):.3e} below tolerance {det_tolerance(a):.3e}")
    return a


@dataclass(frozen=True, eq=False)
class Matrix:
    """An invertible n x n real matrix, optionally with exact rational entries."""

    values: np.ndarray
    exact: Optional[tuple] = None

    def __post_init__(self):
        v = check_invertible(self.values)
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.exact is not None:
            ex = tuple(tuple(Fraction(e) for e in row) for row in self.exact)
            if np.max(np.abs(np.array([[float(e) for e in r] for r in ex]) - v)) > 4e-16 * max(1.0, np.max(np.abs(v))):
                raise ValueError("exact entries disagree with floating values")
            object.__setattr__(self, "exact", ex)

    @classmethod
    def from_entries(cls, rows: Sequence[Sequence]) -> "Matrix":
        parsed = [[parse_entry(x) for x in row] for row in rows]
        values = np.array([[float(x) for x in row] for row in parsed], dtype=float)
        if all(isinstance(x, Fraction) for row in parsed for x in row):
            return cls(values, tuple(tuple(row) for row in parsed))
        return cls(values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.values)

    def exact_inverse(self) -> list[list[Fraction]]:
        if self.exact is None:
            raise ValueError("matrix has no exact entries")
        return fraction_inverse(self.exact)

    def __matmul__(self, other):
        if isinstance(other, Matrix):
            if self.exact is not None and other.exact is not None:
                prod = fraction_matmul(self.exact, other.exact)
                return Matrix(np.array([[float(x) for x in r] for r in prod]), tuple(map(tuple, prod)))
            return Matrix(self.values @ other.values)
        return self.values @ np.asarray(other)

    def __repr__(self):
        tag = ", exact" if self.exact is not None else ""
        return f"Matrix({self.values.tolist()}{tag})"


def as_array(m) -> np.ndarray:
    if isinstance(m, Matrix):
        return m.values
    return np.asarray(m, dtype=float)


def fraction_matmul(a, b):
    n, m, p = len(a), len(b), len(b[0])
    return [[sum((a[i][k] * b[k][j] for k in range(m)), Fraction(0)) for j in range(p)]
            for i in range(n)]


def fraction_inverse(a) -> list[list[Fraction]]:
    """Gauss-Jordan inverse over the rationals."""
    n = len(a)
    aug = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise SingularMatrix("exact matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [x / p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


@dataclass(frozen=True)
class ProjectivePoint:
    """A line through the origin, stored as a unit vector whose first
    nonzero coordinate is positive."""

    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).ravel()
        norm = np.linalg.norm(v)
        if not norm > 0 or not np.isfinite(norm):
            raise ValueError("a projective point needs a nonzero finite representative")
        v = v / norm
        nz = np.flatnonzero(np.abs(v) > 0)
        if v[nz[0]] < 0:
            v = -v
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        """Dimension d of the projective space P^d."""
        return self.vector.size - 1

    def __eq__(self, other):
        if not isinstance(other, ProjectivePoint):
            return NotImplemented
        return self.vector.shape == other.vector.shape and bool(
            np.allclose(self.vector, other.vector, rtol=0, atol=1e-12))

    def __hash__(self):
        return hash(tuple(np.round(self.vector, 10)))

    def __repr__(self):
        return f"ProjectivePoint({np.array2string(self.vector, precision=6)})"


def _unit(x) -> np.ndarray:
    if isinstance(x, ProjectivePoint):
        return x.vector
    v = np.asarray(x, dtype=float)
    return v / np.linalg.norm(v)


def projective_distance(u, v) -> float:
    """Sine of the acute angle between the lines spanned by ``u`` and ``v``.

    Evaluated as the length of the component of the unit vector ``u``
    orthogonal to ``v``, which equals ``sqrt(1 - (u.v)^2)`` but does not lose
    half the digits near zero.
    """
    a, b = _unit(u), _unit(v)
    c = float(np.clip(a @ b, -1.0, 1.0))
    s = float(np.linalg.norm(a - c * b))
    return min(max(s, 0.0), 1.0)


def projective_distance_rows(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Row-wise :func:`projective_distance` for stacks of vectors."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    U = U / np.linalg.norm(U, axis=-1, keepdims=True)
    V = V / np.linalg.norm(V, axis=-1, keepdims=True)
    c = np.clip(np.sum(U * V, axis=-1), -1.0, 1.0)
    s = np.linalg.norm(U - c[..., None] * V, axis=-1)
    return np.clip(s, 0.0, 1.0)


@dataclass(frozen=True)
class IwasawaParts:
    R: np.ndarray
    D: np.ndarray
    T: np.ndarray

    def product(self) -> np.ndarray:
        return self.R @ self.D @ self.T


def iwasawa_decompose(M) -> IwasawaParts:
    """Factor ``M = R D T`` by modified Gram-Schmidt on the columns.

    ``R`` is orthogonal, ``D`` positive diagonal and ``T`` unit upper
    triangular.  ``det R = +1`` exactly when ``det M > 0``; for ``det M < 0``
    no factorisation with ``R`` in SO(n) and ``D > 0`` exists, and ``R`` is
    returned with determinant -1.
    """
    A = check_invertible(as_array(M))
    n = A.shape[0]
    Q = A.copy()
    U = np.zeros((n, n))
    for j in range(n):
        for i in range(j):
            U[i, j] = Q[:, i] @ Q[:, j]
            Q[:, j] -= U[i, j] * Q[:, i]
        U[j, j] = np.linalg.norm(Q[:, j])
        Q[:, j] /= U[j, j]
    # one reorthogonalisation pass keeps R orthogonal to ~1e-15 for
    # ill-conditioned inputs
    for j in range(n):
        for i in range(j):
            c = Q[:, i] @ Q[:, j]
            Q[:, j] -= c * Q[:, i]
            U[i, j] += c * U[j, j]
        nrm = np.linalg.norm(Q[:, j])
        Q[:, j] /= nrm
        U[j, j] *= nrm
    diag = np.diag(U).copy()
    D = np.diag(diag)
    T = U / diag[:, None]
    np.fill_diagonal(T, 1.0)
    return IwasawaParts(Q, D, T)


def projective_lipschitz_bound(M) -> float:
    """Upper bound sigma_max / sigma_min for the projective Lipschitz constant.

    The map [x] -> [Mx] is cond(M)-Lipschitz for the angle metric on lines,
    and sin is concave on [0, pi/2], so the same factor bounds ratios of
    projective distances.
    """
    s = np.linalg.svd(check_invertible(as_array(M)), compute_uv=False)
    return float(s[0] / s[-1])


def projective_lipschitz_estimate(M, pairs: int = 100_000, seed: int = 0) -> float:
    """Largest observed ratio psi([Mu],[Mv]) / psi([u],[v]) over random pairs.

    Half the pairs are independent uniform directions, half are close pairs
    (the supremum is approached as [u] -> [v]).
    """
    A = check_invertible(as_array(M))
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((pairs, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = rng.standard_normal((pairs, n))
    half = pairs // 2
    v[half:] = u[half:] + 1e-3 * v[half:]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    base = projective_distance_rows(u, v)
    keep = base > 1e-7
    image = projective_distance_rows(u[keep] @ A.T, v[keep] @ A.T)
    return float(np.max(image / base[keep]))


def haar_rotations(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent Haar-distributed elements of SO(d+1)."""
    n = d + 1
    G = rng.standard_normal((count, n, n))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    Q = Q * signs[:, None, :]
    neg = np.linalg.det(Q) < 0
    Q[neg, :, -1] *= -1.0
    return Q


def sample_rotation(d: int, seed: int) -> np.ndarray:
    if d < 1:
        raise ValueError("d must be >= 1")
    return haar_rotations(d, 1, np.random.default_rng(seed))[0]


def sup_dist_to_integers(x) -> float | np.ndarray:
    """``min_q ||x - q||_inf`` over integer vectors ``q`` (along the last axis)."""
    a = np.asarray(x, dtype=float)
    r = np.abs(a - np.rint(a))
    if a.ndim == 0:
        return float(r)
    out = np.max(r, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])
