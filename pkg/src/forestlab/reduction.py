"""LLL reduction of lattice bases given as matrix columns."""
import numpy as np


def gram_schmidt(B):
    """Return (B*, mu) for the columns of ``B``: ``B = B* mu^T``."""
    B = np.asarray(B, dtype=float)
    n = B.shape[1]
    Bs = np.zeros_like(B)
    mu = np.eye(n)
    for i in range(n):
        v = B[:, i].copy()
        for j in range(i):
            mu[i, j] = (B[:, i] @ Bs[:, j]) / (Bs[:, j] @ Bs[:, j])
            v -= mu[i, j] * Bs[:, j]
        Bs[:, i] = v
    return Bs, mu


def lll_reduce(B, delta=0.99, max_iter=100_000):
    """LLL-reduce the columns of ``B``.

    Returns ``(B_red, U)`` with ``B_red = B @ U`` and ``U`` unimodular
    (integer entries, det +-1).  Floating point throughout; intended for
    the small dimensions used here.
    """
    B = np.array(B, dtype=float)
    n = B.shape[1]
    U = np.eye(n, dtype=np.int64)
    Bs, mu = gram_schmidt(B)
    k = 1
    it = 0
    while k < n:
        it += 1
        if it > max_iter:
            raise RuntimeError("LLL did not terminate")
        for j in range(k - 1, -1, -1):
            q = int(np.rint(mu[k, j]))
            if q:
                B[:, k] -= q * B[:, j]
                U[:, k] -= q * U[:, j]
                mu[k, :j + 1] -= q * mu[j, :j + 1]
        bk = Bs[:, k] @ Bs[:, k]
        bk1 = Bs[:, k - 1] @ Bs[:, k - 1]
        if bk >= (delta - mu[k, k - 1] ** 2) * bk1:
            k += 1
        else:
            B[:, [k - 1, k]] = B[:, [k, k - 1]]
            U[:, [k - 1, k]] = U[:, [k, k - 1]]
            Bs, mu = gram_schmidt(B)
            k = max(k - 1, 1)
    return B, U


def nearest_plane_radius(B):
    """Half the length of the Gram-Schmidt box diagonal of ``B``.

    Babai's nearest-plane rounding moves any point to a lattice point within
    this distance, so it bounds the covering radius from above.
    """
    Bs, _ = gram_schmidt(B)
    return 0.5 * float(np.sqrt(np.sum(Bs * Bs)))
