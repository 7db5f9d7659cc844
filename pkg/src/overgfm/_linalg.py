import numpy as np


def truncated_svd(M, q):
    """Leading ``q`` singular triplets of ``M`` as ``(U, d, V)``.

    Signs are not normalised here; callers apply their own convention.
    """
    U, d, Vt = np.linalg.svd(np.asarray(M, dtype=float), full_matrices=False)
    return U[:, :q], d[:q], Vt[:q].T


def factor_split(U, d, V, n):
    """Scores sqrt(n) U and loadings V D / sqrt(n)."""
    rn = np.sqrt(n)
    return rn * U, V * (d / rn)[None, :]


def fix_signs(H, B):
    """Flip column pairs so the first nonzero entry of each column of B is positive."""
    H = H.copy()
    B = B.copy()
    for k in range(B.shape[1]):
        nz = np.flatnonzero(B[:, k])
        if nz.size and B[nz[0], k] < 0:
            B[:, k] = -B[:, k]
            H[:, k] = -H[:, k]
    return H, B
