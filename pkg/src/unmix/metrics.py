"""Error metrics between an estimated and a true mixing matrix.

Both metrics judge M = A_true @ inv(A_hat) (equivalently inv(A_hat) @ Q @
A_true for the Frobenius variant): estimation is only meaningful up to a
signed permutation, so the metrics quotient that group out.
"""

from __future__ import annotations

import numpy as np

from .restrictions import signed_permutations

__all__ = ["frobenius_error", "amari_error", "align_to_reference"]


def _check_pair(A_hat, A_true):
    A_hat = np.asarray(A_hat, dtype=float)
    A_true = np.asarray(A_true, dtype=float)
    if A_hat.shape != A_true.shape or A_hat.ndim != 2 or A_hat.shape[0] != A_hat.shape[1]:
        raise ValueError("matrices must be square and of equal shape")
    return A_hat, A_true


def frobenius_error(A_hat, A_true) -> float:
    """min over signed permutations P of ||inv(A_hat) P A_true - I||_F / d^2.

    Exact minimization over all 2^d d! signed permutations for d <= 6; a
    greedy row assignment (best |entry| first, then sign) is used beyond
    that, which upper-bounds the exact value.
    """
    A_hat, A_true = _check_pair(A_hat, A_true)
    d = A_hat.shape[0]
    eye = np.eye(d)
    inv_hat = np.linalg.inv(A_hat)

    def value(P):
        return float(np.linalg.norm(inv_hat @ P @ A_true - eye)) / d**2

    if d <= 6:
        return min(value(P) for P in signed_permutations(d))
    # greedy fallback: the ideal P solves inv(A_hat) P A_true = I, i.e.
    # P = A_hat inv(A_true); snap that to a signed permutation row by row,
    # largest magnitudes first
    N = A_hat @ np.linalg.inv(A_true)
    P = np.zeros((d, d))
    used: set[int] = set()
    for i in np.argsort(-np.abs(N).max(axis=1)):
        for j in np.argsort(-np.abs(N[i])):
            if int(j) not in used:
                used.add(int(j))
                P[i, int(j)] = 1.0 if N[i, j] >= 0 else -1.0
                break
    return value(P)


def amari_error(A_hat, A_true) -> float:
    """Permutation-invariant Amari index of M = A_true @ inv(A_hat).

    Sums, over rows and columns of M, how far each is from having a single
    dominant entry, divided by 2d.  Zero iff M is a signed scaled
    permutation.
    """
    A_hat, A_true = _check_pair(A_hat, A_true)
    d = A_hat.shape[0]
    M = np.abs(A_true @ np.linalg.inv(A_hat))
    row_max = M.max(axis=1)
    col_max = M.max(axis=0)
    if np.any(row_max == 0.0) or np.any(col_max == 0.0):
        raise ValueError("degenerate product matrix: zero row or column")
    total = float(np.sum(M / row_max[:, None]) - d + np.sum(M / col_max[None, :]) - d)
    return total / (2.0 * d)


def align_to_reference(A_hat, A_ref):
    """Signed row permutation of A_hat closest to A_ref in Frobenius norm.

    Searches all d! row orders with, for each, the per-row optimal sign.
    Returns (aligned, P) with aligned = P @ A_hat.  Limited to d <= 6.
    """
    import itertools

    A_hat, A_ref = _check_pair(A_hat, A_ref)
    d = A_hat.shape[0]
    if d > 6:
        raise ValueError("alignment search is limited to d <= 6")
    best = (np.inf, None)
    for perm in itertools.permutations(range(d)):
        P = np.zeros((d, d))
        dist = 0.0
        for i, j in enumerate(perm):
            dot = float(A_hat[j] @ A_ref[i])
            s = 1.0 if dot >= 0.0 else -1.0
            P[i, j] = s
            dist += float(np.sum((s * A_hat[j] - A_ref[i]) ** 2))
        if dist < best[0]:
            best = (dist, P)
    P = best[1]
    return P @ A_hat, P
