"""Independent brute-force reference implementations used only by the tests.

Everything here is deliberately written the slow, literal way — nested loops
over all index tuples, full grids over the circle, exact matrix inversion of
the refinement incidence — so that agreement with the fast library routines
is meaningful evidence and not a shared-bug tautology.
"""

import itertools
import math

import numpy as np


# ----------------------------------------------------------------------
# tensor algebra by loops


def apply_loops(mats, dense):
    """Multilinear action computed entry by entry with explicit loops."""
    r = dense.ndim
    out_shape = tuple(M.shape[0] for M in mats)
    in_ranges = [range(M.shape[1]) for M in mats]
    out = np.zeros(out_shape)
    for out_idx in itertools.product(*[range(m) for m in out_shape]):
        s = 0.0
        for in_idx in itertools.product(*in_ranges):
            p = dense[in_idx]
            for k in range(r):
                p *= mats[k][out_idx[k], in_idx[k]]
            s += p
        out[out_idx] = s
    return out


def poly_eval_loops(dense, x):
    """<T, x^(tensor r)> summed over every one of the d^r positions."""
    r = dense.ndim
    d = dense.shape[0]
    s = 0.0
    for idx in itertools.product(range(d), repeat=r):
        p = dense[idx]
        for i in idx:
            p *= x[i]
        s += p
    return s


# ----------------------------------------------------------------------
# k-statistics via the literal averaging-tensor contraction


def phi_entry(t_idx, n):
    nu = len(set(t_idx))
    val = 1.0 / math.comb(n - 1, nu - 1)
    return -val if (nu - 1) % 2 else val


def kstat_contraction(Y, r):
    """[k_r]_(i1..ir) = (1/n) sum over all time tuples of Phi * prod Y."""
    n, d = Y.shape
    out = np.zeros((d,) * r)
    time_tuples = list(itertools.product(range(n), repeat=r))
    phis = [phi_entry(t, n) for t in time_tuples]
    for i_idx in itertools.product(range(d), repeat=r):
        s = 0.0
        for t_idx, phi in zip(time_tuples, phis):
            p = phi
            for k in range(r):
                p *= Y[t_idx[k], i_idx[k]]
            s += p
        out[i_idx] = s / n
    return out


# ----------------------------------------------------------------------
# partition utilities, written independently


PARTITIONS_OF_4 = [
    [[0, 1, 2, 3]],
    [[0, 1, 2], [3]],
    [[0, 1, 3], [2]],
    [[0, 2, 3], [1]],
    [[1, 2, 3], [0]],
    [[0, 1], [2, 3]],
    [[0, 2], [1, 3]],
    [[0, 3], [1, 2]],
    [[0, 1], [2], [3]],
    [[0, 2], [1], [3]],
    [[0, 3], [1], [2]],
    [[1, 2], [0], [3]],
    [[1, 3], [0], [2]],
    [[2, 3], [0], [1]],
    [[0], [1], [2], [3]],
]


def contained_in(rho_blocks, pi_blocks):
    """Set-containment refinement test, no label maps."""
    pi_sets = [set(b) for b in pi_blocks]
    return all(any(set(b) <= s for s in pi_sets) for b in rho_blocks)


def mobius_by_matrix_inversion(parts):
    """The Mobius function as the inverse of the zeta (refinement) matrix.

    parts: list of partitions (any hashable canonical form).  Returns a dict
    (rho, pi) -> integer for all comparable pairs, computed by exactly
    inverting the incidence matrix over the rationals.
    """
    from fractions import Fraction

    m = len(parts)
    Z = [[Fraction(1 if contained_in(parts[i], parts[j]) else 0) for j in range(m)]
         for i in range(m)]
    # Gauss-Jordan over Fractions
    inv = [[Fraction(1 if i == j else 0) for j in range(m)] for i in range(m)]
    for col in range(m):
        piv = next(rr for rr in range(col, m) if Z[rr][col] != 0)
        Z[col], Z[piv] = Z[piv], Z[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        p = Z[col][col]
        Z[col] = [v / p for v in Z[col]]
        inv[col] = [v / p for v in inv[col]]
        for rr in range(m):
            if rr != col and Z[rr][col] != 0:
                f = Z[rr][col]
                Z[rr] = [a - f * b for a, b in zip(Z[rr], Z[col])]
                inv[rr] = [a - f * b for a, b in zip(inv[rr], inv[col])]
    out = {}
    for i in range(m):
        for j in range(m):
            if contained_in(parts[i], parts[j]):
                assert inv[i][j].denominator == 1
                out[(i, j)] = int(inv[i][j])
    return out


# ----------------------------------------------------------------------
# perfect matchings


def matchings(points):
    """All perfect matchings of a list of positions, as lists of pairs."""
    points = list(points)
    if not points:
        return [[]]
    if len(points) % 2:
        return []
    first, rest = points[0], points[1:]
    out = []
    for k in range(len(rest)):
        pair = (first, rest[k])
        for sub in matchings(rest[:k] + rest[k + 1:]):
            out.append([pair] + sub)
    return out


def matching_sum_loops(M, idx):
    total = 0.0
    for match in matchings(range(len(idx))):
        p = 1.0
        for a, b in match:
            p *= M[idx[a], idx[b]]
        total += p
    return total


# ----------------------------------------------------------------------
# finite differences


def jacobian_fd(fun, x, h=1e-6):
    """Central finite-difference Jacobian of a vector function."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for k in range(x.size):
        xp = x.copy()
        xp[k] += h
        xm = x.copy()
        xm[k] -= h
        J[:, k] = (fun(xp) - fun(xm)) / (2 * h)
    return J


# ----------------------------------------------------------------------
# circle scan for the d = 2 identified set


def circle_scan(residual_fn, n_grid=80001, tol=1e-4):
    """Cluster centers of {theta: residual < tol} for both matrix families.

    residual_fn(Q) -> float.  Returns a list of (is_reflection, theta)
    cluster representatives; endpoints 0 and 2*pi are merged.
    """
    reps = []
    for reflect in (False, True):
        thetas = np.linspace(0.0, 2.0 * math.pi, n_grid)
        hit = np.zeros(n_grid, dtype=bool)
        for k, th in enumerate(thetas):
            c, s = math.cos(th), math.sin(th)
            Q = np.array([[c, s], [s, -c]]) if reflect else np.array([[c, -s], [s, c]])
            hit[k] = residual_fn(Q) < tol
        # group consecutive hits, wrapping around
        k = 0
        clusters = []
        while k < n_grid:
            if hit[k]:
                j = k
                while j + 1 < n_grid and hit[j + 1]:
                    j += 1
                clusters.append((k, j))
                k = j + 1
            else:
                k += 1
        if len(clusters) >= 2 and clusters[0][0] == 0 and clusters[-1][1] == n_grid - 1:
            first = clusters.pop(0)
            last = clusters.pop()
            clusters.append((last[0] - n_grid, first[1]))
        for a, b in clusters:
            reps.append((reflect, float(thetas[(a + b) // 2])))
    return reps


def matrix_from_angle(reflect, theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]]) if reflect else np.array([[c, -s], [s, c]])
