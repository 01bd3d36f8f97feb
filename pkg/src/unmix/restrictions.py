"""Zero patterns on symmetric tensors and identification analysis.

A zero pattern is a set of unique multi-indices whose entries are restricted
(to zero, or to user-supplied target values).  Identification asks which
orthogonal matrices Q map a given tensor into the pattern; the signed
permutation matrices always do when the pattern is permutation-stable, and
the question is whether anything else does.

Provided here:

* the built-in pattern families (diagonal, reflectional, mean-independent,
  minimal, custom) with validation;
* genericity checks — cheap sufficient conditions on the tensor under which
  the pattern identifies up to signed permutation;
* exact membership / residual evaluation for a candidate Q;
* a local (first-order) identification test via the rank of the derivative
  of the constraint map along the orthogonal group;
* complete enumeration of the solution set for d = 2, where it is the
  variety of a few univariate polynomials.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tensors import (
    SymmetricTensor,
    index_rank,
    multilinear_apply,
    multilinear_apply_general,
    num_unique,
    unique_indices,
)

__all__ = [
    "ZeroPattern",
    "make_pattern",
    "PATTERN_KINDS",
    "signed_permutations",
    "is_signed_permutation",
    "GenericityResult",
    "check_genericity",
    "in_identified_set",
    "pattern_residual",
    "local_identification_test",
    "enumerate_identified_set_2d",
    "explore_identified_set",
]

log = logging.getLogger(__name__)

PATTERN_KINDS = ("diagonal", "reflectional", "mean_independence", "minimal", "custom")


@dataclass(frozen=True)
class ZeroPattern:
    """A set of constrained coordinates of an order-r symmetric tensor.

    ``indices`` are 0-based nondecreasing tuples in canonical (lexicographic)
    order; ``targets`` aligns with ``indices`` and defaults to all zeros.
    """

    d: int
    r: int
    kind: str
    indices: tuple[tuple[int, ...], ...]
    targets: tuple[float, ...] = field(default=None)

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        seen = set()
        canon = []
        for idx in self.indices:
            key = tuple(sorted(int(i) for i in idx))
            if len(key) != self.r or key[0] < 0 or key[-1] >= self.d:
                raise ValueError(f"pattern index {idx!r} invalid for d={self.d}, r={self.r}")
            if key in seen:
                raise ValueError(f"duplicate pattern index {idx!r}")
            seen.add(key)
            canon.append(key)
        order = sorted(range(len(canon)), key=lambda k: canon[k])
        object.__setattr__(self, "indices", tuple(canon[k] for k in order))
        if len(self.indices) == 0:
            raise ValueError("pattern must constrain at least one coordinate")
        if self.targets is None:
            tg = (0.0,) * len(self.indices)
        else:
            tg = tuple(float(t) for t in self.targets)
            if len(tg) != len(canon):
                raise ValueError("targets must align one-to-one with indices")
            tg = tuple(tg[k] for k in order)
        object.__setattr__(self, "targets", tg)

    @property
    def size(self) -> int:
        return len(self.indices)

    def positions(self) -> np.ndarray:
        """Ranks of the constrained indices in unique-entry storage order."""
        return np.array([index_rank(i, self.d) for i in self.indices], dtype=np.int64)

    def target_vector(self) -> np.ndarray:
        return np.array(self.targets, dtype=float)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "r": self.r,
            "indices": [[i + 1 for i in idx] for idx in self.indices],
            "targets": list(self.targets),
        }


def _diagonal_indices(d: int, r: int):
    return [idx for idx in unique_indices(d, r) if any(i != idx[0] for i in idx)]


def _reflectional_indices(d: int, r: int):
    out = []
    for idx in unique_indices(d, r):
        counts = [0] * d
        for i in idx:
            counts[i] += 1
        if any(c % 2 for c in counts):
            out.append(idx)
    return out


def _mean_independence_indices(d: int, r: int):
    out = []
    for i in range(d):
        for j in range(d):
            if i < j:
                out.append(tuple(sorted((i,) + (j,) * (r - 1))))
                out.append(tuple(sorted((i,) * (r - 1) + (j,))))
    return sorted(set(out))


def _minimal_indices(d: int, r: int):
    return [tuple(sorted((i,) + (j,) * (r - 1))) for j in range(d) for i in range(j)]


def make_pattern(kind: str, d: int, r: int, indices=None, targets=None) -> ZeroPattern:
    """Construct a built-in or custom zero pattern.

    The built-ins ignore ``indices``; pass kind='custom' with explicit
    1-based-free (0-based) index tuples for anything else.  ``targets``
    optionally pins the constrained coordinates to nonzero known values,
    aligned with the canonical index order of the resulting pattern.
    """
    if d < 2 or r < 2:
        raise ValueError(f"patterns need d >= 2 and r >= 2, got d={d}, r={r}")
    if kind == "diagonal":
        idx = _diagonal_indices(d, r)
    elif kind == "reflectional":
        if r % 2:
            raise ValueError("reflectional pattern requires an even order r")
        idx = _reflectional_indices(d, r)
    elif kind == "mean_independence":
        idx = _mean_independence_indices(d, r)
    elif kind == "minimal":
        idx = _minimal_indices(d, r)
    elif kind == "custom":
        if not indices:
            raise ValueError("custom pattern needs explicit indices")
        idx = list(indices)
    else:
        raise ValueError(f"unknown pattern kind {kind!r}")
    if targets is not None and kind != "custom":
        # built-ins are zero patterns; targets are canonically ordered anyway
        tg = list(targets)
        if len(tg) != len(idx):
            raise ValueError("targets must align one-to-one with pattern indices")
        # align with the canonical sort ZeroPattern applies
        canon = [tuple(sorted(i)) for i in idx]
        order = sorted(range(len(canon)), key=lambda k: canon[k])
        idx = [idx[k] for k in order]
        tg = [tg[k] for k in order]
        return ZeroPattern(d, r, kind, tuple(map(tuple, idx)), tuple(tg))
    return ZeroPattern(d, r, kind, tuple(map(tuple, idx)),
                       None if targets is None else tuple(targets))


# ----------------------------------------------------------------------
# signed permutations


def signed_permutations(d: int) -> list[np.ndarray]:
    """All 2^d d! signed permutation matrices, deterministic order."""
    if d > 8:
        raise ValueError("refusing to enumerate signed permutations for d > 8")
    out = []
    for perm in itertools.permutations(range(d)):
        P = np.zeros((d, d))
        for i, j in enumerate(perm):
            P[i, j] = 1.0
        for signs in itertools.product((1.0, -1.0), repeat=d):
            out.append(np.diag(signs) @ P)
    return out


def is_signed_permutation(Q, tol: float = 1e-9) -> bool:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        return False
    return bool(np.all(np.min(np.abs(np.abs(Q)[:, :, None] - np.array([0.0, 1.0])), axis=2) <= tol)
                and np.all(np.abs(np.abs(Q).sum(axis=0) - 1) <= Q.shape[0] * tol)
                and np.all(np.abs(np.abs(Q).sum(axis=1) - 1) <= Q.shape[0] * tol))


# ----------------------------------------------------------------------
# genericity


class GenericityResult:
    """Outcome of a genericity check: truthiness plus human-readable reasons."""

    def __init__(self, passed: bool, reasons: list[str]):
        self.passed = bool(passed)
        self.reasons = list(reasons)

    def __bool__(self) -> bool:
        return self.passed

    def to_json_dict(self) -> dict:
        return {"passed": self.passed, "reasons": self.reasons}

    def __repr__(self):  # pragma: no cover
        return f"GenericityResult(passed={self.passed}, reasons={self.reasons!r})"


def _genericity_diagonal(T: SymmetricTensor, tol: float) -> GenericityResult:
    diag = np.array([T[(i,) * T.r] for i in range(T.d)])
    small = np.abs(diag) <= tol
    reasons = []
    if small.sum() > 1:
        which = [f"{i + 1}" for i in np.flatnonzero(small)]
        reasons.append(
            "more than one vanishing super-diagonal entry (components "
            + ", ".join(which) + ")"
        )
    return GenericityResult(not reasons, reasons)


def _genericity_reflectional(T: SymmetricTensor, tol: float) -> GenericityResult:
    # marginal sums over all but two (equal) slots must be pairwise distinct
    dense = T.to_dense()
    axes = tuple(range(T.r - 2))
    M = dense.sum(axis=axes) if T.r > 2 else dense
    s = np.diag(M)
    reasons = []
    for i in range(T.d):
        for j in range(i + 1, T.d):
            if abs(s[i] - s[j]) <= tol:
                reasons.append(
                    f"tied marginal sums for components {i + 1} and {j + 1} "
                    f"({s[i]:.6g} vs {s[j]:.6g})"
                )
    return GenericityResult(not reasons, reasons)


def _genericity_minimal(T: SymmetricTensor, tol: float) -> GenericityResult:
    reasons = []
    for j in range(1, T.d):
        B = np.empty((j, j))
        for k in range(j):
            for l in range(j):
                B[k, l] = T[tuple(sorted((k, l) + (j,) * (T.r - 2)))]
        top = T[(j,) * T.r]
        det = np.linalg.det(top * np.eye(j) - (T.r - 1) * B)
        if abs(det) <= tol:
            reasons.append(
                f"degenerate leading sub-block at component {j + 1} "
                f"(determinant {det:.3g})"
            )
    return GenericityResult(not reasons, reasons)


def check_genericity(T: SymmetricTensor, pattern: ZeroPattern, tol: float = None) -> GenericityResult:
    """Sufficient-condition check that T is generic for the pattern's theorem.

    Only the diagonal, reflectional, and minimal families have a usable
    criterion; other kinds return a non-verdict with an explanatory reason.
    """
    if tol is None:
        tol = 1e-8 * max(1.0, T.norm())
    if pattern.kind == "diagonal":
        return _genericity_diagonal(T, tol)
    if pattern.kind == "reflectional":
        return _genericity_reflectional(T, tol)
    if pattern.kind == "minimal":
        return _genericity_minimal(T, tol)
    return GenericityResult(
        False, [f"no genericity criterion available for kind {pattern.kind!r}"]
    )


# ----------------------------------------------------------------------
# membership and local identification


def pattern_residual(Q, T: SymmetricTensor, pattern: ZeroPattern) -> float:
    """Max absolute deviation of the constrained coordinates of Q acting on T."""
    S = multilinear_apply(Q, T)
    return float(np.max(np.abs(S.values[pattern.positions()] - pattern.target_vector())))


def in_identified_set(Q, T: SymmetricTensor, pattern: ZeroPattern, tol: float = None) -> bool:
    """Does the orthogonal Q map T into the pattern (within tol)?

    Raises if Q is not orthogonal: membership is only defined on the
    orthogonal group.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (T.d, T.d):
        raise ValueError(f"Q must be {T.d}x{T.d}, got shape {Q.shape}")
    if np.max(np.abs(Q @ Q.T - np.eye(T.d))) > 1e-8:
        raise ValueError("Q is not orthogonal")
    if pattern.d != T.d or pattern.r != T.r:
        raise ValueError("pattern and tensor disagree on (d, r)")
    if tol is None:
        tol = 1e-8 * max(1.0, T.norm())
    return pattern_residual(Q, T, pattern) <= tol


def _antisymmetric_basis(d: int) -> list[np.ndarray]:
    out = []
    for a in range(d):
        for b in range(a + 1, d):
            U = np.zeros((d, d))
            U[a, b] = 1.0
            U[b, a] = -1.0
            out.append(U)
    return out


def constraint_derivative_matrix(T: SymmetricTensor, pattern: ZeroPattern, Q) -> np.ndarray:
    """Derivative of the constrained coordinates along the orthogonal group at Q.

    Tangent vectors at Q are U Q for antisymmetric U; the derivative of the
    action in the direction U Q equals the sum over slots of the mixed action
    with U in one slot and the identity elsewhere, applied to Q acting on T.
    Columns follow the basis U = E_ab - E_ba, a < b.
    """
    Q = np.asarray(Q, dtype=float)
    S = multilinear_apply(Q, T)
    pos = pattern.positions()
    basis = _antisymmetric_basis(T.d)
    M = np.empty((pattern.size, len(basis)))
    eye = np.eye(T.d)
    for col, U in enumerate(basis):
        total = np.zeros((T.d,) * T.r)
        for k in range(T.r):
            mats = [eye] * T.r
            mats[k] = U
            total += multilinear_apply_general(mats, S)
        sym = SymmetricTensor.from_dense(total)
        M[:, col] = sym.values[pos]
    return M


def local_identification_test(
    T: SymmetricTensor, pattern: ZeroPattern, Q=None, tol: float = 1e-8
) -> tuple[bool, int]:
    """First-order identification at a solution Q (default: identity).

    Returns (locally_identified, kernel_dimension) where the kernel is that
    of the constraint derivative restricted to the d(d-1)/2-dimensional
    tangent space of the orthogonal group.  Zero kernel means no smooth
    curve of solutions passes through Q.
    """
    if Q is None:
        Q = np.eye(T.d)
    Q = np.asarray(Q, dtype=float)
    if not in_identified_set(Q, T, pattern, tol=max(tol, 1e-6 * max(1.0, T.norm()))):
        raise ValueError("Q does not satisfy the pattern constraints on T")
    M = constraint_derivative_matrix(T, pattern, Q)
    ncols = M.shape[1]
    sigma = np.linalg.svd(M, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(sigma > tol * sigma[0]))
    kernel = ncols - rank
    return kernel == 0, kernel


# ----------------------------------------------------------------------
# d = 2 enumeration


def _poly_from_samples(fun, degree: int) -> np.ndarray:
    """Exact coefficients (ascending) of a polynomial of known max degree.

    Interpolates at the integer nodes 0, 1, -1, 2, -2, ...; the Vandermonde
    solve is exact to machine precision at these scales.
    """
    nodes = [0.0]
    k = 1
    while len(nodes) < degree + 1:
        nodes.extend([float(k), float(-k)])
        k += 1
    nodes = np.array(nodes[: degree + 1])
    V = np.vander(nodes, degree + 1, increasing=True)
    y = np.array([fun(z) for z in nodes])
    return np.linalg.solve(V, y)


def _real_roots(coeffs: np.ndarray, zero_tol: float) -> list[float]:
    """Real roots of a polynomial given ascending coefficients."""
    c = np.array(coeffs, dtype=float)
    # strip trailing (leading-degree) zeros
    while c.size > 1 and abs(c[-1]) <= zero_tol:
        c = c[:-1]
    if c.size <= 1:
        return []
    roots = np.polynomial.polynomial.polyroots(c)
    out = []
    for z in roots:
        if abs(z.imag) <= 1e-8 * max(1.0, abs(z.real)):
            out.append(float(z.real))
    return out


def _newton_polish(coeffs: np.ndarray, z: float, steps: int = 4) -> float:
    dcoeffs = np.polynomial.polynomial.polyder(coeffs)
    for _ in range(steps):
        f = np.polynomial.polynomial.polyval(z, coeffs)
        fp = np.polynomial.polynomial.polyval(z, dcoeffs)
        if fp == 0.0 or not np.isfinite(fp):
            break
        step = f / fp
        if not np.isfinite(step) or abs(step) > 1.0:
            break
        z -= step
    return z


def _unit_rotation(z: float) -> np.ndarray:
    s = math.sqrt(1.0 + z * z)
    return np.array([[1.0, -z], [z, 1.0]]) / s


def _unit_reflection(z: float) -> np.ndarray:
    s = math.sqrt(1.0 + z * z)
    return np.array([[1.0, z], [z, -1.0]]) / s


def enumerate_identified_set_2d(
    T: SymmetricTensor, pattern: ZeroPattern, tol: float = None
) -> list[np.ndarray]:
    """All orthogonal 2x2 matrices mapping T into the pattern.

    Every 2x2 orthogonal matrix with nonzero upper-left entry is a positive
    multiple of [[1, -z], [z, 1]] (rotations) or [[1, z], [z, -1]]
    (reflections); the constrained coordinates of the action become
    polynomials in z of degree at most r after clearing the normalization.
    The finitely many real roots, the signed permutations, and left sign
    flips of all of these are screened by the exact residual.

    Raises ValueError when some constraint is identically satisfied along a
    whole parameter class, i.e. the identified set is not finite.
    """
    if T.d != 2 or pattern.d != 2 or pattern.r != T.r:
        raise ValueError("enumeration is implemented for d = 2 only")
    if tol is None:
        tol = 1e-8 * max(1.0, T.norm())
    r = T.r
    pp = np.polynomial.polynomial
    scale = max(1.0, T.norm(), float(np.max(np.abs(pattern.target_vector()))))
    coeff_tol = 1e-12 * scale

    candidates: list[np.ndarray] = list(signed_permutations(2))
    sign_flips = [np.diag(s) for s in itertools.product((1.0, -1.0), repeat=2)]
    have_targets = any(t != 0.0 for t in pattern.targets)

    for reflect, family in ((False, _unit_rotation), (True, _unit_reflection)):
        raw = (lambda z: np.array([[1.0, z], [z, -1.0]])) if reflect else (
            lambda z: np.array([[1.0, -z], [z, 1.0]])
        )
        # numerator of each constrained coordinate along the unnormalized
        # family; degree <= r, recovered exactly by interpolation
        numerators = []
        for idx in pattern.indices:
            def coord(z, idx=idx):
                S = multilinear_apply_general([raw(z)] * r, T)
                return float(S[idx])

            numerators.append(_poly_from_samples(coord, r))

        # A left sign flip D multiplies coordinate idx by the product of the
        # row signs, so with nonzero targets and even r each D gets its own
        # sign-adjusted system.  Odd orders are squared (sign-free), and so
        # is everything when all targets vanish.
        if have_targets and r % 2 == 0:
            shift = pp.polypow([1.0, 0.0, 1.0], r // 2)
            flip_systems = []
            for D in sign_flips:
                polys = []
                for idx, target, num in zip(pattern.indices, pattern.targets, numerators):
                    s = float(np.prod([D[i, i] for i in idx]))
                    polys.append(pp.polysub(num, s * target * shift))
                flip_systems.append((D, polys))
        else:
            shift_sq = pp.polypow([1.0, 0.0, 1.0], r)
            polys = []
            for target, num in zip(pattern.targets, numerators):
                if target == 0.0:
                    polys.append(num)
                else:
                    polys.append(pp.polysub(pp.polymul(num, num), target * target * shift_sq))
            flip_systems = [(D, polys) for D in sign_flips]

        for D, polys in flip_systems:
            live = [p for p in polys if np.max(np.abs(p)) > coeff_tol]
            if not live:
                kind = "reflection" if reflect else "rotation"
                raise ValueError(
                    f"identified set is not finite: every constraint is "
                    f"identically satisfied along the {kind} family"
                )
            for p in live:
                for z in _real_roots(p, coeff_tol):
                    candidates.append(D @ family(_newton_polish(p, z)))

    accepted = []
    for Q in candidates:
        if pattern_residual(Q, T, pattern) <= tol:
            accepted.append(Q)

    # dedupe at Frobenius distance 1e-6
    kept: list[np.ndarray] = []
    for Q in accepted:
        if all(np.linalg.norm(Q - K) > 1e-6 for K in kept):
            kept.append(Q)

    def sort_key(Q):
        angle = math.atan2(Q[1, 0], Q[0, 0]) % math.pi
        reflect = float(np.linalg.det(Q)) < 0.0
        return (round(angle, 9), reflect, tuple(np.round(Q.reshape(-1), 9)))

    kept.sort(key=sort_key)
    return kept


def explore_identified_set(
    T: SymmetricTensor,
    pattern: ZeroPattern,
    n_starts: int = 50,
    seed: int = 0,
    tol: float = None,
) -> list[dict]:
    """Numerically hunt for solutions in any dimension (no completeness claim).

    Runs damped least squares on the pattern coordinates plus an
    orthogonality penalty from many random orthogonal starts, then dedupes
    the converged solutions.  Returns a list of dicts with keys ``Q``,
    ``residual``, ``is_signed_permutation``, ``hits`` (how many starts
    landed there).
    """
    from .estimator import _minimize_pattern_on_orthogonal  # lazy: avoids cycle

    if tol is None:
        tol = 1e-7 * max(1.0, T.norm())
    rng = np.random.default_rng(seed)
    found: list[dict] = []
    for _ in range(n_starts):
        Z = rng.standard_normal((T.d, T.d))
        Q0, _ = np.linalg.qr(Z)
        Q = _minimize_pattern_on_orthogonal(T, pattern, Q0)
        if Q is None:
            continue
        res = pattern_residual(Q, T, pattern)
        if res > tol:
            continue
        for entry in found:
            if np.linalg.norm(entry["Q"] - Q) <= 1e-6:
                entry["hits"] += 1
                break
        else:
            found.append(
                {
                    "Q": Q,
                    "residual": res,
                    "is_signed_permutation": is_signed_permutation(Q, tol=1e-6),
                    "hits": 1,
                }
            )
    found.sort(key=lambda e: (not e["is_signed_permutation"], -e["hits"]))
    return found
