"""Symmetric tensors stored by their unique entries.

An order-``r`` symmetric tensor over ``R^d`` is determined by its values on
nondecreasing multi-indices, of which there are ``binom(d+r-1, r)``.  This
module stores exactly that vector and provides the handful of operations the
rest of the package is built on: the multilinear action of matrices, the
associated homogeneous polynomial, and projection onto a set of constrained
coordinates.

Indices are 0-based tuples everywhere in the Python API.  The JSON
interchange format (``to_json_dict``/``from_json_dict``) uses 1-based indices.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

__all__ = [
    "SymmetricTensor",
    "unique_indices",
    "index_rank",
    "multiplicities",
    "multilinear_apply",
    "multilinear_apply_general",
    "associated_poly_eval",
    "project_onto_pattern",
    "identity_matrix_tensor",
    "diagonal_tensor",
]


def num_unique(d: int, r: int) -> int:
    """Number of unique entries of a symmetric order-r tensor over R^d."""
    return math.comb(d + r - 1, r)


@lru_cache(maxsize=None)
def unique_indices(d: int, r: int) -> tuple[tuple[int, ...], ...]:
    """All nondecreasing r-tuples over {0..d-1}, in lexicographic order."""
    if d < 1 or r < 1:
        raise ValueError(f"need d >= 1 and r >= 1, got d={d}, r={r}")
    return tuple(itertools.combinations_with_replacement(range(d), r))


def index_rank(idx: tuple[int, ...], d: int) -> int:
    """Lexicographic position of a nondecreasing multi-index.

    Uses the combinatorial number system: the nondecreasing tuple is mapped
    to the strictly increasing tuple ``c_k = idx_k + k`` and ranked among
    r-subsets of {0, ..., d+r-2} by counting the subsets that precede it.
    """
    r = len(idx)
    m = d + r - 1
    rank = 0
    prev = -1
    for k, i in enumerate(idx):
        c = i + k
        for j in range(prev + 1, c):
            rank += math.comb(m - 1 - j, r - 1 - k)
        prev = c
    return rank


@lru_cache(maxsize=None)
def _rank_table(d: int, r: int) -> dict[tuple[int, ...], int]:
    return {idx: pos for pos, idx in enumerate(unique_indices(d, r))}


@lru_cache(maxsize=None)
def multiplicities(d: int, r: int) -> np.ndarray:
    """Multinomial multiplicity of each unique index (number of orderings)."""
    out = np.empty(num_unique(d, r))
    for pos, idx in enumerate(unique_indices(d, r)):
        counts: dict[int, int] = {}
        for i in idx:
            counts[i] = counts.get(i, 0) + 1
        m = math.factorial(r)
        for c in counts.values():
            m //= math.factorial(c)
        out[pos] = m
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _dense_position_of_unique(d: int, r: int) -> np.ndarray:
    """Flat position in the dense d^r array of each unique (sorted) index."""
    strides = np.array([d ** (r - 1 - k) for k in range(r)], dtype=np.int64)
    idx = np.array(unique_indices(d, r), dtype=np.int64)
    out = idx @ strides
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _unique_position_of_dense(d: int, r: int) -> np.ndarray:
    """For each flat dense position, the rank of its sorted index."""
    table = _rank_table(d, r)
    out = np.empty(d**r, dtype=np.int64)
    for flat, tup in enumerate(itertools.product(range(d), repeat=r)):
        out[flat] = table[tuple(sorted(tup))]
    out.setflags(write=False)
    return out


class SymmetricTensor:
    """Immutable symmetric tensor of order ``r`` over ``R^d``.

    ``values[k]`` is the entry at ``unique_indices(d, r)[k]``.  Lookup with
    ``T[i1, i2, ...]`` accepts the index components in any order.
    """

    __slots__ = ("d", "r", "values")

    def __init__(self, d: int, r: int, values) -> None:
        vals = np.array(values, dtype=float).reshape(-1)
        if vals.shape[0] != num_unique(d, r):
            raise ValueError(
                f"expected {num_unique(d, r)} unique entries for d={d}, r={r}, "
                f"got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("tensor entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("SymmetricTensor is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, d: int, r: int) -> "SymmetricTensor":
        return cls(d, r, np.zeros(num_unique(d, r)))

    @classmethod
    def from_entries(cls, d: int, r: int, entries) -> "SymmetricTensor":
        """Build from a mapping {multi-index tuple: value}; missing entries are 0."""
        vals = np.zeros(num_unique(d, r))
        table = _rank_table(d, r)
        for idx, v in dict(entries).items():
            key = tuple(sorted(int(i) for i in idx))
            if len(key) != r or key not in table:
                raise ValueError(f"invalid index {idx!r} for d={d}, r={r}")
            vals[table[key]] = v
        return cls(d, r, vals)

    @classmethod
    def from_dense(cls, arr, symmetrize: bool = False) -> "SymmetricTensor":
        a = np.asarray(arr, dtype=float)
        r = a.ndim
        d = a.shape[0]
        if a.shape != (d,) * r:
            raise ValueError(f"dense array must be a hypercube, got shape {a.shape}")
        if symmetrize:
            sym = np.zeros_like(a)
            for perm in itertools.permutations(range(r)):
                sym += np.transpose(a, perm)
            a = sym / math.factorial(r)
        return cls(d, r, a.reshape(-1)[_dense_position_of_unique(d, r)])

    # -- access --------------------------------------------------------

    @property
    def index_list(self) -> tuple[tuple[int, ...], ...]:
        return unique_indices(self.d, self.r)

    def __getitem__(self, idx) -> float:
        key = tuple(sorted(int(i) for i in idx))
        try:
            return float(self.values[_rank_table(self.d, self.r)[key]])
        except KeyError:
            raise IndexError(f"index {idx!r} out of range for d={self.d}, r={self.r}")

    def to_dense(self) -> np.ndarray:
        return self.values[_unique_position_of_dense(self.d, self.r)].reshape(
            (self.d,) * self.r
        )

    def norm(self) -> float:
        """Frobenius norm of the full tensor (multiplicity-weighted)."""
        return math.sqrt(float(np.sum(multiplicities(self.d, self.r) * self.values**2)))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"SymmetricTensor(d={self.d}, r={self.r}, values={self.values!r})"

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        """JSON object with 1-based, sorted indices."""
        entries = [
            {"index": [i + 1 for i in idx], "value": float(v)}
            for idx, v in zip(self.index_list, self.values)
        ]
        return {"d": self.d, "r": self.r, "entries": entries}

    @classmethod
    def from_json_dict(cls, obj) -> "SymmetricTensor":
        try:
            d = int(obj["d"])
            r = int(obj["r"])
            raw = obj["entries"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"tensor JSON must have fields d, r, entries: {exc}")
        entries = {}
        for k, e in enumerate(raw):
            try:
                idx = tuple(int(i) - 1 for i in e["index"])
                val = float(e["value"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad tensor entry #{k}: {exc}")
            if len(idx) != r or any(i < 0 or i >= d for i in idx):
                raise ValueError(
                    f"bad tensor entry #{k}: index {list(e['index'])} "
                    f"out of range for d={d}, r={r}"
                )
            entries[idx] = val
        return cls.from_entries(d, r, entries)


def identity_matrix_tensor(d: int) -> SymmetricTensor:
    """The identity matrix as an order-2 symmetric tensor."""
    return SymmetricTensor.from_dense(np.eye(d))


def diagonal_tensor(diag, r: int) -> SymmetricTensor:
    """Order-r tensor with the given values on the super-diagonal, zero elsewhere."""
    diag = np.asarray(diag, dtype=float)
    d = diag.shape[0]
    return SymmetricTensor.from_entries(d, r, {(i,) * r: diag[i] for i in range(d)})


def _check_square(A: np.ndarray, d: int) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (d, d):
        raise ValueError(f"expected a {d}x{d} matrix, got shape {A.shape}")
    return A


def multilinear_apply(A, T: SymmetricTensor) -> SymmetricTensor:
    """Apply a square matrix to every mode of the tensor.

    The result S satisfies S[i1..ir] = sum_j A[i1,j1]...A[ir,jr] T[j1..jr]
    and is symmetric by construction.
    """
    A = _check_square(A, T.d)
    X = T.to_dense()
    for _ in range(T.r):
        # contract the leading axis and append the transformed axis at the
        # back; after r steps the axis order is restored
        X = np.tensordot(X, A, axes=([0], [1]))
    return SymmetricTensor.from_dense(X)


def multilinear_apply_general(mats, T: SymmetricTensor) -> np.ndarray:
    """Apply one (possibly different) matrix per mode.

    Returns a dense array since the result is in general not symmetric.
    Matrix k must have T.d columns; the output axis k has as many entries
    as matrix k has rows.
    """
    mats = [np.asarray(M, dtype=float) for M in mats]
    if len(mats) != T.r:
        raise ValueError(f"need {T.r} matrices, got {len(mats)}")
    for k, M in enumerate(mats):
        if M.ndim != 2 or M.shape[1] != T.d:
            raise ValueError(
                f"matrix {k} must have {T.d} columns, got shape {M.shape}"
            )
    X = T.to_dense()
    for M in mats:
        X = np.tensordot(X, M, axes=([0], [1]))
    return X


def associated_poly_eval(T: SymmetricTensor, x) -> float:
    """Evaluate the homogeneous polynomial <T, x^(tensor r)>.

    Every one of the d^r index tuples contributes, so each unique entry is
    weighted by its multinomial multiplicity.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (T.d,):
        raise ValueError(f"expected a vector of length {T.d}, got shape {x.shape}")
    idx = np.array(unique_indices(T.d, T.r), dtype=np.int64)
    prods = np.prod(x[idx], axis=1)
    return float(np.dot(multiplicities(T.d, T.r) * T.values, prods))


def project_onto_pattern(T: SymmetricTensor, pattern) -> np.ndarray:
    """Coordinates of T at the pattern's constrained indices, in pattern order.

    ``pattern`` is either an object with an ``indices`` attribute (a
    ZeroPattern) or a plain iterable of multi-index tuples.
    """
    indices = getattr(pattern, "indices", pattern)
    table = _rank_table(T.d, T.r)
    pos = []
    for idx in indices:
        key = tuple(sorted(int(i) for i in idx))
        if key not in table:
            raise IndexError(f"pattern index {idx!r} out of range for d={T.d}, r={T.r}")
        pos.append(table[key])
    return T.values[np.array(pos, dtype=np.int64)]
