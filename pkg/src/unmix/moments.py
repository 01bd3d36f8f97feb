"""Sample moments, multivariate k-statistics, and moment/cumulant conversion.

k-statistics are the unique symmetric polynomial unbiased estimators of
cumulants.  They are computed here through their expansion in raw sample
moments,

    k_r[i1..ir] = sum over partitions pi of {1..r} of
                  n^(|pi|-1) * c(pi) * prod over blocks B of m_hat[i_B],

with the coefficients c(pi) from :mod:`unmix.partitions`.  For r = 2 this
reduces to the n/(n-1)-corrected covariance.

Moment/cumulant conversion uses the classical partition sums in both
directions; the two maps are exact inverses of each other.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from . import partitions
from .tensors import SymmetricTensor, num_unique, unique_indices

__all__ = [
    "MomentFamily",
    "validate_data",
    "load_data_csv",
    "sample_moments",
    "kstatistic",
    "cumulants_from_moments",
    "moments_from_cumulants",
]


def validate_data(Y) -> np.ndarray:
    """Coerce to an (n, d) float array of observations; rows are samples."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise ValueError(f"data must be a nonempty 2-D array, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(Y), axis=1))[0])
        raise ValueError(f"data contains a non-finite value (first bad row: {bad})")
    return Y


def load_data_csv(path) -> np.ndarray:
    """Read observations from CSV, one row per observation.

    A single leading non-numeric row is treated as a header and skipped.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader):
            row = [c for c in (c.strip() for c in row) if c != ""]
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if lineno == 0:
                    continue  # header
                raise ValueError(f"{path}: non-numeric value on line {lineno + 1}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: rows have inconsistent number of columns")
    return validate_data(np.array(rows))


class MomentFamily:
    """Raw sample moments of all orders 1..max_order as symmetric tensors."""

    def __init__(self, tensors: list[SymmetricTensor]):
        if not tensors or any(t.r != p + 1 for p, t in enumerate(tensors)):
            raise ValueError("need one tensor per order 1..max_order, in order")
        d = tensors[0].d
        if any(t.d != d for t in tensors):
            raise ValueError("all tensors in a family must share the dimension d")
        self.d = d
        self.max_order = len(tensors)
        self._tensors = list(tensors)

    def __getitem__(self, order: int) -> SymmetricTensor:
        if not 1 <= order <= self.max_order:
            raise KeyError(f"order {order} not in family (max {self.max_order})")
        return self._tensors[order - 1]

    def lookup(self, idx) -> float:
        """Moment at a multi-index of any available order."""
        return self[len(idx)][idx]


def sample_moments(Y, max_order: int) -> MomentFamily:
    """Raw moments (1/n) sum_s prod_k Y[s, i_k] for every order up to max_order."""
    Y = validate_data(Y)
    d = Y.shape[1]
    tensors = []
    for p in range(1, max_order + 1):
        vals = np.empty(num_unique(d, p))
        for pos, idx in enumerate(unique_indices(d, p)):
            vals[pos] = np.prod(Y[:, idx], axis=1).mean()
        tensors.append(SymmetricTensor(d, p, vals))
    return MomentFamily(tensors)


def _partition_sum(lookup, idx: tuple[int, ...], weight) -> float:
    """sum over partitions pi of weight(pi) * prod over blocks of lookup(sub-index)."""
    total = 0.0
    for pi in partitions.enumerate_partitions(len(idx)):
        w = weight(pi)
        if w == 0.0:
            continue
        prod = w
        for block in pi:
            prod *= lookup(tuple(idx[e] for e in block))
        total += prod
    return total


def kstatistic(Y, r: int) -> SymmetricTensor:
    """Order-r multivariate k-statistic (unbiased cumulant estimate).

    Requires n > r observations.  Inherits the cumulants' multilinearity:
    kstatistic(Y @ A.T, r) equals the multilinear action of A on
    kstatistic(Y, r), exactly, for any square A.
    """
    Y = validate_data(Y)
    n, d = Y.shape
    if n <= r:
        raise ValueError(f"k-statistic of order {r} needs n > {r} observations, got n={n}")
    mom = sample_moments(Y, r)

    def weight(pi):
        return n ** (len(pi) - 1) * partitions.kstat_coefficient(pi, n)

    vals = np.empty(num_unique(d, r))
    for pos, idx in enumerate(unique_indices(d, r)):
        vals[pos] = _partition_sum(mom.lookup, idx, weight)
    return SymmetricTensor(d, r, vals)


def cumulants_from_moments(moments: MomentFamily) -> SymmetricTensor:
    """Population cumulant tensor of order max_order from raw moments 1..max_order.

    kappa[idx] = sum over partitions pi of (-1)^(|pi|-1) (|pi|-1)!
                 * prod over blocks B of mu[idx_B].
    """
    r = moments.max_order
    d = moments.d

    def weight(pi):
        sign = -1.0 if (len(pi) - 1) % 2 else 1.0
        return sign * math.factorial(len(pi) - 1)

    vals = np.empty(num_unique(d, r))
    for pos, idx in enumerate(unique_indices(d, r)):
        vals[pos] = _partition_sum(moments.lookup, idx, weight)
    return SymmetricTensor(d, r, vals)


def moments_from_cumulants(cumulants: list[SymmetricTensor]) -> SymmetricTensor:
    """Raw moment tensor of order r from cumulant tensors of orders 1..r.

    mu[idx] = sum over partitions pi of prod over blocks B of kappa_{|B|}[idx_B].
    Exact inverse of :func:`cumulants_from_moments` applied order by order.
    """
    fam = MomentFamily(cumulants)  # same shape constraints apply

    def lookup(sub):
        return fam.lookup(sub)

    r = fam.max_order
    vals = np.empty(num_unique(fam.d, r))
    for pos, idx in enumerate(unique_indices(fam.d, r)):
        vals[pos] = _partition_sum(lookup, idx, lambda pi: 1.0)
    return SymmetricTensor(fam.d, r, vals)
