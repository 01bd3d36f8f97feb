"""Set partitions of {0, ..., r-1} and the combinatorics built on them.

Partitions are plain tuples of blocks; each block is a sorted tuple of
element positions and blocks are ordered by their smallest element.  That
canonical form is hashable, so partitions can key caches directly.

Besides enumeration, this module provides the refinement order, the Mobius
function of the partition lattice, and the coefficients that express
k-statistics as polynomials in sample moments.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

__all__ = [
    "Partition",
    "enumerate_partitions",
    "bell_number",
    "canonicalize",
    "refines",
    "mobius",
    "refinements",
    "kstat_coefficient",
]

Partition = tuple[tuple[int, ...], ...]

_MAX_R = 10


def canonicalize(blocks) -> Partition:
    """Sort elements within blocks and blocks by smallest element."""
    bs = tuple(tuple(sorted(int(i) for i in b)) for b in blocks)
    return tuple(sorted(bs, key=lambda b: b[0]))


def _restricted_growth_strings(r: int):
    # a[i] is the block label of element i; labels appear in first-use order,
    # so a[i] <= 1 + max(a[:i]).  Standard iterative enumeration.
    a = [0] * r
    b = [0] * r  # b[i] = max(a[:i+1]) running maximum
    while True:
        yield tuple(a)
        # advance to the next string, rightmost position first
        for i in range(r - 1, 0, -1):
            if a[i] <= b[i - 1]:
                a[i] += 1
                b[i] = max(b[i - 1], a[i])
                for j in range(i + 1, r):
                    a[j] = 0
                    b[j] = b[i]
                break
        else:
            return


@lru_cache(maxsize=None)
def enumerate_partitions(r: int) -> tuple[Partition, ...]:
    """All set partitions of {0..r-1} in restricted-growth-string order."""
    if not 1 <= r <= _MAX_R:
        raise ValueError(f"order must be between 1 and {_MAX_R}, got {r}")
    out = []
    for rgs in _restricted_growth_strings(r):
        nblocks = max(rgs) + 1
        blocks = [[] for _ in range(nblocks)]
        for elem, lab in enumerate(rgs):
            blocks[lab].append(elem)
        out.append(canonicalize(blocks))
    return tuple(out)


def bell_number(r: int) -> int:
    return len(enumerate_partitions(r))


def _block_label_map(pi: Partition) -> dict[int, int]:
    lab = {}
    for k, block in enumerate(pi):
        for elem in block:
            lab[elem] = k
    return lab


def refines(rho: Partition, pi: Partition) -> bool:
    """True if every block of rho is contained in a block of pi."""
    lab = _block_label_map(pi)
    for block in rho:
        k = lab.get(block[0])
        if k is None or any(lab.get(e) != k for e in block[1:]):
            return False
    return True


def mobius(rho: Partition, pi: Partition) -> int:
    """Mobius function of the partition lattice between rho <= pi.

    Equals (-1)^(|rho|-|pi|) * prod over blocks B of pi of (n_B - 1)! where
    n_B is the number of rho-blocks lying inside B.  Raises if rho does not
    refine pi.
    """
    if not refines(rho, pi):
        raise ValueError("mobius(rho, pi) requires rho to refine pi")
    lab = _block_label_map(pi)
    counts = [0] * len(pi)
    for block in rho:
        counts[lab[block[0]]] += 1
    val = 1
    for c in counts:
        val *= math.factorial(c - 1)
    if (len(rho) - len(pi)) % 2:
        val = -val
    return val


@lru_cache(maxsize=None)
def refinements(pi: Partition) -> tuple[Partition, ...]:
    """All partitions rho with rho <= pi, via independent refinement per block."""
    per_block = []
    for block in pi:
        subs = []
        for sub in enumerate_partitions(len(block)):
            subs.append(tuple(tuple(block[e] for e in b) for b in sub))
        per_block.append(subs)
    out = []
    for combo in itertools.product(*per_block):
        out.append(canonicalize(itertools.chain.from_iterable(combo)))
    return tuple(out)


def _binom_recip(n: int, k: int) -> float:
    # 1 / C(n-1, k) with a log-gamma fallback once exact integers get huge
    if n - 1 <= 10**6:
        return 1.0 / math.comb(n - 1, k)
    return math.exp(
        math.lgamma(k + 1) + math.lgamma(n - k) - math.lgamma(n)
    )


@lru_cache(maxsize=None)
def kstat_coefficient(pi: Partition, n: int) -> float:
    """Coefficient c(pi) in the moment expansion of the order-r k-statistic.

    c(pi) = sum over rho <= pi of mobius(rho, pi) * (-1)^(|rho|-1)
            / C(n-1, |rho|-1).

    Requires n >= r where r is the number of elements pi partitions.
    """
    r = sum(len(b) for b in pi)
    if n < r:
        raise ValueError(f"need n >= {r} observations, got n={n}")
    total = 0.0
    for rho in refinements(pi):
        nu = len(rho)
        term = mobius(rho, pi) * _binom_recip(n, nu - 1)
        total += -term if (nu - 1) % 2 else term
    return total
