"""Receptive-field analysis of a block mask viewed as a DAG.

Edges point from the attending (query) block to each attended (key) block,
so walking out-edges from a block enumerates whose information it can pick
up, one attention layer per hop.  Row adjacency is held as Python ints used
as bitsets; the diagonal self-loop keeps every reachable set monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Final, Optional

import numpy as np

from .errors import DomainError
from .patterns import BlockMask

UNREACHABLE: Final = None


def row_bitsets(mask: BlockMask) -> list[int]:
    """Each row of ``mask`` as an int whose bit ``k`` is ``allowed[q, k]``."""
    packed = np.packbits(mask.allowed, axis=1, bitorder="little")
    return [int.from_bytes(r.tobytes(), "little") for r in packed]


def _bits_to_set(bits: int) -> frozenset[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return frozenset(out)


def _expand(rows: list[int], frontier: int) -> int:
    acc = 0
    while frontier:
        low = frontier & -frontier
        acc |= rows[low.bit_length() - 1]
        frontier ^= low
    return acc


@dataclass(frozen=True)
class ReachabilityProfile:
    """Blocks reachable from ``source`` within ``k`` hops, for ``k = 0..max_steps``."""

    source: int
    n_blocks: int
    steps: tuple[frozenset[int], ...]

    @property
    def sizes(self) -> list[int]:
        return [len(s) for s in self.steps]

    @property
    def coverage(self) -> list[float]:
        return [len(s) / self.n_blocks for s in self.steps]


def _check(mask: BlockMask, i: int, name: str) -> None:
    if not 0 <= i < mask.n_blocks:
        raise DomainError(f"{name} {i} out of range [0, {mask.n_blocks})")


def reach_profile(mask: BlockMask, source: int, max_steps: int) -> ReachabilityProfile:
    _check(mask, source, "source")
    if max_steps < 0:
        raise DomainError(f"max_steps must be >= 0, got {max_steps}")
    rows = row_bitsets(mask)
    reached = 1 << source
    frontier = reached
    bits = [reached]
    for _ in range(max_steps):
        if frontier:
            new = _expand(rows, frontier) & ~reached
            reached |= new
            frontier = new
        bits.append(reached)
    return ReachabilityProfile(source, mask.n_blocks, tuple(_bits_to_set(b) for b in bits))


def closure_row(mask: BlockMask, source: int) -> frozenset[int]:
    """All blocks reachable from ``source`` at any depth."""
    _check(mask, source, "source")
    rows = row_bitsets(mask)
    reached = frontier = 1 << source
    while frontier:
        frontier = _expand(rows, frontier) & ~reached
        reached |= frontier
    return _bits_to_set(reached)


def transitive_closure(mask: BlockMask) -> np.ndarray:
    """Reflexive-transitive closure as an ``n x n`` boolean matrix.

    Rows are processed in ascending order; since every edge points to a
    smaller-or-equal index, a row's closure is the OR of its successors'
    already finished closures.
    """
    rows = row_bitsets(mask)
    closed: list[int] = []
    for q, r in enumerate(rows):
        acc = r
        rest = r & ~(1 << q)
        while rest:
            low = rest & -rest
            acc |= closed[low.bit_length() - 1]
            rest ^= low
        closed.append(acc)
    n = mask.n_blocks
    out = np.zeros((n, n), dtype=bool)
    for q, c in enumerate(closed):
        for k in _bits_to_set(c):
            out[q, k] = True
    return out


def shortest_depth(mask: BlockMask, source: int, target: int) -> Optional[int]:
    """Fewest hops from ``source`` to ``target``; ``UNREACHABLE`` if none.

    ``target > source`` is rejected outright: no causal mask can connect
    them, so asking is almost certainly a caller bug.
    """
    _check(mask, source, "source")
    _check(mask, target, "target")
    if target > source:
        raise DomainError(f"target {target} lies after source {source}")
    rows = row_bitsets(mask)
    goal = 1 << target
    reached = frontier = 1 << source
    depth = 0
    while frontier:
        if reached & goal:
            return depth
        frontier = _expand(rows, frontier) & ~reached
        reached |= frontier
        depth += 1
    return UNREACHABLE


def bfs_depths(mask: BlockMask, source: int) -> dict[int, int]:
    """Hop count to every block reachable from ``source``."""
    _check(mask, source, "source")
    rows = row_bitsets(mask)
    reached = frontier = 1 << source
    depths = {source: 0}
    depth = 0
    while frontier:
        depth += 1
        frontier = _expand(rows, frontier) & ~reached
        reached |= frontier
        for k in _bits_to_set(frontier):
            depths[k] = depth
    return depths


def coverage_gaps(mask: BlockMask, source: int) -> frozenset[int]:
    """Blocks at or before ``source`` that no number of hops can reach."""
    reached = closure_row(mask, source)
    return frozenset(range(source + 1)) - reached


def depth_growth_curve(mask: BlockMask, source: int) -> list[tuple[int, int]]:
    """``(k, |B_k|)`` from ``k = 0`` up to the first step at the fixpoint."""
    _check(mask, source, "source")
    rows = row_bitsets(mask)
    reached = frontier = 1 << source
    curve = [(0, 1)]
    k = 0
    while True:
        frontier = _expand(rows, frontier) & ~reached
        if not frontier:
            return curve
        reached |= frontier
        k += 1
        curve.append((k, reached.bit_count()))


def steps_to_full(mask: BlockMask, source: int) -> Optional[int]:
    """First ``k`` with ``B_k`` covering every block ``<= source``, else ``None``."""
    curve = depth_growth_curve(mask, source)
    k, size = curve[-1]
    return k if size == source + 1 else None
