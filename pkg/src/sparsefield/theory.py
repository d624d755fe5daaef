"""Machine check of the power-of-two DAG bounds.

Nodes are labelled ``1..n`` here (the graph module is 0-based; use
:func:`to_block_index` / :func:`from_block_index` at the boundary).  Node
``i`` has an edge to ``i - 2**k`` for every ``k >= 0`` with ``i - 2**k >= 1``.

Two claims are checked:

1. every out-degree is at most ``ceil(log2 n)`` (``== log2 n`` for powers of
   two, attained at ``i = n``, so the bound is not strict there);
2. the BFS distance from ``i`` down to ``j`` equals ``popcount(i - j)``,
   hence is at most ``ceil(log2 n)``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError

EXHAUSTIVE_LIMIT = 4096
RANDOM_PAIRS = 1000
SAMPLE_SEED = 20250301


def to_block_index(node: int) -> int:
    return node - 1


def from_block_index(block: int) -> int:
    return block + 1


def popcount(x: int) -> int:
    return int(x).bit_count()


def ceil_log2(n: int) -> int:
    return (n - 1).bit_length()


def power_out_degree(i: int, n: int) -> int:
    if not 1 <= i <= n:
        raise DomainError(f"node {i} out of range [1, {n}]")
    count = 0
    step = 1
    while i - step >= 1:
        count += 1
        step <<= 1
    return count


@dataclass(frozen=True)
class PowerPathWitness:
    source: int
    target: int
    hops: tuple[int, ...]

    def nodes(self) -> list[int]:
        out = [self.source]
        for h in self.hops:
            out.append(out[-1] - h)
        return out

    def problems(self, n: int | None = None) -> list[str]:
        """Reasons this witness is invalid (empty list when valid)."""
        errs = []
        d = self.source - self.target
        if sum(self.hops) != d:
            errs.append(f"hops sum to {sum(self.hops)}, expected {d}")
        bad = [h for h in self.hops if h <= 0 or h & (h - 1)]
        if bad:
            errs.append(f"non power-of-two hops {bad}")
        if len(self.hops) != popcount(d):
            errs.append(f"{len(self.hops)} hops, popcount is {popcount(d)}")
        hi = self.source if n is None else min(self.source, n)
        if self.target < 1 or any(not self.target <= v <= hi for v in self.nodes()):
            errs.append("path leaves the node range")
        return errs

    def to_dict(self) -> dict[str, Any]:
        return {"source": self.source, "target": self.target, "hops": list(self.hops)}


def binary_path(source: int, target: int) -> PowerPathWitness:
    """Path from ``source`` down to ``target`` taking the set bits of the gap, largest first."""
    if target >= source:
        raise DomainError(f"target {target} must be below source {source}")
    if target < 1:
        raise DomainError(f"node {target} out of range (nodes start at 1)")
    d = source - target
    hops = tuple(1 << b for b in range(d.bit_length() - 1, -1, -1) if d >> b & 1)
    return PowerPathWitness(source, target, hops)


def _bfs_distances(source: int, n: int, shifts: list[int], valid: int) -> np.ndarray:
    """Level-synchronous BFS over int bitsets (bit ``j`` = node ``j``).

    Returns an int array indexed by node (entry 0 unused), -1 where unreachable.
    """
    dist = np.full(n + 1, -1, dtype=np.int64)
    reached = frontier = 1 << source
    dist[source] = 0
    nbytes = (n + 8) // 8
    level = 0
    while frontier:
        level += 1
        nxt = 0
        for s in shifts:
            nxt |= frontier >> s
        frontier = nxt & valid & ~reached
        reached |= frontier
        if frontier:
            raw = np.frombuffer(frontier.to_bytes(nbytes, "little"), dtype=np.uint8)
            idx = np.flatnonzero(np.unpackbits(raw, bitorder="little"))
            dist[idx] = level
    return dist


@dataclass
class TheoremReport:
    n: int
    mode: str
    max_out_degree: int = 0
    max_bfs_distance: int = 0
    bound: int = 0
    floor_log2: int = 0
    strict_bound_holds: bool = True
    sources_checked: int = 0
    pairs_checked: int = 0
    witnesses_checked: int = 0
    failures: list[str] = field(default_factory=list)
    max_out_degree_node: int = 0
    max_distance_witness: PowerPathWitness | None = None

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "mode": self.mode,
            "pass": self.passed,
            "max_out_degree": self.max_out_degree,
            "max_bfs_distance": self.max_bfs_distance,
            "bound": self.bound,
            "floor_log2": self.floor_log2,
            "strict_bound_holds": self.strict_bound_holds,
            "sources_checked": self.sources_checked,
            "pairs_checked": self.pairs_checked,
            "witnesses_checked": self.witnesses_checked,
            "witnesses": {
                "max_out_degree_node": self.max_out_degree_node,
                "max_distance_path": None
                if self.max_distance_witness is None
                else self.max_distance_witness.to_dict(),
            },
            "failures": self.failures[:20],
        }


def _sample_sources(n: int) -> list[int]:
    out = {n}
    p = 1
    while p <= n:
        out.update(v for v in (p - 1, p, p + 1) if 2 <= v <= n)
        p <<= 1
    return sorted(out)


def verify_theorem(n: int, *, exhaustive_limit: int = EXHAUSTIVE_LIMIT,
                   random_pairs: int = RANDOM_PAIRS, seed: int = SAMPLE_SEED) -> TheoremReport:
    """Check both bounds on the ``n``-node power DAG.

    Up to ``exhaustive_limit`` nodes every source is BFS'd against every
    target.  Beyond it, full BFS runs from each ``2**k - 1``, ``2**k``,
    ``2**k + 1`` and ``n``, plus ``random_pairs`` uniformly drawn
    ``(i, j)`` pairs from ``random.Random(seed)``.  Witness validity depends
    only on the gap ``i - j``, so every gap ``1..n-1`` gets one witness.
    """
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    bound = ceil_log2(n)
    rep = TheoremReport(n=n, mode="exhaustive" if n <= exhaustive_limit else "sampled",
                        bound=bound, floor_log2=n.bit_length() - 1)

    nodes = np.arange(1, n + 1, dtype=np.int64)
    degree = np.zeros(n, dtype=np.int64)
    step = 1
    while step < n:
        degree += nodes - step >= 1
        step <<= 1
    rep.max_out_degree = int(degree.max())
    rep.max_out_degree_node = int(nodes[np.argmax(degree)])
    rep.strict_bound_holds = bool(rep.max_out_degree < math.log2(n))
    if rep.max_out_degree > bound:
        over = nodes[degree > bound][:5].tolist()
        rep.failures.append(f"out-degree above {bound} at nodes {over}")
    closed = np.where(nodes >= 2, np.floor(np.log2(np.maximum(nodes - 1, 1))) + 1, 0).astype(np.int64)
    if not np.array_equal(degree, closed):
        rep.failures.append("out-degree differs from floor(log2(i-1)) + 1")

    shifts = [1 << k for k in range(bound) if (1 << k) < n]
    valid = ((1 << (n + 1)) - 1) & ~1

    def check_source(i: int, targets: np.ndarray | None = None) -> None:
        dist = _bfs_distances(i, n, shifts, valid)
        if targets is None:
            js = nodes
        else:
            js = targets
        d = i - js
        expect = np.where(d >= 0, np.bitwise_count(np.abs(d)).astype(np.int64), -1)
        got = dist[js]
        rep.pairs_checked += len(js)
        if not np.array_equal(got, expect):
            bad = js[got != expect][:3].tolist()
            rep.failures.append(f"BFS distance != popcount from {i} to {bad}")
        far = int(got.max())
        if far > bound:
            rep.failures.append(f"distance {far} from {i} exceeds {bound}")
        if far > rep.max_bfs_distance:
            rep.max_bfs_distance = far
            j = int(js[np.argmax(got)])
            rep.max_distance_witness = binary_path(i, j)

    if rep.mode == "exhaustive":
        for i in range(1, n + 1):
            check_source(i)
            rep.sources_checked += 1
    else:
        for i in _sample_sources(n):
            check_source(i)
            rep.sources_checked += 1
        rng = random.Random(seed)
        pairs: dict[int, list[int]] = {}
        for _ in range(random_pairs):
            i = rng.randint(2, n)
            pairs.setdefault(i, []).append(rng.randint(1, i - 1))
        for i, js in pairs.items():
            check_source(i, np.array(js, dtype=np.int64))
            rep.sources_checked += 1

    for gap in range(1, n):
        w = binary_path(n, n - gap)
        errs = w.problems(n)
        rep.witnesses_checked += 1
        if errs:
            rep.failures.append(f"witness {w.to_dict()}: {'; '.join(errs)}")
        if len(w.hops) > bound:
            rep.failures.append(f"witness for gap {gap} has {len(w.hops)} hops")
    return rep
