"""Desk-scale masked softmax attention: dense oracle and block-skipping forward.

Tensors are ``[heads, seq_len, head_dim]``.  Scores and softmax
normalizers are always accumulated in float64; outputs are returned in the
input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .patterns import BlockMask
from .rng import standard_normals


@dataclass(frozen=True)
class AttentionProblem:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        shapes = {a.shape for a in (self.q, self.k, self.v)}
        if len(shapes) != 1 or self.q.ndim != 3:
            raise DomainError(f"q, k, v must share one [heads, seq, dim] shape, got {[a.shape for a in (self.q, self.k, self.v)]}")
        for name in ("q", "k", "v"):
            if not np.isfinite(getattr(self, name)).all():
                raise DomainError(f"{name} has non-finite entries")

    @property
    def heads(self) -> int:
        return self.q.shape[0]

    @property
    def seq_len(self) -> int:
        return self.q.shape[1]

    @property
    def head_dim(self) -> int:
        return self.q.shape[2]

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)

    @property
    def dtype(self) -> np.dtype:
        return self.q.dtype


def random_problem(seq_len: int, heads: int, head_dim: int, seed: int,
                   dtype: np.dtype | type = np.float64) -> AttentionProblem:
    """Gaussian q, k, v drawn in that order, each row-major, from one normal stream."""
    size = heads * seq_len * head_dim
    z = standard_normals(seed, 3 * size).reshape(3, heads, seq_len, head_dim).astype(dtype)
    return AttentionProblem(z[0], z[1], z[2])


@dataclass(frozen=True)
class CostReport:
    score_flops: int
    dense_flops: int

    @property
    def ratio(self) -> float:
        return self.score_flops / self.dense_flops


def cost_report(mask: BlockMask, block_tokens: int, heads: int = 1) -> CostReport:
    """Query-key dot products for visiting every allowed block vs. full causal.

    Both counts charge a whole ``block_tokens**2`` tile per visited block,
    diagonal tiles included, so full causal has ratio exactly 1.
    """
    n = mask.n_blocks
    tile = block_tokens * block_tokens * heads
    return CostReport(int(mask.allowed.sum()) * tile, n * (n + 1) // 2 * tile)


def expand_mask(mask: BlockMask, block_tokens: int) -> np.ndarray:
    """Token-level mask: block-causal off the diagonal, token-causal on it."""
    if block_tokens < 1:
        raise DomainError(f"block_tokens must be >= 1, got {block_tokens}")
    ones = np.ones((block_tokens, block_tokens), dtype=bool)
    tok = np.kron(mask.allowed, ones).astype(bool)
    return tok & np.tri(tok.shape[0], dtype=bool)


def shrink_mask(token_mask: np.ndarray, block_tokens: int) -> BlockMask:
    """OR-reduce each ``block_tokens`` tile back to one block entry."""
    t = token_mask.shape[0]
    if t % block_tokens:
        raise DomainError(f"{t} tokens is not a multiple of {block_tokens}")
    n = t // block_tokens
    tiles = token_mask.reshape(n, block_tokens, n, block_tokens)
    return BlockMask(tiles.any(axis=(1, 3)))


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    peak = scores.max(axis=-1, keepdims=True)
    w = np.exp(scores - peak)
    return w / w.sum(axis=-1, keepdims=True)


def dense_attention(problem: AttentionProblem, token_mask: np.ndarray) -> np.ndarray:
    """Masked softmax attention over the full score matrix (the oracle)."""
    t = problem.seq_len
    token_mask = np.asarray(token_mask, dtype=bool)
    if token_mask.shape != (t, t):
        raise DomainError(f"token mask shape {token_mask.shape} does not match seq_len {t}")
    if np.triu(token_mask, 1).any():
        raise DomainError("token mask is not causal")
    empty = np.flatnonzero(~token_mask.any(axis=1))
    if empty.size:
        raise DomainError(f"rows with nothing to attend: {empty[:8].tolist()}")
    q, k, v = (a.astype(np.float64) for a in (problem.q, problem.k, problem.v))
    scores = np.einsum("htd,hsd->hts", q, k) * problem.scale
    scores = np.where(token_mask, scores, -np.inf)
    return (_softmax_rows(scores) @ v).astype(problem.dtype)


def block_sparse_attention(problem: AttentionProblem, mask: BlockMask,
                           block_tokens: int) -> tuple[np.ndarray, CostReport]:
    """Attention that only ever touches the key blocks ``mask`` allows."""
    n = mask.n_blocks
    if problem.seq_len != n * block_tokens:
        raise DomainError(
            f"seq_len {problem.seq_len} != n_blocks {n} x block_tokens {block_tokens}")
    b = block_tokens
    q, k, v = (a.astype(np.float64) for a in (problem.q, problem.k, problem.v))
    out = np.empty_like(q)
    tri = np.tri(b, dtype=bool)
    visited = 0
    for qb in range(n):
        cols = np.flatnonzero(mask.allowed[qb])
        visited += cols.size
        tok = (cols[:, None] * b + np.arange(b)).reshape(-1)
        qs = q[:, qb * b:(qb + 1) * b]
        scores = np.einsum("htd,hsd->hts", qs, k[:, tok]) * problem.scale
        # the diagonal block is always the last allowed one
        scores[:, :, -b:] = np.where(tri, scores[:, :, -b:], -np.inf)
        out[:, qb * b:(qb + 1) * b] = _softmax_rows(scores) @ v[:, tok]
    tile = b * b * problem.heads
    cost = CostReport(visited * tile, n * (n + 1) // 2 * tile)
    return out.astype(problem.dtype), cost


def max_abs_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64))))
