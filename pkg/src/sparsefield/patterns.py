"""Block-level masks for the static sparse attention families.

Every mask here is a causal boolean matrix over *blocks* (256 tokens each by
default).  ``allowed[q, k]`` is True iff query block ``q`` may attend key
block ``k``.  With ``d = q - k`` the family rules are:

========== ==========================================================
full        ``k <= q``
sliding     ``d < window`` or ``k < sink``
stride      sliding, plus ``slash`` columns spread at equal intervals
            over the row's causal context ``[0, q]``
dilated     ``d < window * (dilation + 1)`` and ``d % (dilation + 1) == 0``
longnet     union over ``(w, r)`` of "same w-segment and both offsets
            from the segment start are multiples of r"
power       ``d < window`` or ``k < sink`` or ``d`` a power of two
power_pure  ``d == 0`` or ``d`` a power of two
========== ==========================================================

The diagonal is always attendable.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_TOKENS = 256


class Family(str, enum.Enum):
    FULL = "full"
    SLIDING_WINDOW = "sliding_window"
    STRIDE_SLASH = "stride_slash"
    DILATED = "dilated"
    LONGNET = "longnet"
    POWER = "power"
    POWER_PURE = "power_pure"

    @classmethod
    def parse(cls, name: str | "Family") -> "Family":
        if isinstance(name, Family):
            return name
        key = str(name).strip().lower().replace("-", "_")
        key = _FAMILY_ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise ConfigError("family", f"unknown family {name!r} (choose from {choices})") from None


_FAMILY_ALIASES = {
    "full_causal": "full",
    "fullcausal": "full",
    "causal": "full",
    "sliding": "sliding_window",
    "slidingwindow": "sliding_window",
    "window": "sliding_window",
    "stride": "stride_slash",
    "strideslash": "stride_slash",
    "powerpure": "power_pure",
    "poweratt": "power",
    "power_attention": "power",
}

# Parameters each family reads; anything else must be left at zero/empty.
_USES: dict[Family, frozenset[str]] = {
    Family.FULL: frozenset(),
    Family.SLIDING_WINDOW: frozenset({"window_blocks", "sink_blocks"}),
    Family.STRIDE_SLASH: frozenset({"window_blocks", "sink_blocks", "slash_blocks"}),
    Family.DILATED: frozenset({"window_blocks", "dilation_blocks"}),
    Family.LONGNET: frozenset({"segments"}),
    Family.POWER: frozenset({"window_blocks", "sink_blocks", "slash_blocks"}),
    Family.POWER_PURE: frozenset(),
}

_WINDOWED = frozenset({Family.SLIDING_WINDOW, Family.STRIDE_SLASH, Family.DILATED, Family.POWER})

_COUNT_FIELDS = ("window_blocks", "sink_blocks", "slash_blocks", "dilation_blocks")


@dataclass(frozen=True)
class PatternConfig:
    """One sparse-attention family plus its block budgets.

    For ``power`` a nonzero ``slash_blocks`` caps how many power-of-two
    offsets beyond the local window are kept (smallest first); zero keeps
    every power offset that fits in the context.
    """

    family: Family
    window_blocks: int = 0
    sink_blocks: int = 0
    slash_blocks: int = 0
    dilation_blocks: int = 0
    segments: tuple[tuple[int, int], ...] = ()
    block_tokens: int = DEFAULT_BLOCK_TOKENS

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "segments", _normalize_segments(self.segments))
        for name in _COUNT_FIELDS + ("block_tokens",):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(name, f"expected an integer, got {value!r}")
            if value < 0:
                raise ConfigError(name, f"must be >= 0, got {value}")
            object.__setattr__(self, name, int(value))
        if self.block_tokens < 1:
            raise ConfigError("block_tokens", "must be >= 1")

        used = _USES[self.family]
        for name in _COUNT_FIELDS:
            if name not in used and getattr(self, name) != 0:
                raise ConfigError(name, f"not a parameter of family {self.family.value!r}")
        if "segments" not in used and self.segments:
            raise ConfigError("segments", f"not a parameter of family {self.family.value!r}")

        if self.family in _WINDOWED and self.window_blocks < 1:
            raise ConfigError("window_blocks", f"family {self.family.value!r} needs window_blocks >= 1")
        if self.family is Family.LONGNET and not self.segments:
            raise ConfigError("segments", "longnet needs at least one (length, dilation) pair")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PatternConfig":
        known = {"family", "segments", "block_tokens", *_COUNT_FIELDS}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        if "family" not in data:
            raise ConfigError("family", "missing")
        kwargs = {k: v for k, v in data.items() if v is not None}
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "PatternConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("json", str(exc)) from None
        if not isinstance(data, dict):
            raise ConfigError("json", "top-level value must be an object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "PatternConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "window_blocks": self.window_blocks,
            "sink_blocks": self.sink_blocks,
            "slash_blocks": self.slash_blocks,
            "dilation_blocks": self.dilation_blocks,
            "segments": [list(s) for s in self.segments],
            "block_tokens": self.block_tokens,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def label(self) -> str:
        """Short human-readable tag, used as the ``pattern`` CSV column."""
        f = self.family
        if f is Family.SLIDING_WINDOW:
            return f"sliding_window(w={self.window_blocks};s={self.sink_blocks})"
        if f is Family.STRIDE_SLASH:
            return f"stride_slash(w={self.window_blocks};s={self.sink_blocks};l={self.slash_blocks})"
        if f is Family.DILATED:
            return f"dilated(w={self.window_blocks};r={self.dilation_blocks})"
        if f is Family.LONGNET:
            segs = ";".join(f"{w}:{r}" for w, r in self.segments)
            return f"longnet({segs})"
        if f is Family.POWER:
            tail = f";l={self.slash_blocks}" if self.slash_blocks else ""
            return f"power(w={self.window_blocks};s={self.sink_blocks}{tail})"
        return f.value

    def is_degenerate(self, n_blocks: int) -> bool:
        """True when the nominal budget alone already covers the context."""
        if self.family is Family.DILATED:
            return self.window_blocks * (self.dilation_blocks + 1) >= n_blocks
        budget = self.window_blocks + self.sink_blocks + self.slash_blocks
        return bool(_USES[self.family]) and budget > n_blocks


def _normalize_segments(segments: Iterable[Any]) -> tuple[tuple[int, int], ...]:
    out = []
    for i, seg in enumerate(segments or ()):
        try:
            w, r = seg
            w, r = int(w), int(r)
        except (TypeError, ValueError):
            raise ConfigError("segments", f"entry {i} must be a (length, dilation) pair, got {seg!r}") from None
        if w < 1 or r < 1:
            raise ConfigError("segments", f"entry {i}: length and dilation must be >= 1, got ({w}, {r})")
        out.append((w, r))
    return tuple(out)


# Configurations used for the 32K-context comparison (256-token blocks).
PRESETS: dict[str, PatternConfig] = {
    "full": PatternConfig(Family.FULL),
    "sliding_window": PatternConfig(Family.SLIDING_WINDOW, window_blocks=9, sink_blocks=1),
    "stride_slash": PatternConfig(Family.STRIDE_SLASH, window_blocks=6, sink_blocks=1, slash_blocks=3),
    "dilated": PatternConfig(Family.DILATED, window_blocks=20, dilation_blocks=1),
    "longnet": PatternConfig(
        Family.LONGNET, segments=((8, 1), (16, 2), (32, 4), (64, 8), (128, 16))
    ),
    "power": PatternConfig(Family.POWER, window_blocks=5, sink_blocks=1),
}


@dataclass(frozen=True, eq=False)
class BlockMask:
    """Square causal block adjacency matrix (read-only)."""

    allowed: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        a = np.array(self.allowed, dtype=bool, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DomainError(f"block mask must be a non-empty square matrix, got shape {a.shape}")
        if np.triu(a, 1).any():
            raise DomainError("block mask is not causal")
        if not np.diagonal(a).all():
            raise DomainError("block mask must allow every diagonal block")
        a.setflags(write=False)
        object.__setattr__(self, "allowed", a)

    @property
    def n_blocks(self) -> int:
        return self.allowed.shape[0]

    def row(self, q: int) -> np.ndarray:
        """Allowed key blocks of query block ``q`` (ascending)."""
        _check_index(q, self.n_blocks)
        return np.flatnonzero(self.allowed[q])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockMask):
            return NotImplemented
        return np.array_equal(self.allowed, other.allowed)

    def __hash__(self) -> int:
        return hash((self.n_blocks, np.packbits(self.allowed).tobytes()))


def _check_index(i: int, n: int, name: str = "block index") -> None:
    if not 0 <= i < n:
        raise DomainError(f"{name} {i} out of range [0, {n})")


def _is_power_of_two(d: np.ndarray) -> np.ndarray:
    return (d > 0) & ((d & (d - 1)) == 0)


def build_mask(config: PatternConfig, n_blocks: int) -> BlockMask:
    """Materialize ``config`` as an ``n_blocks x n_blocks`` block mask."""
    if n_blocks < 1:
        raise DomainError(f"n_blocks must be >= 1, got {n_blocks}")
    if config.is_degenerate(n_blocks):
        logger.info("%s saturates a %d-block context", config.label, n_blocks)

    q = np.arange(n_blocks, dtype=np.int64)[:, None]
    k = np.arange(n_blocks, dtype=np.int64)[None, :]
    d = q - k
    causal = d >= 0
    fam = config.family

    if fam is Family.FULL:
        allowed = causal.copy()
    elif fam is Family.SLIDING_WINDOW:
        allowed = (d < config.window_blocks) | (k < config.sink_blocks)
    elif fam is Family.STRIDE_SLASH:
        allowed = (d < config.window_blocks) | (k < config.sink_blocks)
        slots = config.slash_blocks + 1
        for j in range(1, slots):
            allowed |= k == (j * (q + 1)) // slots
    elif fam is Family.DILATED:
        step = config.dilation_blocks + 1
        allowed = (d < config.window_blocks * step) & (d % step == 0)
    elif fam is Family.LONGNET:
        allowed = np.zeros((n_blocks, n_blocks), dtype=bool)
        for w, r in config.segments:
            same = (q // w) == (k // w)
            allowed |= same & ((q % w) % r == 0) & ((k % w) % r == 0)
    elif fam is Family.POWER:
        allowed = (d < config.window_blocks) | (k < config.sink_blocks)
        powers = _is_power_of_two(d) & (d >= config.window_blocks)
        if config.slash_blocks:
            kept = [1 << e for e in range(n_blocks.bit_length())
                    if (1 << e) >= config.window_blocks][: config.slash_blocks]
            powers &= np.isin(d, kept)
        allowed |= powers
    elif fam is Family.POWER_PURE:
        allowed = (d == 0) | _is_power_of_two(d)
    else:  # pragma: no cover
        raise ConfigError("family", f"unhandled family {fam}")

    allowed = (allowed | (d == 0)) & causal
    return BlockMask(allowed, label=config.label)


def row_budget(mask: BlockMask, q: int) -> int:
    """Number of key blocks query block ``q`` attends."""
    _check_index(q, mask.n_blocks)
    return int(mask.allowed[q].sum())


def sparsity(mask: BlockMask, denominator: str = "full_square") -> float:
    """``1 - allowed / total`` against the full square or the causal triangle."""
    n = mask.n_blocks
    if denominator == "full_square":
        total = n * n
    elif denominator == "causal_triangle":
        total = n * (n + 1) // 2
    else:
        raise DomainError(f"unknown denominator {denominator!r}")
    return 1.0 - int(mask.allowed.sum()) / total


def render_mask(mask: BlockMask) -> bytes:
    """Plain (P1) PBM, one pixel per block, 1 = allowed (black)."""
    n = mask.n_blocks
    lines = ["P1", f"{n} {n}"]
    lines += [" ".join("1" if b else "0" for b in row) for row in mask.allowed]
    return ("\n".join(lines) + "\n").encode("ascii")


def mask_csv(mask: BlockMask) -> str:
    """``q,k`` pairs of allowed entries, row-major, with header."""
    qs, ks = np.nonzero(mask.allowed)
    body = "".join(f"{a},{b}\n" for a, b in zip(qs.tolist(), ks.tolist()))
    return "q,k\n" + body

