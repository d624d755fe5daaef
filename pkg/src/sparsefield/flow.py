"""Layer-by-layer influence propagation over stacks of block masks.

A stand-in for probing hidden states: put unit mass on one block, then let
each layer average what every query block can see (uniform weights over its
row) and add it onto the residual.  Everything stays nonnegative, so the
support of the field after ``l`` layers is exactly the set of blocks whose
state can depend on the source, i.e. reachability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .graph import row_bitsets
from .patterns import BlockMask, Family, PatternConfig, build_mask

FULL = PatternConfig(Family.FULL)


@dataclass(frozen=True)
class LayerSchedule:
    layers: tuple[PatternConfig, ...]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ConfigError("layers", "schedule needs at least one layer")
        for i, cfg in enumerate(layers):
            if not isinstance(cfg, PatternConfig):
                raise ConfigError(f"layers[{i}]", f"expected a PatternConfig, got {type(cfg).__name__}")
        tokens = {c.block_tokens for c in layers}
        if len(tokens) > 1:
            raise ConfigError("block_tokens", f"layers disagree on block_tokens: {sorted(tokens)}")
        object.__setattr__(self, "layers", layers)

    def __len__(self) -> int:
        return len(self.layers)

    @classmethod
    def uniform(cls, config: PatternConfig, count: int) -> "LayerSchedule":
        if count < 1:
            raise ConfigError("count", f"must be >= 1, got {count}")
        return cls((config,) * count)

    @classmethod
    def hybrid(cls, config: PatternConfig, count: int, full_every: int = 7,
               full_count: int = 2, position: str = "last") -> "LayerSchedule":
        """``count`` layers of ``config`` with ``full_count`` full-attention
        layers in every group of ``full_every``, at the group's end
        (``position="last"``) or start (``"first"``)."""
        if count < 1:
            raise ConfigError("count", f"must be >= 1, got {count}")
        if full_every < 1 or not 0 <= full_count <= full_every:
            raise ConfigError("hybrid", f"need 0 <= full_count <= full_every, got {full_count}:{full_every}")
        if position == "last":
            slots = range(full_every - full_count, full_every)
        elif position == "first":
            slots = range(full_count)
        else:
            raise ConfigError("hybrid_position", f"expected 'first' or 'last', got {position!r}")
        slots = set(slots)
        return cls(tuple(FULL if i % full_every in slots else config for i in range(count)))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LayerSchedule":
        if "layers" in data:
            raw = data["layers"]
            if not isinstance(raw, list):
                raise ConfigError("layers", "must be a list of pattern configs")
            layers = []
            for i, item in enumerate(raw):
                if not isinstance(item, Mapping):
                    raise ConfigError(f"layers[{i}]", "must be an object")
                try:
                    layers.append(PatternConfig.from_dict(item))
                except (ConfigError, TypeError) as exc:
                    raise ConfigError(f"layers[{i}]", str(exc)) from None
            return cls(tuple(layers))
        if "repeat" in data:
            try:
                base = PatternConfig.from_dict(data["repeat"])
            except (ConfigError, TypeError) as exc:
                raise ConfigError("repeat", str(exc)) from None
            count = int(data.get("count", 1))
            if "hybrid_full_every" in data or "hybrid_full_count" in data:
                return cls.hybrid(base, count,
                                  int(data.get("hybrid_full_every", 7)),
                                  int(data.get("hybrid_full_count", 2)),
                                  str(data.get("hybrid_position", "last")))
            return cls.uniform(base, count)
        raise ConfigError("schedule", "expected a 'layers' list or a 'repeat' config")

    @classmethod
    def load(cls, path: str | Path) -> "LayerSchedule":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("json", str(exc)) from None
        if not isinstance(data, Mapping):
            raise ConfigError("json", "top-level value must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {"layers": [c.to_dict() for c in self.layers]}

    def masks(self, n_blocks: int) -> list[BlockMask]:
        cache: dict[PatternConfig, BlockMask] = {}
        out = []
        for c in self.layers:
            if c not in cache:
                cache[c] = build_mask(c, n_blocks)
            out.append(cache[c])
        return out

    def full_layers(self) -> list[int]:
        """1-based layer numbers that use full causal attention."""
        return [i + 1 for i, c in enumerate(self.layers) if c.family is Family.FULL]


@dataclass(frozen=True)
class InfluenceField:
    """``values[l, b]``: influence of the source on block ``b`` after ``l`` layers."""

    values: np.ndarray
    source: int

    @property
    def n_layers(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_blocks(self) -> int:
        return self.values.shape[1]

    def support(self, layer: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.values[layer] > 0).tolist())

    def first_arrival(self, block: int) -> Optional[int]:
        hit = np.flatnonzero(self.values[:, block] > 0)
        return int(hit[0]) if hit.size else None

    def to_csv(self) -> str:
        lines = ["layer,block,value"]
        for layer, row in enumerate(self.values):
            lines += [f"{layer},{b},{float(x)!r}" for b, x in enumerate(row)]
        return "\n".join(lines) + "\n"

    def to_pgm(self) -> bytes:
        """Plain PGM, one row per layer; zero stays black, positive values
        are log-scaled into ``1..255``."""
        v = self.values
        pos = v > 0
        img = np.zeros(v.shape, dtype=np.int64)
        if pos.any():
            logs = np.log10(v[pos])
            lo, hi = logs.min(), logs.max()
            if hi > lo:
                img[pos] = 1 + np.rint(254 * (logs - lo) / (hi - lo)).astype(np.int64)
            else:
                img[pos] = 255
        h, w = img.shape
        lines = ["P2", f"{w} {h}", "255"]
        lines += [" ".join(str(x) for x in row) for row in img.tolist()]
        return ("\n".join(lines) + "\n").encode("ascii")


def propagate_influence(schedule: LayerSchedule, n_blocks: int, source_block: int) -> InfluenceField:
    if not 0 <= source_block < n_blocks:
        raise DomainError(f"source block {source_block} out of range [0, {n_blocks})")
    values = np.zeros((len(schedule) + 1, n_blocks))
    values[0, source_block] = 1.0
    weights: dict[int, np.ndarray] = {}
    for l, mask in enumerate(schedule.masks(n_blocks)):
        w = weights.get(id(mask))
        if w is None:
            a = mask.allowed.astype(np.float64)
            w = weights[id(mask)] = a / a.sum(axis=1, keepdims=True)
        values[l + 1] = values[l] + w @ values[l]
    return InfluenceField(values, source_block)


def _expand(rows: list[int], frontier: int) -> int:
    acc = 0
    while frontier:
        low = frontier & -frontier
        acc |= rows[low.bit_length() - 1]
        frontier ^= low
    return acc


def retrievable_sets(schedule: LayerSchedule, n_blocks: int,
                     observer: int | None = None) -> list[frozenset[int]]:
    """For ``k = 0..d``: blocks whose information reaches ``observer`` using
    layers ``1..k`` in order.

    Walked backwards from the observer: the last layer used is the first hop.
    """
    obs = n_blocks - 1 if observer is None else observer
    if not 0 <= obs < n_blocks:
        raise DomainError(f"observer {obs} out of range [0, {n_blocks})")
    rows = [row_bitsets(m) for m in schedule.masks(n_blocks)]
    out = [frozenset({obs})]
    for k in range(1, len(schedule) + 1):
        reached = 1 << obs
        for layer in range(k - 1, -1, -1):
            reached = _expand(rows[layer], reached)
        out.append(frozenset(i for i in range(n_blocks) if reached >> i & 1))
    return out


def retrievability(schedule: LayerSchedule, n_blocks: int, passkey_block: int) -> bool:
    if not 0 <= passkey_block < n_blocks:
        raise DomainError(f"passkey block {passkey_block} out of range [0, {n_blocks})")
    return passkey_block in retrievable_sets(schedule, n_blocks)[-1]


def retrievability_curve(schedule: LayerSchedule, n_blocks: int) -> list[tuple[int, float]]:
    """``(k, fraction of blocks retrievable by the last block within k layers)``, ``k = 1..d``."""
    sets = retrievable_sets(schedule, n_blocks)
    return [(k, len(s) / n_blocks) for k, s in enumerate(sets) if k >= 1]


def mass_growth_bound(mask: BlockMask) -> float:
    """Factor bounding one layer's growth of total influence mass.

    Total mass after a layer is at most ``1 + max column sum`` of the
    row-normalized attention matrix times the mass before it.
    """
    a = mask.allowed.astype(np.float64)
    w = a / a.sum(axis=1, keepdims=True)
    return 1.0 + float(w.sum(axis=0).max())

