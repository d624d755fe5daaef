"""Command-line front end.

Exit status: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .attention import (
    block_sparse_attention,
    dense_attention,
    expand_mask,
    max_abs_diff,
    random_problem,
)
from .errors import ConfigError, DomainError
from .flow import LayerSchedule, propagate_influence, retrievability_curve, retrievable_sets
from .graph import coverage_gaps, depth_growth_curve, reach_profile
from .patterns import PRESETS, PatternConfig, build_mask, mask_csv, render_mask, row_budget, sparsity
from .theory import verify_theorem

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "SPARSEFIELD_SEED"


class UsageError(Exception):
    pass


def _add_pattern_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pattern")
    g.add_argument("--config", metavar="PATH", help="pattern config JSON")
    g.add_argument("--family", help="full, sliding_window, stride_slash, dilated, longnet, power, power_pure")
    g.add_argument("--window", type=int, default=0, help="local window blocks")
    g.add_argument("--sink", type=int, default=0, help="sink blocks")
    g.add_argument("--slash", type=int, default=0, help="slash blocks")
    g.add_argument("--dilation", type=int, default=0, help="dilation gap in blocks")
    g.add_argument("--segments", default="", metavar="W:R,...", help="longnet segments, e.g. 8:1,16:2")


def _parse_segments(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in filter(None, (s.strip() for s in text.split(","))):
        try:
            w, r = part.split(":")
            out.append((int(w), int(r)))
        except ValueError:
            raise UsageError(f"--segments: cannot parse {part!r}, expected W:R") from None
    return tuple(out)


def _inline_given(args: argparse.Namespace) -> bool:
    return bool(args.family or args.window or args.sink or args.slash or args.dilation or args.segments)


def _pattern(args: argparse.Namespace, required: bool = True) -> PatternConfig | None:
    if args.config:
        if _inline_given(args):
            raise UsageError("--config cannot be combined with inline pattern flags")
        return _load_config(args.config)
    if not args.family:
        if required:
            raise UsageError("one of --family or --config is required")
        if _inline_given(args):
            raise UsageError("--family is required with inline pattern flags")
        return None
    return PatternConfig(
        family=args.family,
        window_blocks=args.window,
        sink_blocks=args.sink,
        slash_blocks=args.slash,
        dilation_blocks=args.dilation,
        segments=_parse_segments(args.segments),
    )


def _load_config(ref: str) -> PatternConfig:
    if ref in PRESETS and not Path(ref).exists():
        return PRESETS[ref]
    try:
        return PatternConfig.load(ref)
    except OSError as exc:
        raise UsageError(f"cannot read config {ref!r}: {exc.strerror}") from None


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("ascii")
    path.write_bytes(data)


def _manifest(out: Path, args: argparse.Namespace, argv: Sequence[str], seed: int | None = None) -> None:
    manifest = {
        "command": " ".join(["sparsefield", *argv]),
        "config_path": getattr(args, "config", None) or getattr(args, "schedule", None),
        "seed": seed,
        "output_dir": str(out),
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    extra = getattr(args, "_manifest_extra", None)
    if extra:
        manifest.update(extra)
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_mask(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _pattern(args)
    mask = build_mask(cfg, args.blocks)
    out = _out_dir(args)
    _write(out / "mask.pbm", render_mask(mask))
    _write(out / "mask.csv", mask_csv(mask))
    _manifest(out, args, argv)
    last = mask.n_blocks - 1
    print(f"{cfg.label}: {mask.n_blocks} blocks, row {last} budget {row_budget(mask, last)}, "
          f"sparsity {sparsity(mask, 'full_square'):.6f} (square) "
          f"{sparsity(mask, 'causal_triangle'):.6f} (causal)")
    if cfg.is_degenerate(args.blocks):
        print(f"note: {cfg.label} saturates a {args.blocks}-block context", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace, argv: Sequence[str]) -> int:
    configs = []
    first = _pattern(args, required=not args.compare)
    if first is not None:
        configs.append(first)
    configs += [_load_config(ref) for ref in args.compare or ()]
    n = args.blocks
    source = n - 1 if args.source is None else args.source
    if not 0 <= source < n:
        raise UsageError(f"--source {source} out of range [0, {n})")
    if args.layers is not None and args.layers < 1:
        raise UsageError("--layers must be >= 1")

    cov = ["pattern,n_blocks,source,k,reachable,coverage"]
    gaps = ["pattern,n_blocks,source,block"]
    for cfg in configs:
        mask = build_mask(cfg, n)
        steps = args.layers
        if steps is None:
            steps = max(1, depth_growth_curve(mask, source)[-1][0])
        prof = reach_profile(mask, source, steps)
        for k in range(1, steps + 1):
            cov.append(f"{cfg.label},{n},{source},{k},{len(prof.steps[k])},{prof.coverage[k]:.6f}")
        gaps += [f"{cfg.label},{n},{source},{b}" for b in sorted(coverage_gaps(mask, source))]

    out = _out_dir(args)
    _write(out / "coverage.csv", "\n".join(cov) + "\n")
    _write(out / "gaps.csv", "\n".join(gaps) + "\n")
    _manifest(out, args, argv)
    print(f"wrote {len(cov) - 1} coverage rows and {len(gaps) - 1} gap rows to {out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, argv: Sequence[str]) -> int:
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    report = verify_theorem(args.n)
    data = report.to_dict()
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict} n={args.n} mode={report.mode} max_out_degree={report.max_out_degree} "
          f"max_bfs_distance={report.max_bfs_distance} bound={report.bound}")
    print(json.dumps(data, sort_keys=True))
    if args.out:
        out = _out_dir(args)
        _write(out / "verify.json", json.dumps(data, indent=2, sort_keys=True) + "\n")
        _manifest(out, args, argv)
    return EXIT_OK if report.passed else EXIT_FAIL


def _seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def cmd_attn(args: argparse.Namespace, argv: Sequence[str]) -> int:
    for flag in ("seq", "block_tokens", "heads", "dim"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be >= 1")
    if args.seq % args.block_tokens:
        raise UsageError(f"--seq {args.seq} is not a multiple of --block-tokens {args.block_tokens}")
    cfg = _pattern(args)
    seed = _seed(args)
    n = args.seq // args.block_tokens
    dtype = np.float32 if args.dtype == "float32" else np.float64
    problem = random_problem(args.seq, args.heads, args.dim, seed, dtype)
    mask = build_mask(cfg, n)
    sparse, cost = block_sparse_attention(problem, mask, args.block_tokens)
    dense = dense_attention(problem, expand_mask(mask, args.block_tokens))
    diff = max_abs_diff(sparse, dense)
    ok = diff <= args.tol
    report = {
        "pattern": cfg.label,
        "seq": args.seq,
        "block_tokens": args.block_tokens,
        "n_blocks": n,
        "heads": args.heads,
        "dim": args.dim,
        "dtype": args.dtype,
        "seed": seed,
        "max_abs_diff": diff,
        "tol": args.tol,
        "pass": ok,
        "score_flops": cost.score_flops,
        "dense_flops": cost.dense_flops,
        "ratio": cost.ratio,
    }
    print(f"{'PASS' if ok else 'FAIL'} max_abs_diff={diff:.3e} tol={args.tol:g} "
          f"score_flops={cost.score_flops} dense_flops={cost.dense_flops} ratio={cost.ratio:.6f}")
    if args.out:
        out = _out_dir(args)
        _write(out / "attn.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        _manifest(out, args, argv, seed=seed)
    return EXIT_OK if ok else EXIT_FAIL


def _parse_hybrid(text: str) -> tuple[int, int]:
    try:
        full, every = (int(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--hybrid: expected FULL:EVERY, got {text!r}") from None
    return full, every


def _schedule(args: argparse.Namespace) -> LayerSchedule:
    if args.schedule:
        if _inline_given(args) or args.config:
            raise UsageError("--schedule cannot be combined with pattern flags")
        try:
            return LayerSchedule.load(args.schedule)
        except OSError as exc:
            raise UsageError(f"cannot read schedule {args.schedule!r}: {exc.strerror}") from None
    cfg = _pattern(args)
    if args.layers is None:
        raise UsageError("--layers is required without --schedule")
    if args.hybrid:
        full, every = _parse_hybrid(args.hybrid)
        return LayerSchedule.hybrid(cfg, args.layers, every, full, args.hybrid_position)
    return LayerSchedule.uniform(cfg, args.layers)


def cmd_flow(args: argparse.Namespace, argv: Sequence[str]) -> int:
    schedule = _schedule(args)
    n = args.blocks
    p = args.passkey_block
    if not 0 <= p < n:
        raise UsageError(f"--passkey-block {p} out of range [0, {n})")
    field = propagate_influence(schedule, n, p)
    sets = retrievable_sets(schedule, n)
    curve = retrievability_curve(schedule, n)
    rows = ["k,coverage,passkey_retrievable"]
    rows += [f"{k},{a:.6f},{int(p in sets[k])}" for k, a in curve]

    out = _out_dir(args)
    _write(out / "influence.csv", field.to_csv())
    _write(out / "influence.pgm", field.to_pgm())
    _write(out / "retrievability.csv", "\n".join(rows) + "\n")
    args._manifest_extra = {
        "full_layers": schedule.full_layers(),
        "hybrid_position": args.hybrid_position if args.hybrid else None,
    }
    _manifest(out, args, argv)
    arrival = field.first_arrival(n - 1)
    print(f"{len(schedule)} layers, {n} blocks, passkey block {p}: "
          f"reaches block {n - 1} at layer {arrival if arrival is not None else 'never'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsefield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="build a block mask, write mask.pbm and mask.csv")
    _add_pattern_flags(p)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("analyze", help="coverage curve and gaps from the last block")
    _add_pattern_flags(p)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--layers", type=int, help="steps to report (default: until the fixpoint)")
    p.add_argument("--source", type=int, help="source block (default: last)")
    p.add_argument("--compare", nargs="+", metavar="CONFIG",
                   help="extra configs (JSON paths or preset names) merged into one table")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="check the power-of-two DAG bounds")
    p.add_argument("what", nargs="?", choices=["theorem"], default="theorem")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attn", help="block-sparse attention vs. the dense oracle")
    _add_pattern_flags(p)
    p.add_argument("--seq", type=int, required=True)
    p.add_argument("--block-tokens", type=int, required=True)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--seed", type=int, help=f"defaults to ${SEED_ENV}, then 0")
    p.add_argument("--dtype", choices=["float64", "float32"], default="float64")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attn)

    p = sub.add_parser("flow", help="influence map and retrievability over a layer schedule")
    p.add_argument("what", nargs="?", choices=["map"], default="map")
    _add_pattern_flags(p)
    p.add_argument("--schedule", metavar="PATH", help="schedule JSON")
    p.add_argument("--layers", type=int, help="layer count for an inline pattern")
    p.add_argument("--hybrid", metavar="FULL:EVERY", help="e.g. 2:7 = 2 full layers per 7")
    p.add_argument("--hybrid-position", choices=["last", "first"], default="last")
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--passkey-block", type=int, required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_flow)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "blocks", 1) is not None and getattr(args, "blocks", 1) < 1:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: --blocks must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, argv)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
