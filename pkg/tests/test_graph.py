import math

import numpy as np
import pytest

from oracles import closure_by_matrix_power, reach_sets_by_matrix
from sparsefield import DomainError
from sparsefield.graph import (
    UNREACHABLE,
    bfs_depths,
    closure_row,
    coverage_gaps,
    depth_growth_curve,
    reach_profile,
    shortest_depth,
    steps_to_full,
    transitive_closure,
)
from sparsefield.patterns import PRESETS, PatternConfig, build_mask

PURE = PatternConfig("power_pure")


def popcount(x):
    return bin(x).count("1")


def test_sliding_window_first_step():
    m = build_mask(PRESETS["sliding_window"], 128)
    prof = reach_profile(m, 127, 1)
    assert prof.steps[1] == {0, *range(119, 128)}
    assert prof.coverage[1] == 10 / 128


def test_power_pure_first_two_steps():
    m = build_mask(PURE, 16)
    prof = reach_profile(m, 15, 2)
    assert prof.steps[1] == {15, 14, 13, 11, 7}
    expected = {15 - d for d in range(16) if popcount(d) <= 2}
    assert len(expected) == 11
    assert prof.steps[2] == expected


@pytest.mark.parametrize("n", [1, 2, 9, 64])
def test_full_causal_one_hop(n):
    prof = reach_profile(build_mask(PatternConfig("full"), n), n - 1, 3)
    assert prof.coverage[1] == 1.0


def test_profile_monotone_and_fixpoint():
    for cfg in PRESETS.values():
        prof = reach_profile(build_mask(cfg, 96), 95, 40)
        for a, b in zip(prof.steps, prof.steps[1:]):
            assert a <= b
        seen_fix = False
        for a, b in zip(prof.steps, prof.steps[1:]):
            if seen_fix:
                assert a == b
            seen_fix = seen_fix or a == b
        cov = prof.coverage
        assert all(0 < c <= 1 for c in cov) and cov == sorted(cov)


def test_profile_zero_steps():
    prof = reach_profile(build_mask(PURE, 8), 3, 0)
    assert prof.steps == (frozenset({3}),)


def test_profile_rejects_bad_source():
    with pytest.raises(DomainError):
        reach_profile(build_mask(PURE, 8), 8, 1)


CLOSURE_CASES = list(PRESETS.items()) + [("power_pure", PURE)]


@pytest.mark.parametrize("name,cfg", CLOSURE_CASES)
@pytest.mark.parametrize("n", [5, 37, 128])
def test_fixpoint_equals_matrix_closure(name, cfg, n):
    m = build_mask(cfg, n)
    oracle = closure_by_matrix_power(m.allowed)
    ours = transitive_closure(m)
    np.testing.assert_array_equal(ours, oracle)
    for src in (n - 1, n // 2, 0):
        assert closure_row(m, src) == set(np.flatnonzero(oracle[src]).tolist())
        prof = reach_profile(m, src, n)
        assert prof.steps[-1] == closure_row(m, src)


@pytest.mark.parametrize("name,cfg", CLOSURE_CASES)
def test_profile_matches_matrix_powers(name, cfg):
    m = build_mask(cfg, 64)
    oracle = reach_sets_by_matrix(m.allowed, 63, 10)
    assert [set(s) for s in reach_profile(m, 63, 10).steps] == oracle


# --- shortest_depth ------------------------------------------------------------

def test_power_pure_depth_1023():
    m = build_mask(PURE, 1024)
    assert shortest_depth(m, 1023, 0) == 10 == popcount(1023)


def test_dilated_odd_offset_unreachable():
    m = build_mask(PatternConfig("dilated", window_blocks=2, dilation_blocks=1), 16)
    assert shortest_depth(m, 10, 9) is UNREACHABLE


def test_depth_zero_to_self():
    for cfg in PRESETS.values():
        assert shortest_depth(build_mask(cfg, 20), 7, 7) == 0


def test_depth_rejects_future_target():
    with pytest.raises(DomainError):
        shortest_depth(build_mask(PURE, 8), 3, 5)


def test_power_pure_depth_is_popcount_exhaustive():
    n = 512
    m = build_mask(PURE, n)
    for src in range(n):
        depths = bfs_depths(m, src)
        assert depths == {t: popcount(src - t) for t in range(src + 1)}
    # spot-check the single-pair entry point too
    for src, tgt in [(511, 0), (300, 45), (256, 255), (17, 1)]:
        assert shortest_depth(m, src, tgt) == popcount(src - tgt)


@pytest.mark.parametrize("window", [2, 3, 5, 9])
def test_sliding_window_depth_closed_form(window):
    n = 256
    m = build_mask(PatternConfig("sliding_window", window_blocks=window), n)
    for src in range(n):
        depths = bfs_depths(m, src)
        assert depths == {t: math.ceil((src - t) / (window - 1)) for t in range(src + 1)}


# --- coverage_gaps -------------------------------------------------------------

def test_dilated_gaps_are_odd_offsets():
    for window in (2, 20):
        m = build_mask(PatternConfig("dilated", window_blocks=window, dilation_blocks=1), 128)
        gaps = coverage_gaps(m, 127)
        assert gaps == {b for b in range(128) if (127 - b) % 2 == 1}
        assert len(gaps) / 128 == 0.5


def test_dilated_gaps_any_source():
    m = build_mask(PatternConfig("dilated", window_blocks=3, dilation_blocks=1), 50)
    for src in range(50):
        assert coverage_gaps(m, src) == {b for b in range(src + 1) if (src - b) % 2}


def test_power_and_full_have_no_gaps():
    assert coverage_gaps(build_mask(PRESETS["power"], 128), 127) == frozenset()
    assert coverage_gaps(build_mask(PatternConfig("full"), 40), 39) == frozenset()


def test_power_and_stride_full_within_six():
    for name in ("power", "stride_slash"):
        m = build_mask(PRESETS[name], 128)
        assert coverage_gaps(m, 127) == frozenset()
        assert reach_profile(m, 127, 6).coverage[6] == 1.0
        assert steps_to_full(m, 127) <= 6


def test_longnet_misses_segment_ends():
    m = build_mask(PRESETS["longnet"], 128)
    gaps = coverage_gaps(m, 127)
    assert gaps
    assert {7, 15, 23} <= gaps


# --- depth_growth_curve --------------------------------------------------------

@pytest.mark.parametrize("window", [2, 4, 9])
def test_sliding_growth_is_linear(window):
    n = 200
    curve = depth_growth_curve(build_mask(PatternConfig("sliding_window", window_blocks=window), n), n - 1)
    for k, size in curve:
        assert size == min(n, 1 + k * (window - 1))


@pytest.mark.parametrize("m", [3, 6, 9])
def test_power_pure_growth_binomial(m):
    n = 2 ** m
    curve = depth_growth_curve(build_mask(PURE, n), n - 1)
    assert curve == [(k, sum(math.comb(m, j) for j in range(k + 1))) for k in range(m + 1)]


def test_growth_single_block():
    assert depth_growth_curve(build_mask(PURE, 1), 0) == [(0, 1)]


def test_growth_full():
    assert depth_growth_curve(build_mask(PatternConfig("full"), 12), 11) == [(0, 1), (1, 12)]
