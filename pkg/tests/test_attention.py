import numpy as np
import pytest

from oracles import attention_loops
from sparsefield import DomainError
from sparsefield.attention import (
    AttentionProblem,
    block_sparse_attention,
    cost_report,
    dense_attention,
    expand_mask,
    max_abs_diff,
    random_problem,
    shrink_mask,
)
from sparsefield.patterns import PRESETS, PatternConfig, build_mask
from sparsefield.rng import SplitMix64, splitmix64, standard_normals


# --- rng -------------------------------------------------------------------------

def test_splitmix_reference_values():
    # published SplitMix64 outputs for seed 0
    g = SplitMix64(0)
    assert [g.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_vectorized_matches_scalar():
    g = SplitMix64(123456789)
    assert [g.next() for _ in range(50)] == [int(x) for x in splitmix64(123456789, 50)]


def test_normals_reproducible_and_plausible():
    a = standard_normals(7, 100_001)
    assert np.array_equal(a, standard_normals(7, 100_001))
    assert abs(a.mean()) < 0.02 and abs(a.std() - 1) < 0.02
    assert not np.array_equal(a[:10], standard_normals(8, 10))


# --- dense oracle ----------------------------------------------------------------

def test_single_token_returns_value():
    p = random_problem(1, 2, 4, seed=3)
    out = dense_attention(p, np.ones((1, 1), dtype=bool))
    np.testing.assert_array_equal(out, p.v)


def test_uniform_keys_average_values():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(1, 6, 4))
    k = np.broadcast_to(rng.normal(size=(1, 1, 4)), (1, 6, 4)).copy()
    v = rng.normal(size=(1, 6, 4))
    out = dense_attention(AttentionProblem(q, k, v), np.tri(6, dtype=bool))
    expected = np.cumsum(v, axis=1) / np.arange(1, 7)[None, :, None]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_dense_matches_scalar_loops():
    p = random_problem(64, 2, 8, seed=11)
    tok = expand_mask(build_mask(PRESETS["power"], 16), 4)
    ref = attention_loops(p.q, p.k, p.v, tok)
    assert max_abs_diff(dense_attention(p, tok), ref) < 1e-6


def test_empty_row_rejected():
    p = random_problem(2, 1, 2, seed=1)
    with pytest.raises(DomainError):
        dense_attention(p, np.array([[True, False], [False, False]]))


def test_noncausal_mask_rejected():
    p = random_problem(2, 1, 2, seed=1)
    with pytest.raises(DomainError):
        dense_attention(p, np.ones((2, 2), dtype=bool))


def test_problem_rejects_nonfinite():
    z = np.zeros((1, 2, 2))
    bad = z.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(DomainError):
        AttentionProblem(z, bad, z)


def test_softmax_rows_sum_to_one():
    # v = identity turns each output row into that query's attention weights
    t = 32
    p = random_problem(t, 3, t, seed=5)
    tok = expand_mask(build_mask(PRESETS["sliding_window"], 8), 4)
    eye = np.broadcast_to(np.eye(t), (3, t, t)).copy()
    w = dense_attention(AttentionProblem(p.q, p.k, eye), tok)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)
    assert (w[:, ~tok] == 0).all()
    ws, _ = block_sparse_attention(AttentionProblem(p.q, p.k, eye), build_mask(PRESETS["sliding_window"], 8), 4)
    np.testing.assert_allclose(ws.sum(axis=-1), 1.0, atol=1e-6)


def test_linear_in_value_columns():
    p = random_problem(48, 2, 8, seed=9)
    tok = expand_mask(build_mask(PRESETS["stride_slash"], 12), 4)
    perm = np.random.default_rng(1).permutation(8)
    a = dense_attention(p, tok)
    b = dense_attention(AttentionProblem(p.q, p.k, p.v[..., perm]), tok)
    np.testing.assert_allclose(b, a[..., perm], atol=1e-14)
    s, _ = block_sparse_attention(AttentionProblem(p.q, p.k, p.v[..., perm]), build_mask(PRESETS["stride_slash"], 12), 4)
    np.testing.assert_allclose(s, a[..., perm], atol=1e-12)


# --- expand / shrink -------------------------------------------------------------

def test_expand_single_block():
    tok = expand_mask(build_mask(PatternConfig("full"), 1), 2)
    assert tok.tolist() == [[True, False], [True, True]]


def test_expand_degenerate_window():
    tok = expand_mask(build_mask(PatternConfig("sliding_window", window_blocks=1), 2), 1)
    assert tok.tolist() == [[True, False], [False, True]]


@pytest.mark.parametrize("name", list(PRESETS))
@pytest.mark.parametrize("bt", [1, 3, 8])
def test_expand_shrink_round_trip(name, bt):
    m = build_mask(PRESETS[name], 24)
    tok = expand_mask(m, bt)
    assert shrink_mask(tok, bt) == m
    assert not np.triu(tok, 1).any() and tok.diagonal().all()


def test_expand_block_semantics():
    m = build_mask(PatternConfig("sliding_window", window_blocks=2), 3)
    tok = expand_mask(m, 4)
    i, j = np.meshgrid(np.arange(12), np.arange(12), indexing="ij")
    expect = m.allowed[i // 4, j // 4] & ((i // 4 != j // 4) | (j <= i))
    np.testing.assert_array_equal(tok, expect)


# --- block-sparse forward --------------------------------------------------------

def test_full_equals_causal_attention():
    p = random_problem(64, 2, 16, seed=4)
    m = build_mask(PatternConfig("full"), 4)
    out, cost = block_sparse_attention(p, m, 16)
    ref = dense_attention(p, np.tri(64, dtype=bool))
    assert max_abs_diff(out, ref) < 1e-12
    assert cost.ratio == 1.0


def test_power_matches_oracle_float32():
    p = random_problem(256, 2, 16, seed=21, dtype=np.float32)
    m = build_mask(PRESETS["power"], 16)
    out, _ = block_sparse_attention(p, m, 16)
    assert out.dtype == np.float32
    assert max_abs_diff(out, dense_attention(p, expand_mask(m, 16))) < 1e-5


@pytest.mark.parametrize("name", ["sliding_window", "stride_slash", "dilated", "longnet", "power", "full"])
@pytest.mark.parametrize("bt", [16, 64])
@pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-10), (np.float32, 1e-5)])
def test_equivalence_grid(name, bt, dtype, tol):
    seq = 1024 if bt == 64 else 512
    p = random_problem(seq, 2, 32, seed=7 * len(name) + bt, dtype=dtype)
    m = build_mask(PRESETS[name], seq // bt)
    out, _ = block_sparse_attention(p, m, bt)
    assert max_abs_diff(out, dense_attention(p, expand_mask(m, bt))) < tol


def test_shape_mismatch():
    p = random_problem(100, 1, 4, seed=1)
    with pytest.raises(DomainError):
        block_sparse_attention(p, build_mask(PatternConfig("full"), 2), 64)


def test_cost_counts_visited_tiles():
    m = build_mask(PRESETS["sliding_window"], 128)
    c = cost_report(m, 256)
    # rows 0..8 see 1..9 blocks, rows 9..127 see 9 + sink = 10: 45 + 119 * 10
    assert c.score_flops == 1235 * 256 * 256
    assert c.ratio == pytest.approx(1235 / (128 * 129 / 2))
    assert c.ratio < 0.16


def test_cost_of_forward_matches_report():
    p = random_problem(128, 3, 4, seed=2)
    m = build_mask(PRESETS["power"], 16)
    _, c = block_sparse_attention(p, m, 8)
    assert c == cost_report(m, 8, heads=3)


def test_power_cost_is_n_log_n_bounded():
    n = 128
    m = build_mask(PRESETS["power"], n)
    c = cost_report(m, 1)
    assert c.score_flops <= (5 + 1 + np.log2(n)) * n
    assert 0 < c.ratio <= 1
