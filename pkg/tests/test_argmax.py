from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from dpselect.argmax import argmax_rounds, secure_argmax, secure_lt, secure_mux
from dpselect.preprocessing import (additive_ring_shares, dealer_preprocess, index_limbs,
                                    lt_depth, lt_multiplications)
from support import ALPHA, mpc


def setup(values, h, a, comparisons, seed=0):
    g = np.random.default_rng(seed)
    pools = dealer_preprocess(SimpleNamespace(h=h, a=a, d=max(2, np.shape(values)[-1])),
                              comparisons, g)
    shares = additive_ring_shares(np.asarray(values, dtype=np.uint64), h, a, g)
    return pools, shares


def reveal(outputs, a):
    return sum(r for r, _ in outputs) % (1 << a)


@pytest.mark.parametrize("a", [4, 5, 6])
@pytest.mark.parametrize("h", [2, 3])
def test_lt_exhaustive(a, h):
    half = 1 << (a - 1)
    u, v = np.meshgrid(np.arange(half), np.arange(half), indexing="ij")
    u, v = u.reshape(-1), v.reshape(-1)
    pools, us = setup(u, h, a, u.size, seed=a)
    _, vs = setup(v, h, a, 0, seed=a + 100)
    out = mpc(h, a, pools, lambda ctx, i: secure_lt(ctx, us[i], vs[i]))
    assert np.array_equal(reveal(out, a), (u < v).astype(np.uint64))


def test_lt_cost_and_rounds():
    a = 9
    pools, us = setup(np.array([3, 200]), 2, a, 2)
    _, vs = setup(np.array([4, 100]), 2, a, 0, seed=1)
    out = mpc(2, a, pools, lambda ctx, i: secure_lt(ctx, us[i], vs[i]))
    ctx = out[0][1]
    assert ctx.endpoint.stats.online_rounds == 1 + lt_depth(a)
    assert ctx.pool.triples_used == 2 * lt_multiplications(a)
    assert reveal(out, a).tolist() == [1, 0]


def test_masked_opening_uniform():
    a, runs = 5, 20_000
    pools, us = setup(np.full(runs, 7), 2, a, runs, seed=2)
    _, vs = setup(np.full(runs, 3), 2, a, 0, seed=3)
    out = mpc(2, a, pools, lambda ctx, i: secure_lt(ctx, us[i], vs[i]))
    m = out[0][1].audit[0].values
    assert out[0][1].audit[0].kind == "OPEN_MASKED"
    assert stats.chisquare(np.bincount(m.astype(int), minlength=1 << a)).pvalue > ALPHA


@given(st.integers(0, 1), st.integers(0, 31), st.integers(0, 31), st.integers(0, 2**32))
@settings(max_examples=25)
def test_mux(b, u, v, seed):
    a = 5
    pools, bs = setup(np.array([b]), 2, a, 1, seed)
    _, us = setup(np.array([u]), 2, a, 0, seed + 1)
    _, vs = setup(np.array([v]), 2, a, 0, seed + 2)
    out = mpc(2, a, pools, lambda ctx, i: secure_mux(ctx, bs[i], us[i], vs[i]))
    assert int(reveal(out, a)[0]) == (v if b else u)


def test_max_by_composition():
    a = 6
    u = np.array([0, 5, 31, 17, 9])
    v = np.array([1, 5, 2, 30, 9])
    pools, us = setup(u, 3, a, u.size, seed=4)
    _, vs = setup(v, 3, a, 0, seed=5)

    def body(ctx, i):
        b = secure_lt(ctx, us[i], vs[i])
        return secure_mux(ctx, b, us[i], vs[i])
    out = mpc(3, a, pools, body)
    assert reveal(out, a).tolist() == np.maximum(u, v).tolist()


def run_argmax(values, h, a, seed=0):
    values = np.asarray(values)
    d = values.shape[-1]
    batch = values.size // d
    pools, shares = setup(values, h, a, batch * (d - 1), seed)
    out = mpc(h, a, pools, lambda ctx, i: secure_argmax(ctx, shares[i]))
    results = [r for r, _ in out]
    for r in results[1:]:
        assert np.array_equal(r, results[0])
    return results[0], out[0][1]


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8, 13])
def test_argmax_matches_plaintext(d):
    g = np.random.default_rng(d)
    for trial in range(5):
        vals = g.integers(0, 16, size=d)
        idx, _ = run_argmax(vals, 2, 6, seed=trial)
        assert idx == int(np.argmax(vals))


def test_argmax_ties_lowest_index():
    assert run_argmax([3, 9, 9, 1, 9], 2, 5)[0] == 1
    assert run_argmax([4, 4, 4, 4], 3, 5)[0] == 0


def test_argmax_batched():
    g = np.random.default_rng(6)
    vals = g.integers(0, 8, size=(7, 9))
    idx, _ = run_argmax(vals, 2, 5)
    assert idx.tolist() == np.argmax(vals, axis=1).tolist()


def test_argmax_wide_index_limbs():
    d = 1024
    vals = np.zeros(d, dtype=int)
    vals[777] = 9
    idx, ctx = run_argmax(vals, 2, 5)
    assert idx == 777
    assert index_limbs(d, 5) == 2
    assert ctx.pool.edabits_used == d - 1
    assert ctx.endpoint.stats.online_rounds == argmax_rounds(d, 5)


@pytest.mark.parametrize("d,a", [(2, 5), (16, 8), (100, 12)])
def test_round_count_regression(d, a):
    vals = np.arange(d) % (1 << (a - 1))
    _, ctx = run_argmax(vals, 2, a)
    levels = (d - 1).bit_length()
    assert ctx.endpoint.stats.online_rounds == levels * (lt_depth(a) + 2) + 1
