import math
from types import SimpleNamespace

import numpy as np
import pytest

from dpselect.preprocessing import (CorrPool, PoolExhausted, dealer_preprocess, edabit_at,
                                    index_limbs, lt_depth, lt_multiplications,
                                    pool_requirements, simulated_honest_majority_preprocess,
                                    simulated_offline_charge, triple_at)


def cfg(h=2, a=8, d=16, k=3, t=1):
    return SimpleNamespace(h=h, a=a, d=d, k=k, t=t)


def test_edabits_are_consistent():
    pools = dealer_preprocess(cfg(a=8), 200, np.random.default_rng(0))
    for i in range(200):
        r, bits = edabit_at(pools, i).reconstruct()
        assert all(b in (0, 1) for b in bits)
        assert r == sum(b << j for j, b in enumerate(bits))


def test_triples_multiply():
    pools = dealer_preprocess(cfg(h=3, a=11), 50, np.random.default_rng(1))
    for i in range(pools[0].tu.size):
        u, v, w = triple_at(pools, i).reconstruct()
        assert w == (u * v) % (1 << 11)


def test_edabit_values_uniform():
    pools = dealer_preprocess(cfg(a=3), 40_000, np.random.default_rng(2))
    r = np.array([p.r for p in pools]).sum(axis=0) % 8
    counts = np.bincount(r.astype(int), minlength=8)
    assert np.all(np.abs(counts / r.size - 1 / 8) < 0.01)


def test_individual_shares_look_uniform():
    pools = dealer_preprocess(cfg(a=4), 40_000, np.random.default_rng(3))
    counts = np.bincount(pools[0].bits[:, 0].astype(int), minlength=16)
    assert np.all(np.abs(counts / pools[0].bits.shape[0] - 1 / 16) < 0.01)


def test_pool_serialization_round_trip():
    pool = dealer_preprocess(cfg(a=9), 7, np.random.default_rng(4), 100, 200)[1]
    back = CorrPool.from_bytes(1, pool.to_bytes())
    for name in ("r", "bits", "tu", "tv", "tw"):
        assert np.array_equal(getattr(back, name), getattr(pool, name))
    assert (back.a, back.edabit_base, back.triple_base) == (9, 100, 200)


def test_consumption_is_fresh_and_bounded():
    pool = dealer_preprocess(cfg(), 3, np.random.default_rng(5), edabit_base=10)[0]
    pool.take_edabits(2)
    pool.take_edabits(1)
    assert pool.consumed == [("edabit", 10, 2), ("edabit", 12, 1)]
    with pytest.raises(PoolExhausted):
        pool.take_edabits(1)
    with pytest.raises(PoolExhausted):
        pool.take_triples(pool.tu.size + 1)


@pytest.mark.parametrize("a", range(2, 33))
def test_circuit_cost_bounds(a):
    assert lt_multiplications(a) <= max(1, 2 * a - 3)
    assert lt_depth(a) == math.ceil(math.log2(a))


def test_index_limbs():
    assert index_limbs(1024, 5) == 2
    assert index_limbs(1024, 10) == 1
    assert index_limbs(2, 3) == 1


def test_pool_size_for_d_1024():
    a = 5
    n_eda, n_tri = pool_requirements(1023, a, 1024)
    pools = dealer_preprocess(cfg(a=a, d=1024), 1023, np.random.default_rng(6))
    assert pools[0].r.size == n_eda == 1023
    assert pools[0].bits.size >= a * 1023
    assert n_tri == 1023 * (lt_multiplications(a) + 1 + index_limbs(1024, a))


def test_offline_charge_scales_with_d():
    c1 = simulated_offline_charge(5, 12, 1023, 1024)
    c2 = simulated_offline_charge(5, 12, 2047, 2048)
    assert 1.9 <= c2.bytes_per_server / c1.bytes_per_server <= 2.1
    assert c1.rounds == c2.rounds == 2


def test_simulated_preprocess_validates_majority():
    with pytest.raises(ValueError):
        simulated_honest_majority_preprocess(cfg(k=4, t=2), 4, np.random.default_rng())
    pools, charge = simulated_honest_majority_preprocess(cfg(h=3, k=5, t=2), 4,
                                                         np.random.default_rng(7))
    assert len(pools) == 3 and charge.bytes_per_server > 0
