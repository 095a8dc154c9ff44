import numpy as np
import pytest

from dpselect.audit import (CorruptionBoundError, audit_corrupted_view, consumed_ids,
                            find_reuse)
from dpselect.config import ProtocolConfig
from dpselect.protocol import run_protocol


@pytest.fixture(scope="module")
def recorded():
    x = np.zeros((12, 8), dtype=int)
    x[np.arange(12), np.arange(12) % 8] = 1
    cfg = ProtocolConfig(epsilon=1.0, trunc_bits=1, servers=3, dims=8, clients=12)
    return run_protocol(x, cfg, seed=5, record=True)


@pytest.mark.parametrize("ids", [[0], [1], [2], []])
def test_corrupted_view_within_leakage(recorded, ids):
    view = audit_corrupted_view(recorded, ids)
    assert view.ok, view.violations
    for j in ids:
        assert np.array_equal(view.leaked_noise[j], recorded.servers[j].noise)


def test_computing_view_counts(recorded):
    view = audit_corrupted_view(recorded, [0])
    assert view.masked_openings == 7 and view.index_openings == 1
    assert view.share_bits[0] >= 40
    assert view.received["PREPROC"] == 1 and view.received["NOISE_SHARE"] == 1


def test_supporting_server_receives_nothing(recorded):
    assert sum(audit_corrupted_view(recorded, [2]).received.values()) == 0


def test_corruption_bound(recorded):
    with pytest.raises(CorruptionBoundError):
        audit_corrupted_view(recorded, [0, 1])
    with pytest.raises(CorruptionBoundError):
        audit_corrupted_view(recorded, [7])


def test_needs_recording():
    x = np.eye(2, dtype=int)
    cfg = ProtocolConfig(epsilon=1.0, trunc_bits=0, servers=3, dims=2, clients=2)
    with pytest.raises(ValueError):
        audit_corrupted_view(run_protocol(x, cfg, seed=0), [0])


def test_detects_unmasked_opening(recorded):
    first = next(o for o in recorded.servers[0].audit if o.kind == "OPEN_MASKED")
    saved = first.values.copy()
    first.values[:] = 0
    try:
        assert not audit_corrupted_view(recorded, [0]).ok
    finally:
        first.values[:] = saved


def test_fresh_randomness_across_runs():
    x = np.eye(4, dtype=int)
    cfg = ProtocolConfig(epsilon=1.0, trunc_bits=0, servers=3, dims=4, clients=4)
    ranges = []
    for seed in range(20):
        ranges += consumed_ids(run_protocol(x, cfg, seed=seed))
    assert not find_reuse(ranges)


def test_find_reuse():
    assert find_reuse([("edabit", 0, 5), ("edabit", 4, 2)]) == [("edabit", 0, 5, 4, 6)]
    assert not find_reuse([("edabit", 0, 5), ("triple", 0, 5), ("edabit", 5, 1)])
