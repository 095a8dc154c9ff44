"""The trusted-party specification the protocol must match."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ProtocolConfig
from .dp import Histogram, round_div
from .iss import IssConfig, add_int_arrays, share_int
from .protocol import (PartyStreams, check_binary, noise_share_config, sample_server_noise,
                       share_all_clients)


@dataclass
class LeakageRecord:
    corrupted_ids: frozenset
    leaked_noise: dict = field(default_factory=dict)

    def __post_init__(self):
        self.corrupted_ids = frozenset(self.corrupted_ids)


ROUNDING_MODES = ("shares", "exact")


def _plain_counts(inputs) -> np.ndarray:
    if isinstance(inputs, Histogram):
        return np.asarray(inputs.counts, dtype=np.int64)
    return check_binary(inputs).sum(axis=0)


def _check_corrupted(corrupted, cfg):
    corrupted = tuple(range(cfg.t)) if corrupted is None else tuple(corrupted)
    if len(corrupted) > cfg.t:
        raise ValueError(f"{len(corrupted)} corrupted servers exceed the bound t={cfg.t}")
    if any(not 0 <= j < cfg.k for j in corrupted):
        raise ValueError(f"corrupted ids {corrupted} outside [0, {cfg.k})")
    return corrupted


def _lowest_argmax(w: np.ndarray):
    idx = np.argmax(w, axis=-1)
    return int(idx) if np.ndim(idx) == 0 else idx.astype(np.int64)


def ideal_functionality(inputs, cfg: ProtocolConfig, rng: np.random.Generator | None = None, *,
                        streams: PartyStreams | None = None, corrupted=None,
                        rounding: str = "shares", batch: int = 1,
                        fixed_noise: dict | None = None):
    """Sample noise for every server, round the noisy sum and report the argmax.

    With ``rng`` the noise and the share-wise rounding use fresh randomness:
    the aggregate gets one fresh h-party sharing whose shares are rounded
    separately, as the computing servers do. ``rounding="exact"`` applies a
    single round_div to the aggregate instead.

    With ``streams`` the oracle replays every party's stream in the order the
    protocol consumes them (clients, then each server's noise, then the
    supporting servers' noise sharings), so its output equals the protocol's
    output exactly. This mode needs per-client inputs.

    Returns ``(index, LeakageRecord)``; leakage is the noise of the
    ``corrupted`` servers (default: the first t).
    """
    if rounding not in ROUNDING_MODES:
        raise ValueError(f"rounding must be one of {ROUNDING_MODES}")
    if (rng is None) == (streams is None):
        raise ValueError("pass exactly one of rng or streams")
    corrupted = _check_corrupted(corrupted, cfg)
    fixed_noise = fixed_noise or {}
    x = _plain_counts(inputs)
    if x.shape != (cfg.d,):
        raise ValueError(f"inputs have {x.shape[-1]} coordinates, config expects {cfg.d}")
    shape = (batch, cfg.d) if batch > 1 else (cfg.d,)

    noises = []
    for j in range(cfg.k):
        if j in fixed_noise:
            noises.append(np.broadcast_to(np.asarray(fixed_noise[j], dtype=np.int64), shape).copy())
        else:
            noises.append(sample_server_noise(cfg, streams.noise(j) if streams else rng, shape)[0])
    leakage = LeakageRecord(corrupted, {j: noises[j] for j in corrupted})

    if streams is not None:
        aggs = _replay_aggregate_shares(inputs, cfg, streams, noises, batch)
        w = sum(round_div(s, cfg.gamma) for s in aggs)
        return _lowest_argmax(np.asarray(w, dtype=np.int64)), leakage

    z = np.broadcast_to(x, shape) + sum(noises)
    if rounding == "exact" or cfg.gamma == 1:
        w = round_div(z, cfg.gamma)
    else:
        ell = max(1, int(z.max()).bit_length())
        shares = share_int(z, IssConfig(cfg.h, cfg.kappa, ell), rng)
        w = sum(round_div(s.shares, cfg.gamma) for s in shares)
    return _lowest_argmax(np.asarray(w, dtype=np.int64)), leakage


def _replay_aggregate_shares(inputs, cfg, streams, noises, batch):
    if isinstance(inputs, Histogram):
        raise ValueError("stream replay needs the per-client input matrix")
    x = check_binary(inputs)
    shape = noises[0].shape
    client_shares = share_all_clients(x, cfg, streams, batch)
    aggs = []
    for i in range(cfg.h):
        agg = np.zeros(shape, dtype=np.int64)
        for s in client_shares[i]:
            agg = add_int_arrays(agg, np.asarray(s).reshape(shape))
        aggs.append(agg)
    for j in range(cfg.h, cfg.k):
        for sh in share_int(noises[j], noise_share_config(cfg), streams.sharing(j)):
            aggs[sh.server_id] = add_int_arrays(aggs[sh.server_id], sh.shares.reshape(shape))
    for i in range(cfg.h):
        aggs[i] = add_int_arrays(aggs[i], noises[i])
    return aggs
