"""Inspect what a corrupted minority observed during a recorded run."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .preprocessing import index_limbs, ring_mask
from .protocol import ProtocolResult
from .wire import MpcOp, Phase

ALLOWED_OPENINGS = {MpcOp.OPEN_MASKED.name, MpcOp.OPEN_FINAL.name, MpcOp.TRIPLE_OPEN.name}


class CorruptionBoundError(ValueError):
    pass


@dataclass
class ViewSummary:
    corrupted_ids: frozenset
    received: Counter = field(default_factory=Counter)       # opcode name -> frames
    openings: Counter = field(default_factory=Counter)       # kind -> values opened
    masked_openings: int = 0
    index_openings: int = 0
    leaked_noise: dict = field(default_factory=dict)
    share_bits: dict = field(default_factory=dict)           # server -> max |share| bits
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _sessions(result: ProtocolResult) -> int:
    shape = result.servers[0].noise.shape
    return shape[0] if len(shape) == 2 else 1


def audit_corrupted_view(result: ProtocolResult, corrupted_ids) -> ViewSummary:
    """Collect the joint view of ``corrupted_ids`` and check it against the leakage model.

    The run must have been recorded (``record=True``). Checks: every frame a
    corrupted server received has an opcode its role may receive; the values
    opened to a corrupted computing server are only masked comparison inputs,
    the final index limbs and Beaver openings, in exactly the expected counts;
    the first masked opening differs from the unmasked comparison input by
    the fresh edaBit mask; corrupted integer shares carry kappa bits of
    masking. The leakage is the corrupted servers' own noise.
    """
    cfg = result.cfg
    corrupted = frozenset(corrupted_ids)
    if len(corrupted) > cfg.t:
        raise CorruptionBoundError(f"{len(corrupted)} corrupted servers exceed t={cfg.t}")
    if any(not 0 <= j < cfg.k for j in corrupted):
        raise CorruptionBoundError(f"unknown server ids in {sorted(corrupted)}")
    if result.frames is None:
        raise ValueError("audit needs a recorded run (record=True)")
    summary = ViewSummary(corrupted)
    if not corrupted:
        return summary

    sessions = _sessions(result)
    limbs = index_limbs(cfg.d, cfg.a)
    for rec in result.frames:
        if rec.dst not in corrupted:
            continue
        op = Phase(rec.opcode)
        summary.received[op.name] += 1
        if rec.dst >= cfg.h:
            summary.violations.append(f"supporting server {rec.dst} received {op.name} from {rec.src}")
        elif op == Phase.PREPROC and rec.src != cfg.h:
            summary.violations.append(f"preprocessing frame from non-dealer {rec.src}")
        elif op == Phase.NOISE_SHARE and rec.src < cfg.h:
            summary.violations.append(f"noise shares from computing server {rec.src}")
        elif op in (Phase.ARGMAX, Phase.OPEN) and rec.src >= cfg.h:
            summary.violations.append(f"argmax traffic from supporting server {rec.src}")

    for j in sorted(corrupted):
        out = result.servers[j]
        summary.leaked_noise[j] = out.noise
        if not out.role.computing:
            continue
        counts = Counter()
        for opened in out.audit:
            counts[opened.kind] += int(opened.values.size)
        summary.openings.update(counts)
        unexpected = set(counts) - ALLOWED_OPENINGS
        if unexpected:
            summary.violations.append(f"server {j} saw openings of kind {sorted(unexpected)}")
        masked = counts[MpcOp.OPEN_MASKED.name]
        final = counts[MpcOp.OPEN_FINAL.name]
        summary.masked_openings = masked // sessions
        summary.index_openings = final // (limbs * sessions)
        if masked != sessions * (cfg.d - 1):
            summary.violations.append(f"server {j}: {masked} masked openings, "
                                      f"expected {sessions * (cfg.d - 1)}")
        if final != sessions * limbs:
            summary.violations.append(f"server {j}: {final} final opening values, "
                                      f"expected {sessions * limbs}")
        bits = max(abs(int(v)) for v in np.asarray(out.aggregate_share).flat).bit_length()
        summary.share_bits[j] = bits
        if bits < cfg.kappa:
            summary.violations.append(f"server {j}: aggregate share has only {bits} bits")
        _check_first_masking(result, j, summary)
    return summary


def _check_first_masking(result: ProtocolResult, j: int, summary: ViewSummary):
    """The first masked opening must equal the first-level comparison inputs plus fresh r."""
    cfg = result.cfg
    if cfg.d < 2:
        return
    mask = ring_mask(cfg.a)
    computing = result.servers[:cfg.h]
    agg = sum(s.ring_share for s in computing) & mask
    pairs = cfg.d // 2
    left, right = agg[..., 0:2 * pairs:2], agg[..., 1:2 * pairs:2]
    z = (left - right + np.uint64(1 << (cfg.a - 1))) & mask
    first = next(o for o in result.servers[j].audit if o.kind == MpcOp.OPEN_MASKED.name)
    r = sum(s.pool.r[:z.size] for s in computing) & mask
    if not np.array_equal((first.values.reshape(-1) - r) & mask, z.reshape(-1)):
        summary.violations.append(f"server {j}: first masked opening is not input + fresh mask")
    if z.size >= 8 and np.array_equal(first.values.reshape(-1), z.reshape(-1)):
        summary.violations.append(f"server {j}: comparison inputs were opened unmasked")


def consumed_ids(result: ProtocolResult) -> list[tuple[str, int, int]]:
    """(kind, first id, count) for every correlated-randomness draw of the run."""
    pool = result.servers[0].pool
    return list(pool.consumed) if pool is not None else []


def find_reuse(ranges) -> list[tuple]:
    """Overlapping id ranges among ``(kind, start, count)`` entries."""
    by_kind: dict[str, list] = {}
    for kind, start, count in ranges:
        if count:
            by_kind.setdefault(kind, []).append((start, start + count))
    clashes = []
    for kind, spans in by_kind.items():
        spans.sort()
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                clashes.append((kind, s0, e0, s1, e1))
    return clashes
