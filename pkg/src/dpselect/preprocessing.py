"""Correlated randomness for the comparison circuit: edaBits and Beaver triples."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .iss import decode_ring, encode_ring


class PoolExhausted(RuntimeError):
    pass


def ring_mask(a: int) -> np.uint64:
    return np.uint64((1 << a) - 1) if a < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)


def random_ring(a: int, rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 1 << a, size=shape, dtype=np.uint64)


def additive_ring_shares(values: np.ndarray, h: int, a: int,
                         rng: np.random.Generator) -> list[np.ndarray]:
    """Split ring elements into h uniformly random additive shares mod 2**a."""
    shares = [random_ring(a, rng, values.shape) for _ in range(h - 1)]
    last = values.astype(np.uint64)
    for s in shares:
        last = last - s
    shares.append(last & ring_mask(a))
    return shares


@dataclass
class EdaBit:
    """A shared random ring element r with shares of its bits, all servers' shares."""
    a: int
    r_shares: list[int]
    bit_shares: list[list[int]]  # [server][bit]

    def reconstruct(self) -> tuple[int, list[int]]:
        mod = 1 << self.a
        r = sum(self.r_shares) % mod
        bits = [sum(s[i] for s in self.bit_shares) % mod for i in range(self.a)]
        return r, bits


@dataclass
class MulTriple:
    a: int
    u_shares: list[int]
    v_shares: list[int]
    w_shares: list[int]

    def reconstruct(self) -> tuple[int, int, int]:
        mod = 1 << self.a
        return (sum(self.u_shares) % mod, sum(self.v_shares) % mod,
                sum(self.w_shares) % mod)


def edabit_at(pools, i: int) -> EdaBit:
    return EdaBit(pools[0].a, [int(p.r[i]) for p in pools],
                  [[int(b) for b in p.bits[i]] for p in pools])


def triple_at(pools, i: int) -> MulTriple:
    return MulTriple(pools[0].a, [int(p.tu[i]) for p in pools],
                     [int(p.tv[i]) for p in pools], [int(p.tw[i]) for p in pools])


@dataclass
class CorrPool:
    """One computing server's share of the preprocessed randomness.

    Items are consumed front to back and never reused; ids are global so a
    transcript can check freshness.
    """

    server_id: int
    a: int
    r: np.ndarray            # (N,)
    bits: np.ndarray         # (N, a), bit i of r in column i
    tu: np.ndarray           # (M,)
    tv: np.ndarray
    tw: np.ndarray
    edabit_base: int = 0
    triple_base: int = 0
    edabits_used: int = 0
    triples_used: int = 0
    consumed: list = field(default_factory=list)

    @property
    def edabits_left(self) -> int:
        return self.r.size - self.edabits_used

    @property
    def triples_left(self) -> int:
        return self.tu.size - self.triples_used

    def take_edabits(self, n: int):
        if n > self.edabits_left:
            raise PoolExhausted(f"need {n} edaBits, {self.edabits_left} left")
        lo = self.edabits_used
        self.edabits_used += n
        self.consumed.append(("edabit", self.edabit_base + lo, n))
        return self.r[lo:lo + n], self.bits[lo:lo + n]

    def take_triples(self, n: int):
        if n > self.triples_left:
            raise PoolExhausted(f"need {n} triples, {self.triples_left} left")
        lo = self.triples_used
        self.triples_used += n
        self.consumed.append(("triple", self.triple_base + lo, n))
        sl = slice(lo, lo + n)
        return self.tu[sl], self.tv[sl], self.tw[sl]

    _HEAD = struct.Struct("<BIIQQ")

    def to_bytes(self) -> bytes:
        head = self._HEAD.pack(self.a, self.r.size, self.tu.size,
                               self.edabit_base, self.triple_base)
        body = np.concatenate([self.r, self.bits.reshape(-1), self.tu, self.tv, self.tw])
        return head + encode_ring(body)

    @classmethod
    def from_bytes(cls, server_id: int, payload: bytes) -> "CorrPool":
        a, n, m, eb, tb = cls._HEAD.unpack_from(payload)
        body = decode_ring(payload[cls._HEAD.size:], n + n * a + 3 * m)
        parts = np.split(body, np.cumsum([n, n * a, m, m]))
        return cls(server_id, a, parts[0], parts[1].reshape(n, a), parts[2], parts[3],
                   parts[4], edabit_base=eb, triple_base=tb)


# Comparison circuit shape. Leaves are ordered from the most significant
# position; position 0 folds the top bit of the masked difference in, the
# rest compare the low a-1 bits. Internal nodes combine (G, P) pairs:
# G = G_hi + P_hi * G_lo and, only when an ancestor needs it, P = P_hi * P_lo.

@dataclass
class _Node:
    lo: int
    hi: int
    left: "_Node | None" = None
    right: "_Node | None" = None
    height: int = 0
    need_p: bool = False

    @property
    def leaf(self) -> bool:
        return self.left is None


def _build(lo, hi, need_p):
    node = _Node(lo, hi, need_p=need_p)
    if hi - lo == 1:
        return node
    mid = lo + (hi - lo + 1) // 2
    node.left = _build(lo, mid, True)
    node.right = _build(mid, hi, need_p)
    node.height = 1 + max(node.left.height, node.right.height)
    return node


def lt_circuit(a: int) -> _Node:
    if a < 2:
        raise ValueError("ring width must be at least 2 for comparisons")
    return _build(0, a, False)


def _internal(node):
    if node.leaf:
        return []
    return _internal(node.left) + _internal(node.right) + [node]


def lt_multiplications(a: int) -> int:
    """Secure multiplications per comparison (at most 2a - 3)."""
    return sum(1 + n.need_p for n in _internal(lt_circuit(a)))


def lt_depth(a: int) -> int:
    return lt_circuit(a).height


def index_limbs(d: int, a: int) -> int:
    """Ring limbs needed to carry an index in [0, d) through Z_{2^a}."""
    bits = max(1, (d - 1).bit_length())
    return -(-bits // a)


def triples_per_comparison(a: int, d: int) -> int:
    # circuit + one value mux + one mux per index limb
    return lt_multiplications(a) + 1 + index_limbs(d, a)


def pool_requirements(comparisons: int, a: int, d: int) -> tuple[int, int]:
    return comparisons, comparisons * triples_per_comparison(a, d)


def _deal(h: int, a: int, n_edabits: int, n_triples: int, rng: np.random.Generator,
          edabit_base: int = 0, triple_base: int = 0) -> list[CorrPool]:
    mask = ring_mask(a)
    bits = rng.integers(0, 2, size=(n_edabits, a), dtype=np.uint64)
    weights = np.array([1 << i for i in range(a)], dtype=np.uint64)
    r = (bits * weights).sum(axis=1, dtype=np.uint64) & mask if n_edabits else \
        np.zeros(0, dtype=np.uint64)
    u = random_ring(a, rng, n_triples)
    v = random_ring(a, rng, n_triples)
    w = (u * v) & mask
    r_sh = additive_ring_shares(r, h, a, rng)
    b_sh = additive_ring_shares(bits, h, a, rng)
    u_sh = additive_ring_shares(u, h, a, rng)
    v_sh = additive_ring_shares(v, h, a, rng)
    w_sh = additive_ring_shares(w, h, a, rng)
    return [CorrPool(i, a, r_sh[i], b_sh[i], u_sh[i], v_sh[i], w_sh[i],
                     edabit_base=edabit_base, triple_base=triple_base)
            for i in range(h)]


def dealer_preprocess(cfg, comparisons: int, rng: np.random.Generator,
                      edabit_base: int = 0, triple_base: int = 0) -> list[CorrPool]:
    """A single dealer samples everything in the clear and shares it to the h computing servers.

    ``cfg`` needs ``h``, ``a`` and ``d``. The protocol only uses this mode
    with three servers, where the dealer is the one supporting server.
    """
    n_eda, n_tri = pool_requirements(comparisons, cfg.a, cfg.d)
    return _deal(cfg.h, cfg.a, n_eda, n_tri, rng, edabit_base, triple_base)


# Charge model for honest-majority generation over a Galois extension of
# Z_{2^a}: every shared bit and every triple costs each server
# ELEMENTS_PER_ITEM extension elements of a * ceil(log2 k) bits.
ELEMENTS_PER_ITEM = 4
SIMULATED_OFFLINE_ROUNDS = 2


@dataclass
class OfflineCharge:
    bytes_per_server: int
    rounds: int


def simulated_offline_charge(k: int, a: int, comparisons: int, d: int) -> OfflineCharge:
    n_bits = comparisons * a
    _, n_tri = pool_requirements(comparisons, a, d)
    ext_bits = a * max(1, math.ceil(math.log2(k)))
    bits = ELEMENTS_PER_ITEM * ext_bits * (n_bits + n_tri)
    return OfflineCharge(-(-bits // 8), SIMULATED_OFFLINE_ROUNDS)


def simulated_honest_majority_preprocess(cfg, comparisons: int, rng: np.random.Generator,
                                         edabit_base: int = 0, triple_base: int = 0
                                         ) -> tuple[list[CorrPool], OfflineCharge]:
    """Stand-in for the k-server generation protocol.

    Output pools have the dealer's distribution; the communication the real
    protocol would need is returned as a charge instead of being sent.
    """
    if cfg.k < 3 or not cfg.t < cfg.k / 2:
        raise ValueError("honest-majority preprocessing needs k >= 3 and t < k/2")
    pools = dealer_preprocess(cfg, comparisons, rng, edabit_base, triple_base)
    return pools, simulated_offline_charge(cfg.k, cfg.a, comparisons, cfg.d)
