"""Additive integer secret sharing among the computing servers.

Shares are exact integers held in numpy arrays. Arrays are int64 while every
value provably fits; additions that could overflow are redone on Python ints
(object arrays), so reconstruction is always exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .dp import round_div

_INT64_SAFE_BITS = 62


@dataclass(frozen=True)
class IssConfig:
    h: int
    kappa: int = 40
    ell: int = 1

    def __post_init__(self):
        if self.h < 2:
            raise ValueError("integer sharing needs h >= 2 servers")
        if self.kappa < 40:
            raise ValueError("kappa must be at least 40")
        if self.ell < 1:
            raise ValueError("ell must be at least 1")

    @property
    def share_bits(self) -> int:
        """Shares are uniform on [-2**share_bits, 2**share_bits)."""
        return self.ell + self.kappa

    @property
    def storage_bits(self) -> int:
        return self.ell + self.kappa + math.ceil(math.log2(self.h)) + 1


@dataclass
class IntShareVec:
    server_id: int
    shares: np.ndarray

    @property
    def shape(self):
        return self.shares.shape


@dataclass
class RingShareVec:
    server_id: int
    shares: np.ndarray  # uint64, reduced mod 2**a
    a: int


def uniform_signed(bits: int, rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform integers on [-2**bits, 2**bits)."""
    if bits <= _INT64_SAFE_BITS:
        return rng.integers(-(1 << bits), 1 << bits, size=shape, dtype=np.int64)
    # compose from 32-bit limbs, then shift into the signed range
    limbs = -(-(bits + 1) // 32)
    out = np.zeros(shape, dtype=object)
    for _ in range(limbs):
        out = out * (1 << 32) + rng.integers(0, 1 << 32, size=shape,
                                              dtype=np.uint64).astype(object)
    out = out % (1 << (bits + 1))
    return out - (1 << bits)


def _as_int_array(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError("integer sharing needs integer secrets")
    return arr.astype(np.int64)


def add_int_arrays(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact elementwise sum, promoting to Python ints on int64 overflow."""
    if x.dtype == object or y.dtype == object:
        return np.asarray(x, dtype=object) + np.asarray(y, dtype=object)
    out = x + y
    overflow = ((x ^ out) & (y ^ out)) < 0
    if np.any(overflow):
        return x.astype(object) + y.astype(object)
    return out


def _max_abs_bits(x: np.ndarray) -> int:
    if x.size == 0:
        return 0
    if x.dtype == object:
        return max(abs(int(v)) for v in x.flat).bit_length()
    return int(np.abs(x).max()).bit_length()


def share_int(secret_vec, cfg: IssConfig, rng: np.random.Generator) -> list[IntShareVec]:
    """Split ``secret_vec`` into h additive integer sharings.

    Servers 0..h-2 receive uniform shares drawn before the secret is read;
    server h-1 receives the difference.
    """
    shape = np.shape(secret_vec)
    masks = [uniform_signed(cfg.share_bits, rng, shape) for _ in range(cfg.h - 1)]
    secret = _as_int_array(secret_vec)
    if _max_abs_bits(secret) > cfg.ell:
        raise ValueError(f"secret exceeds {cfg.ell} bits")
    last = secret
    for m in masks:
        last = add_int_arrays(last, -m)
    return [IntShareVec(i, m) for i, m in enumerate(masks)] + [IntShareVec(cfg.h - 1, last)]


def _check_ids(shares):
    ids = [s.server_id for s in shares]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate server ids in {ids}")
    if sorted(ids) != list(range(len(ids))):
        raise ValueError(f"server ids must be 0..h-1, got {sorted(ids)}")
    shapes = {s.shares.shape for s in shares}
    if len(shapes) != 1:
        raise ValueError(f"mismatched share shapes {shapes}")


def reconstruct_int(shares: list[IntShareVec]) -> np.ndarray:
    _check_ids(shares)
    total = shares[0].shares
    for s in shares[1:]:
        total = add_int_arrays(total, s.shares)
    return total


def add_shares(a: IntShareVec, b: IntShareVec) -> IntShareVec:
    """Local addition: reconstructs to the sum of the two secrets."""
    if a.server_id != b.server_id:
        raise ValueError(f"server id mismatch {a.server_id} != {b.server_id}")
    if a.shares.shape != b.shares.shape:
        raise ValueError(f"shape mismatch {a.shares.shape} != {b.shares.shape}")
    return IntShareVec(a.server_id, add_int_arrays(a.shares, b.shares))


def trunc_shares(x: IntShareVec, c: int) -> IntShareVec:
    """Drop the c low bits of every share with round-half-up.

    The reconstruction differs from x / 2**c by at most h/2.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    return IntShareVec(x.server_id, round_div(x.shares, 1 << c))


def ring_reduce(values: np.ndarray, a: int) -> np.ndarray:
    """Map exact integers to their residues mod 2**a as uint64."""
    if not 1 <= a <= 64:
        raise ValueError(f"ring width must be in [1, 64], got {a}")
    if values.dtype == object:
        mod = 1 << a
        return np.array([int(v) % mod for v in values.flat],
                        dtype=np.uint64).reshape(values.shape)
    # two's complement wrap then mask matches mod 2**a for a <= 64
    out = values.astype(np.int64).view(np.uint64)
    if a < 64:
        out = out & np.uint64((1 << a) - 1)
    return out.copy()


def convert_to_ring(x: IntShareVec, a: int) -> RingShareVec:
    """Local conversion y_i = x_i mod 2**a; lossless when the secret fits."""
    return RingShareVec(x.server_id, ring_reduce(x.shares, a), a)


def reconstruct_ring(shares: list[RingShareVec]) -> np.ndarray:
    a = shares[0].a
    if any(s.a != a for s in shares):
        raise ValueError("ring widths differ")
    _check_ids(shares)
    total = np.zeros(shares[0].shares.shape, dtype=np.uint64)
    for s in shares:
        total = total + s.shares
    if a < 64:
        total &= np.uint64((1 << a) - 1)
    return total


@dataclass
class RoundingWitness:
    rounded: int
    rounded_bar: int

    @property
    def difference(self) -> int:
        return abs(self.rounded - self.rounded_bar)


def rounding_sensitivity_check(x: int, x_bar: int, eta: int, gamma: int,
                               shares: list[int]) -> RoundingWitness:
    """Share-wise rounding of two neighbouring secrets under shared randomness.

    ``shares`` is a sharing of ``x``; the sharing of ``x_bar`` reuses every
    share but the last. The noise ``eta`` is added to the last share, which
    is how a computing server folds in its own noise.
    """
    if abs(x - x_bar) > 1:
        raise ValueError("neighbouring secrets differ by at most 1")
    if sum(shares) != x:
        raise ValueError("shares do not reconstruct x")
    head = list(shares[:-1])
    last = shares[-1]
    last_bar = last + (x_bar - x)
    rounded = sum(round_div(s, gamma) for s in head) + round_div(last + eta, gamma)
    rounded_bar = sum(round_div(s, gamma) for s in head) + round_div(last_bar + eta, gamma)
    witness = RoundingWitness(rounded, rounded_bar)
    if witness.difference > 1:
        raise AssertionError(f"rounding sensitivity violated: {witness}")
    return witness


# Wire encodings: fixed width little-endian.

def encode_int_shares(values: np.ndarray) -> bytes:
    """128-bit signed little-endian per share."""
    flat = values.reshape(-1)
    if flat.dtype != object:
        v = flat.astype(np.int64)
        out = np.empty((v.size, 2), dtype="<u8")
        out[:, 0] = v.view(np.uint64)
        out[:, 1] = (v >> 63).view(np.uint64)
        return out.tobytes()
    return b"".join(int(v).to_bytes(16, "little", signed=True) for v in flat)


def decode_int_shares(payload: bytes, shape) -> np.ndarray:
    count = int(np.prod(shape)) if len(shape) else 1
    if len(payload) != 16 * count:
        raise ValueError(f"expected {16 * count} bytes of shares, got {len(payload)}")
    words = np.frombuffer(payload, dtype="<u8").reshape(count, 2)
    lo = words[:, 0].view(np.int64)
    hi = words[:, 1].view(np.int64)
    if np.all(hi == (lo >> 63)):
        return lo.astype(np.int64).reshape(shape)
    vals = [int.from_bytes(payload[16 * i:16 * (i + 1)], "little", signed=True)
            for i in range(count)]
    return np.array(vals, dtype=object).reshape(shape)


def encode_ring(values: np.ndarray) -> bytes:
    """64-bit unsigned little-endian per ring element."""
    return np.ascontiguousarray(values, dtype="<u8").tobytes()


def decode_ring(payload: bytes, count: int | None = None) -> np.ndarray:
    if len(payload) % 8:
        raise ValueError("ring payload is not a multiple of 8 bytes")
    out = np.frombuffer(payload, dtype="<u8").astype(np.uint64)
    if count is not None and out.size != count:
        raise ValueError(f"expected {count} ring elements, got {out.size}")
    return out


_SHAPE_HEADER = struct.Struct("<II")


def pack_share_matrix(values: np.ndarray) -> bytes:
    """Two-dimensional share block with a (rows, cols) header."""
    rows, cols = values.shape
    return _SHAPE_HEADER.pack(rows, cols) + encode_int_shares(values)


def unpack_share_matrix(payload: bytes) -> np.ndarray:
    rows, cols = _SHAPE_HEADER.unpack_from(payload)
    return decode_int_shares(payload[_SHAPE_HEADER.size:], (rows, cols))
