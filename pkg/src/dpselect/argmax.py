"""Secure comparison, selection and tournament argmax over Z_{2^a}.

Every function here is run by each of the h computing servers on its own
shares; the servers interact only through :class:`MpcContext`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import wire
from .iss import decode_ring, encode_ring
from .preprocessing import CorrPool, index_limbs, lt_circuit, ring_mask
from .wire import MpcOp, Phase


@dataclass
class OpenedValues:
    kind: str
    values: np.ndarray


@dataclass
class MpcContext:
    """Per-server state for arithmetic on additive shares mod 2**a.

    ``audit`` collects every value this server saw opened, tagged by kind.
    """

    endpoint: object
    party: int
    parties: list[int]
    a: int
    pool: CorrPool
    audit: list[OpenedValues] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        self.mask = ring_mask(self.a)
        self.peers = [p for p in self.parties if p != self.party]
        self.is_leader = self.party == self.parties[0]

    def public(self, value) -> np.ndarray:
        """Share of a public constant: the leader holds it, the rest hold 0."""
        value = np.asarray(value, dtype=np.uint64)
        return value & self.mask if self.is_leader else np.zeros_like(value)

    def open(self, shares: np.ndarray, kind: MpcOp) -> np.ndarray:
        shares = np.asarray(shares, dtype=np.uint64) & self.mask
        opcode = Phase.OPEN if kind == MpcOp.OPEN_FINAL else Phase.ARGMAX
        payload = wire.encode_mpc(kind, self.step, encode_ring(shares.reshape(-1)))
        received = self.endpoint.exchange(self.peers, opcode, payload)
        total = shares.reshape(-1).copy()
        for p in self.peers:
            subop, step, body = wire.decode_mpc(received[p])
            if subop != kind or step != self.step:
                raise wire.FrameError(
                    f"party {self.party}: opening out of sync with {p} "
                    f"(op {subop} step {step}, expected {int(kind)} step {self.step})")
            total = total + decode_ring(body, shares.size)
        self.step += 1
        total = (total & self.mask).reshape(shares.shape)
        self.endpoint.stats.add_opening(kind.name, int(shares.size))
        self.audit.append(OpenedValues(kind.name, total))
        return total

    def mul(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Beaver multiplication of equally shaped share arrays in one round."""
        shape = np.shape(x)
        x = np.asarray(x, dtype=np.uint64).reshape(-1)
        y = np.asarray(y, dtype=np.uint64).reshape(-1)
        u, v, w = self.pool.take_triples(x.size)
        opened = self.open(np.concatenate([x - u, y - v]), MpcOp.TRIPLE_OPEN)
        eps, delta = opened[:x.size], opened[x.size:]
        z = w + eps * v + delta * u
        if self.is_leader:
            z = z + eps * delta
        return (z & self.mask).reshape(shape)


def secure_lt(ctx: MpcContext, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Shares of [u < v] for shared u, v in [0, 2**(a-1)).

    The servers open m = u - v + 2**(a-1) + r for an edaBit r, then compute
    the top bit of m - r from the public bits of m and the shared bits of r
    with a (G, P) prefix circuit of depth ceil(log2 a). That bit is 1 exactly
    when u >= v.
    """
    a, mask = ctx.a, ctx.mask
    shape = np.shape(u)
    u = np.asarray(u, dtype=np.uint64).reshape(-1)
    v = np.asarray(v, dtype=np.uint64).reshape(-1)
    r, rbits = ctx.pool.take_edabits(u.size)
    z = u - v + ctx.public(np.full(u.size, 1 << (a - 1), dtype=np.uint64))
    m = ctx.open(z + r, MpcOp.OPEN_MASKED)

    one = ctx.public(np.ones(u.size, dtype=np.uint64))
    two = np.uint64(2)
    mb = [(m >> np.uint64(i)) & np.uint64(1) for i in range(a)]
    # leaves indexed from the top: position 0 is bit a-1, position j is bit a-1-j
    G, P = {}, {}
    top = a - 1
    t = ctx.public(mb[top]) + rbits[:, top] * (np.uint64(1) - two * mb[top])
    G[(0, 1)] = t & mask
    P[(0, 1)] = (one - two * t) & mask
    for j in range(1, a):
        i = a - 1 - j
        ri = rbits[:, i]
        G[(j, j + 1)] = ((np.uint64(1) - mb[i]) * ri) & mask
        P[(j, j + 1)] = (ctx.public(np.uint64(1) - mb[i]) + ri * (two * mb[i] - np.uint64(1))) & mask

    root = lt_circuit(a)
    levels: dict[int, list] = {}

    def collect(node):
        if node.leaf:
            return
        collect(node.left)
        collect(node.right)
        levels.setdefault(node.height, []).append(node)

    collect(root)
    for height in sorted(levels):
        xs, ys, slots = [], [], []
        for node in levels[height]:
            hi, lo = (node.left.lo, node.left.hi), (node.right.lo, node.right.hi)
            xs.append(P[hi]); ys.append(G[lo]); slots.append(("G", node, hi))
            if node.need_p:
                xs.append(P[hi]); ys.append(P[lo]); slots.append(("P", node, None))
        prods = ctx.mul(np.stack(xs), np.stack(ys))
        for (kind, node, hi), prod in zip(slots, prods):
            key = (node.lo, node.hi)
            if kind == "G":
                G[key] = (G[hi] + prod) & mask
            else:
                P[key] = prod
    msb = G[(root.lo, root.hi)]
    return ((one - msb) & mask).reshape(shape)


def secure_mux(ctx: MpcContext, b: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Shares of b*v + (1-b)*u; one multiplication per element."""
    u = np.asarray(u, dtype=np.uint64)
    v = np.asarray(v, dtype=np.uint64)
    return (u + ctx.mul(np.broadcast_to(b, u.shape), v - u)) & ctx.mask


def index_tags(ctx: MpcContext, shape, d: int) -> np.ndarray:
    """Shares of the public indices 0..d-1 split into a-bit limbs, shape (L, *shape)."""
    limbs = index_limbs(d, ctx.a)
    idx = np.broadcast_to(np.arange(d, dtype=np.uint64), shape)
    return np.stack([ctx.public((idx >> np.uint64(ctx.a * j)) & ctx.mask)
                     for j in range(limbs)])


def secure_argmax(ctx: MpcContext, values: np.ndarray):
    """Open the lowest index of the maximum along the last axis.

    A balanced tournament: neighbours are compared with :func:`secure_lt`,
    the larger value and its index tag move up through :func:`secure_mux`,
    and comparison bits are never opened. All comparisons of one level share
    their rounds. Returns an int for 1-d input, else an array of indices.
    """
    values = np.asarray(values, dtype=np.uint64)
    d = values.shape[-1]
    tags = index_tags(ctx, values.shape, d)
    vals = values
    while vals.shape[-1] > 1:
        m = vals.shape[-1]
        pairs = m // 2
        left, right = vals[..., 0:2 * pairs:2], vals[..., 1:2 * pairs:2]
        tl, tr = tags[..., 0:2 * pairs:2], tags[..., 1:2 * pairs:2]
        b = secure_lt(ctx, left, right)
        stacked_u = np.concatenate([left[None], tl])
        stacked_v = np.concatenate([right[None], tr])
        chosen = secure_mux(ctx, np.broadcast_to(b, stacked_u.shape), stacked_u, stacked_v)
        new_vals, new_tags = chosen[0], chosen[1:]
        if m % 2:
            new_vals = np.concatenate([new_vals, vals[..., -1:]], axis=-1)
            new_tags = np.concatenate([new_tags, tags[..., -1:]], axis=-1)
        vals, tags = new_vals, new_tags
    opened = ctx.open(tags[..., 0], MpcOp.OPEN_FINAL)
    index = np.zeros(opened.shape[1:], dtype=np.int64)
    for j in range(opened.shape[0]):
        index += opened[j].astype(np.int64) << (ctx.a * j)
    return int(index) if index.ndim == 0 else index


def argmax_rounds(d: int, a: int) -> int:
    """Online rounds of :func:`secure_argmax` including the final opening."""
    from .preprocessing import lt_depth
    levels = max(0, (d - 1).bit_length())
    return levels * (1 + lt_depth(a) + 1) + 1
