"""Multi-server orchestration: clients share inputs, servers add distributed
noise, truncate, convert to the ring and run the secure argmax.

Every party draws from its own seedable stream (:class:`PartyStreams`); the
oracle in :mod:`dpselect.ideal` replays the same streams in the same order, so
a protocol run and the oracle can be compared output for output.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .argmax import MpcContext, OpenedValues, secure_argmax
from .config import ProtocolConfig
from .dp import sample_negative_binomial
from .iss import (IntShareVec, IssConfig, add_int_arrays, convert_to_ring, pack_share_matrix,
                  share_int, trunc_shares, unpack_share_matrix)
from .preprocessing import (CorrPool, dealer_preprocess, ring_mask,
                            simulated_honest_majority_preprocess)
from .transport import (Endpoint, FrameRecord, ProtocolAbort, SimNetwork, TcpEndpoint,
                        TranscriptStats, free_ports)
from .wire import Phase

# spawn-key tags of the per-party streams
_CLIENT, _NOISE, _SHARING, _PREPROC, _COMMON = range(5)


class PartyStreams:
    """Independent generators per party and purpose, derived from one seed.

    Each call returns a fresh generator positioned at the start of its
    stream, so the protocol and the oracle see identical draws.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def _gen(self, *key) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def client(self, j: int) -> np.random.Generator:
        return self._gen(_CLIENT, j)

    def noise(self, server: int) -> np.random.Generator:
        return self._gen(_NOISE, server)

    def sharing(self, server: int) -> np.random.Generator:
        return self._gen(_SHARING, server)

    def preproc(self, server: int) -> np.random.Generator:
        return self._gen(_PREPROC, server)

    def preproc_common(self) -> np.random.Generator:
        return self._gen(_COMMON)


@dataclass(frozen=True)
class ServerRole:
    kind: str  # "computing" or "supporting"
    server_id: int

    @classmethod
    def of(cls, server_id: int, cfg: ProtocolConfig) -> "ServerRole":
        if not 0 <= server_id < cfg.k:
            raise ValueError(f"server id {server_id} outside [0, {cfg.k})")
        return cls("computing" if server_id < cfg.h else "supporting", server_id)

    @property
    def computing(self) -> bool:
        return self.kind == "computing"


def roles(cfg: ProtocolConfig) -> list[ServerRole]:
    return [ServerRole.of(i, cfg) for i in range(cfg.k)]


def check_binary(inputs) -> np.ndarray:
    x = np.asarray(inputs)
    if x.ndim != 2:
        raise ValueError(f"inputs must be an (n, d) matrix, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("no client inputs")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("client inputs must be binary")
    return x.astype(np.int64)


def client_share_input(vec, cfg: ProtocolConfig, rng: np.random.Generator,
                       batch: int = 1) -> list[IntShareVec]:
    """Integer shares of one client's binary vector, one per computing server.

    With ``batch > 1`` the vector is shared independently for each of the
    batched sessions (shape (batch, d)).
    """
    vec = np.asarray(vec)
    if vec.ndim != 1 or not np.isin(vec, (0, 1)).all():
        raise ValueError("client vector must be a binary 1-d vector")
    secret = np.broadcast_to(vec.astype(np.int64), (batch, vec.size)) if batch > 1 else vec
    return share_int(np.ascontiguousarray(secret),
                     IssConfig(cfg.h, cfg.kappa, cfg.client_ell()), rng)


def sample_server_noise(cfg: ProtocolConfig, rng: np.random.Generator, shape
                        ) -> tuple[np.ndarray, int]:
    """One server's NB(1/h, p) noise, with draws at or above the cap resampled.

    Returns the noise and the number of resampled entries.
    """
    r_param = 1.0 / cfg.h
    noise = sample_negative_binomial(r_param, cfg.p, rng, size=shape)
    resampled = 0
    while True:
        over = noise >= cfg.noise_cap
        count = int(over.sum())
        if not count:
            return noise, resampled
        resampled += count
        noise[over] = sample_negative_binomial(r_param, cfg.p, rng, size=count)


def noise_share_config(cfg: ProtocolConfig) -> IssConfig:
    return IssConfig(cfg.h, cfg.kappa, cfg.noise_cap_bits)


def comparisons_needed(cfg: ProtocolConfig, batch: int) -> int:
    return batch * (cfg.d - 1)


def _pool_bases(rng: np.random.Generator) -> tuple[int, int]:
    # random id bases make item ids unique across runs with overwhelming probability
    eb, tb = rng.integers(0, 1 << 62, size=2)
    return int(eb), int(tb)


@dataclass
class ServerOutput:
    server_id: int
    role: ServerRole
    index: object = None
    noise: np.ndarray | None = None
    noise_resamples: int = 0
    aggregate_share: np.ndarray | None = None
    ring_share: np.ndarray | None = None
    pool: CorrPool | None = None
    audit: list[OpenedValues] = field(default_factory=list)
    stats: object = None


def server_main(server_id: int, endpoint: Endpoint, cfg: ProtocolConfig,
                client_shares: list[np.ndarray], streams: PartyStreams, batch: int = 1,
                fixed_noise: np.ndarray | None = None) -> ServerOutput:
    """Run one server to completion and return everything it holds.

    ``client_shares`` are this server's integer shares from every client
    (empty for supporting servers).
    """
    role = ServerRole.of(server_id, cfg)
    out = ServerOutput(server_id, role, stats=endpoint.stats)
    shape = (batch, cfg.d) if batch > 1 else (cfg.d,)
    computing = list(range(cfg.h))
    supporting = list(range(cfg.h, cfg.k))
    comparisons = comparisons_needed(cfg, batch)

    # preprocessing
    pool = None
    if cfg.preprocessing == "dealer":
        dealer = supporting[0]
        if server_id == dealer:
            rng = streams.preproc(server_id)
            pools = dealer_preprocess(cfg, comparisons, rng, *_pool_bases(rng))
            for i in computing:
                endpoint.send(i, Phase.PREPROC, pools[i].to_bytes())
            endpoint.count_round(Phase.PREPROC)
        else:
            pool = CorrPool.from_bytes(server_id, endpoint.recv(dealer, Phase.PREPROC))
            endpoint.count_round(Phase.PREPROC)
    else:
        rng = streams.preproc_common()
        pools, charge = simulated_honest_majority_preprocess(cfg, comparisons, rng,
                                                             *_pool_bases(rng))
        endpoint.stats.offline_bytes += charge.bytes_per_server
        endpoint.stats.offline_rounds += charge.rounds
        if role.computing:
            pool = pools[server_id]
    out.pool = pool

    # every server samples its noise
    if fixed_noise is not None:
        noise = np.broadcast_to(np.asarray(fixed_noise, dtype=np.int64), shape).copy()
        if noise.min() < 0 or noise.max() >= cfg.noise_cap:
            raise ValueError("fixed noise outside [0, noise cap)")
    else:
        noise, out.noise_resamples = sample_server_noise(cfg, streams.noise(server_id), shape)
    out.noise = noise

    if not role.computing:
        sharing = share_int(noise, noise_share_config(cfg), streams.sharing(server_id))
        for i in computing:
            endpoint.send(i, Phase.NOISE_SHARE, pack_share_matrix(sharing[i].shares.reshape(-1, cfg.d)))
        endpoint.count_round(Phase.NOISE_SHARE)
        return out

    agg = np.zeros(shape, dtype=np.int64)
    for s in client_shares:
        agg = add_int_arrays(agg, np.asarray(s).reshape(shape))
    for j in supporting:
        agg = add_int_arrays(agg, unpack_share_matrix(endpoint.recv(j, Phase.NOISE_SHARE)).reshape(shape))
    if supporting:
        endpoint.count_round(Phase.NOISE_SHARE)
    agg = add_int_arrays(agg, noise)
    out.aggregate_share = agg

    y = trunc_shares(IntShareVec(server_id, agg), cfg.c)
    ring = convert_to_ring(y, cfg.a).shares
    if server_id == computing[0]:
        ring = (ring + np.uint64(cfg.offset)) & ring_mask(cfg.a)
    out.ring_share = ring

    ctx = MpcContext(endpoint, server_id, computing, cfg.a, pool)
    out.index = secure_argmax(ctx, ring)
    out.audit = ctx.audit
    return out


@dataclass
class ProtocolResult:
    index: object
    stats: TranscriptStats
    servers: list[ServerOutput]
    frames: list[FrameRecord] | None
    cfg: ProtocolConfig
    wall_seconds: float = 0.0

    @property
    def noise_resamples(self) -> int:
        return sum(s.noise_resamples for s in self.servers)


def share_all_clients(inputs: np.ndarray, cfg: ProtocolConfig, streams: PartyStreams,
                      batch: int = 1) -> list[list[np.ndarray]]:
    """Per computing server, the list of share arrays received from every client."""
    per_server = [[] for _ in range(cfg.h)]
    for j, vec in enumerate(inputs):
        for sh in client_share_input(vec, cfg, streams.client(j), batch):
            per_server[sh.server_id].append(sh.shares)
    return per_server


def run_protocol(inputs, cfg: ProtocolConfig, *, seed: int | None = None,
                 transport: str = "sim", batch: int = 1, record: bool = False,
                 jitter: int | None = None, fixed_noise: dict | None = None,
                 net: SimNetwork | None = None, timeout: float = 60.0) -> ProtocolResult:
    """Run the whole protocol in-process, one thread per server.

    ``fixed_noise`` maps server ids to noise vectors used instead of sampling,
    which conditions a run on the leakage of those servers. Any failure of
    any party aborts every party and raises :class:`ProtocolAbort`; no index
    is returned in that case.
    """
    x = check_binary(inputs)
    if x.shape != (cfg.n, cfg.d):
        raise ValueError(f"inputs have shape {x.shape}, config expects ({cfg.n}, {cfg.d})")
    if batch < 1:
        raise ValueError("batch must be at least 1")
    streams = PartyStreams(cfg.seed if seed is None else seed)
    fixed_noise = fixed_noise or {}
    client_shares = share_all_clients(x, cfg, streams, batch)

    listeners = None
    if transport == "sim":
        net = net or SimNetwork(cfg.k, record=record, jitter=jitter, timeout=timeout)
    elif transport == "tcp":
        listeners = free_ports(cfg.k)
        addresses = [s.getsockname() for s in listeners]
    else:
        raise ValueError(f"unknown transport {transport!r}")

    outputs: dict[int, ServerOutput] = {}
    errors: dict[int, BaseException] = {}
    endpoints: dict[int, Endpoint] = {}

    def abort():
        if net is not None:
            net.abort_all()
        for ep in list(endpoints.values()):
            ep.close()

    def party(i):
        try:
            if net is not None:
                ep = net.endpoint(i)
            else:
                ep = TcpEndpoint(i, addresses, timeout=timeout, listener=listeners[i])
            endpoints[i] = ep
            shares = client_shares[i] if i < cfg.h else []
            outputs[i] = server_main(i, ep, cfg, shares, streams, batch, fixed_noise.get(i))
        except BaseException as exc:  # noqa: BLE001 - every failure aborts the run
            errors[i] = exc
            abort()

    start = time.perf_counter()
    threads = [threading.Thread(target=party, args=(i,), daemon=True) for i in range(cfg.k)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    wall = time.perf_counter() - start
    if net is None:
        for ep in endpoints.values():
            ep.close()
    if errors:
        detail = "; ".join(f"server {i}: {type(e).__name__}: {e}" for i, e in sorted(errors.items()))
        raise ProtocolAbort(f"protocol aborted ({detail})")

    servers = [outputs[i] for i in range(cfg.k)]
    indices = [servers[i].index for i in range(cfg.h)]
    for other in indices[1:]:
        if not np.array_equal(np.asarray(other), np.asarray(indices[0])):
            raise ProtocolAbort("computing servers disagree on the opened index")
    stats = TranscriptStats([s.stats for s in servers])
    frames = list(net.frames) if (net is not None and net.record) else None
    return ProtocolResult(indices[0], stats, servers, frames, cfg, wall)
