"""Reliable in-order channels between servers, in memory or over TCP.

Both transports move exactly the frames defined in :mod:`dpselect.wire` and
account bytes from the encoded frames, so the simulator's numbers are what
the TCP transport would put on the wire.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .wire import Phase


class ProtocolAbort(RuntimeError):
    """A party stopped because a channel failed or a peer misbehaved."""


@dataclass
class PartyStats:
    offline_bytes: int = 0
    online_bytes: int = 0
    offline_rounds: int = 0
    online_rounds: int = 0
    messages: int = 0
    openings: int = 0
    openings_by_kind: dict = field(default_factory=dict)

    def add_opening(self, kind: str, count: int):
        self.openings += count
        self.openings_by_kind[kind] = self.openings_by_kind.get(kind, 0) + count


@dataclass
class TranscriptStats:
    per_server: list[PartyStats]

    def _sum(self, name):
        return sum(getattr(s, name) for s in self.per_server)

    @property
    def offline_bytes(self) -> int:
        return self._sum("offline_bytes")

    @property
    def online_bytes(self) -> int:
        return self._sum("online_bytes")

    @property
    def messages(self) -> int:
        return self._sum("messages")

    @property
    def openings(self) -> int:
        return self._sum("openings")

    # Rounds are a critical-path length, so the aggregate is the maximum.
    @property
    def offline_rounds(self) -> int:
        return max(s.offline_rounds for s in self.per_server)

    @property
    def online_rounds(self) -> int:
        return max(s.online_rounds for s in self.per_server)

    def as_dict(self) -> dict:
        return {
            "offline_bytes": self.offline_bytes,
            "online_bytes": self.online_bytes,
            "offline_rounds": self.offline_rounds,
            "online_rounds": self.online_rounds,
            "messages": self.messages,
            "openings": self.openings,
        }


@dataclass
class FrameRecord:
    src: int
    dst: int
    frame: bytes

    @property
    def opcode(self) -> int:
        return wire.decode_frame(self.frame)[0]

    @property
    def payload(self) -> bytes:
        return wire.decode_frame(self.frame)[2]


class Endpoint:
    """One party's view of the network."""

    def __init__(self, party_id: int, timeout: float = 30.0):
        self.party_id = party_id
        self.timeout = timeout
        self.stats = PartyStats()

    def _transmit(self, dst: int, frame: bytes):
        raise NotImplementedError

    def _receive(self, src: int) -> bytes:
        raise NotImplementedError

    def send(self, dst: int, opcode: int, payload: bytes):
        frame = wire.encode_frame(opcode, self.party_id, payload)
        self._transmit(dst, frame)
        if opcode == Phase.PREPROC:
            self.stats.offline_bytes += len(frame)
        else:
            self.stats.online_bytes += len(frame)
        self.stats.messages += 1

    def recv(self, src: int, opcode: int) -> bytes:
        frame = self._receive(src)
        try:
            got, sender, payload = wire.decode_frame(frame)
        except wire.FrameError as exc:
            raise ProtocolAbort(f"party {self.party_id}: malformed frame from {src}: {exc}")
        if sender != src or got != opcode:
            raise ProtocolAbort(
                f"party {self.party_id}: expected opcode {Phase(opcode).name} from {src}, "
                f"got opcode {got} from {sender}")
        return payload

    def count_round(self, opcode: int):
        if opcode == Phase.PREPROC:
            self.stats.offline_rounds += 1
        else:
            self.stats.online_rounds += 1

    def exchange(self, peers, opcode: int, payloads) -> dict[int, bytes]:
        """One communication round: send to every peer, then receive from every peer.

        ``payloads`` is a bytes object sent to all peers or a dict per peer.
        """
        for p in peers:
            self.send(p, opcode, payloads if isinstance(payloads, bytes) else payloads[p])
        received = {p: self.recv(p, opcode) for p in peers}
        self.count_round(opcode)
        return received

    def close(self):
        pass


_ABORT = object()


class SimNetwork:
    """Deterministic in-memory network of k parties.

    ``jitter`` (a seed) adds random delays to deliveries so tests can check
    that results do not depend on the interleaving of parties. ``fail_after``
    breaks chosen channels after a number of frames to test aborts.
    """

    def __init__(self, k: int, *, record: bool = False, jitter: int | None = None,
                 timeout: float = 30.0, fail_after: dict | None = None):
        self.k = k
        # (src, dst) -> number of frames delivered before the channel breaks
        self.fail_after = dict(fail_after or {})
        self._sent: dict[tuple[int, int], int] = {}
        self.record = record
        self.frames: list[FrameRecord] = []
        self._queues = {(i, j): queue.Queue() for i in range(k) for j in range(k) if i != j}
        self._dead: set[tuple[int, int]] = set()
        self._lock = threading.Lock()
        seeds = np.random.SeedSequence(jitter).spawn(k) if jitter is not None else [None] * k
        self.endpoints = [_SimEndpoint(self, i, seeds[i], timeout) for i in range(k)]

    def endpoint(self, i: int) -> Endpoint:
        return self.endpoints[i]

    def kill(self, a: int, b: int):
        """Break the channel between parties a and b in both directions."""
        with self._lock:
            self._dead.update({(a, b), (b, a)})
        self._queues[(a, b)].put(_ABORT)
        self._queues[(b, a)].put(_ABORT)

    def abort_all(self):
        for q in self._queues.values():
            q.put(_ABORT)

    def _deliver(self, src, dst, frame):
        with self._lock:
            sent = self._sent.get((src, dst), 0)
            limit = self.fail_after.get((src, dst))
            if limit is not None and sent >= limit:
                self._dead.update({(src, dst), (dst, src)})
            dead = (src, dst) in self._dead
            self._sent[(src, dst)] = sent + 1
        if dead:
            self._queues[(dst, src)].put(_ABORT)
            raise ProtocolAbort(f"channel {src}->{dst} is down")
        if self.record:
            self.frames.append(FrameRecord(src, dst, frame))
        self._queues[(src, dst)].put(frame)


class _SimEndpoint(Endpoint):
    def __init__(self, net: SimNetwork, party_id: int, jitter_seed, timeout: float):
        super().__init__(party_id, timeout)
        self.net = net
        self._jitter = np.random.default_rng(jitter_seed) if jitter_seed is not None else None

    def _transmit(self, dst, frame):
        if self._jitter is not None:
            time.sleep(float(self._jitter.exponential(2e-4)))
        self.net._deliver(self.party_id, dst, frame)

    def _receive(self, src):
        try:
            item = self.net._queues[(src, self.party_id)].get(timeout=self.timeout)
        except queue.Empty:
            raise ProtocolAbort(f"party {self.party_id}: timed out waiting for {src}") from None
        if item is _ABORT:
            raise ProtocolAbort(f"party {self.party_id}: channel from {src} aborted")
        return item


class TcpEndpoint(Endpoint):
    """Full mesh of TCP connections with length-prefixed frames.

    Party i accepts connections from every j > i and dials every j < i;
    the dialer announces itself with its id as a u32le.
    """

    def __init__(self, party_id: int, addresses: list[tuple[str, int]],
                 timeout: float = 60.0, listener: socket.socket | None = None):
        super().__init__(party_id, timeout)
        self.addresses = addresses
        self.socks: dict[int, socket.socket] = {}
        k = len(addresses)
        if listener is None:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind(addresses[party_id])
            listener.listen(k)
        self._listener = listener
        self._connect(k)

    def _connect(self, k):
        deadline = time.monotonic() + self.timeout
        for j in range(self.party_id):
            while True:
                try:
                    s = socket.create_connection(self.addresses[j], timeout=self.timeout)
                    break
                except OSError:
                    if time.monotonic() > deadline:
                        raise ProtocolAbort(f"party {self.party_id}: cannot reach party {j}")
                    time.sleep(0.05)
            s.sendall(wire.LENGTH.pack(self.party_id))
            self._register(j, s)
        self._listener.settimeout(self.timeout)
        for _ in range(self.party_id + 1, k):
            try:
                s, _ = self._listener.accept()
            except OSError as exc:
                raise ProtocolAbort(f"party {self.party_id}: accept failed: {exc}") from None
            s.settimeout(self.timeout)
            (peer,) = wire.LENGTH.unpack(_recv_exact(s, wire.LENGTH.size))
            self._register(peer, s)
        self._listener.close()

    def _register(self, peer, s):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(self.timeout)
        self.socks[peer] = s

    def _transmit(self, dst, frame):
        try:
            self.socks[dst].sendall(frame)
        except OSError as exc:
            raise ProtocolAbort(f"party {self.party_id}: send to {dst} failed: {exc}") from None

    def _receive(self, src):
        s = self.socks[src]
        try:
            head = _recv_exact(s, wire.LENGTH.size)
            (body_len,) = wire.LENGTH.unpack(head)
            if body_len >= wire.MAX_FRAME:
                raise ProtocolAbort(f"party {self.party_id}: oversized frame from {src}")
            return head + _recv_exact(s, body_len)
        except (OSError, ConnectionError) as exc:
            raise ProtocolAbort(f"party {self.party_id}: receive from {src} failed: {exc}") from None

    def close(self):
        for s in self.socks.values():
            try:
                s.close()
            except OSError:
                pass


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def free_ports(count: int, host: str = "127.0.0.1") -> list[socket.socket]:
    """Bound listening sockets on ephemeral ports (caller owns them)."""
    socks = []
    for _ in range(count):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind((host, 0))
        s.listen(count)
        socks.append(s)
    return socks
