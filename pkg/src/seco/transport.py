"""Framed, metered point-to-point channels between the four parties.

Frame layout (little-endian): u32 payload length, u8 sender, u8 receiver,
u8 phase, u16 layer, u16 kind, then the payload.  Every byte of every
frame is counted, header included.
"""
from __future__ import annotations

import json
import queue
import socket
import struct
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field

HEADER = struct.Struct("<IBBBHH")
HEADER_BYTES = HEADER.size
PARTY_NAMES = ("user", "A", "B", "C")
PHASE_NAMES = ("setup", "preprocess", "online")
_CLOSED = object()


class TransportError(RuntimeError):
    pass


class ChannelClosed(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


@dataclass(frozen=True)
class Frame:
    sender: int
    receiver: int
    phase: int
    layer: int
    kind: int
    payload: bytes = b""

    @property
    def size(self) -> int:
        return HEADER_BYTES + len(self.payload)

    def encode(self) -> bytes:
        return HEADER.pack(len(self.payload), self.sender, self.receiver, self.phase, self.layer,
                           self.kind) + self.payload

    @classmethod
    def decode_header(cls, head: bytes):
        return HEADER.unpack(head)


@dataclass
class PhaseMetrics:
    bytes_in: int = 0
    bytes_out: int = 0
    msgs: int = 0
    rounds: int = 0
    wall_ms: float = 0.0

    def as_dict(self) -> dict:
        return {"bytes_in": self.bytes_in, "bytes_out": self.bytes_out, "msgs": self.msgs,
                "rounds": self.rounds, "wall_ms": round(self.wall_ms, 3)}


class Meter:
    """Per-party traffic counters, split by protocol phase and by peer."""

    def __init__(self):
        self.phases: dict[str, PhaseMetrics] = {p: PhaseMetrics() for p in PHASE_NAMES}
        self.pairs: dict = defaultdict(lambda: {"bytes_out": 0, "bytes_in": 0, "msgs_out": 0, "msgs_in": 0})
        self._last_dir: dict = {}
        self.transcript: list[tuple[str, Frame]] = []
        self._lock = threading.Lock()

    def _count(self, frame: Frame, direction: str, peer: int):
        phase = PHASE_NAMES[frame.phase]
        m = self.phases[phase]
        with self._lock:
            if direction == "out":
                m.bytes_out += frame.size
            else:
                m.bytes_in += frame.size
            m.msgs += 1
            key = (phase, peer)
            if self._last_dir.get(key) != direction:
                m.rounds += 1
                self._last_dir[key] = direction
            pair = self.pairs[(phase, PARTY_NAMES[peer])]
            pair[f"bytes_{direction}"] += frame.size
            pair[f"msgs_{direction}"] += 1
            self.transcript.append((direction, frame))

    def add_time(self, phase: str, ms: float):
        with self._lock:
            self.phases[phase].wall_ms += ms

    def snapshot(self) -> dict:
        with self._lock:
            return {p: m.as_dict() for p, m in self.phases.items()}

    def reset(self):
        with self._lock:
            self.phases = {p: PhaseMetrics() for p in PHASE_NAMES}
            self.pairs.clear()
            self._last_dir.clear()
            self.transcript.clear()


class Endpoint:
    """One party's view of the network: send to / receive from each peer."""

    def __init__(self, party: int, timeout: float = 300.0):
        self.party = party
        self.timeout = timeout
        self.meter = Meter()
        self._inbox: dict[int, queue.Queue] = {p: queue.Queue() for p in range(len(PARTY_NAMES)) if p != party}
        self._closed = False

    # subclasses provide _deliver(frame)
    def _deliver(self, frame: Frame):
        raise NotImplementedError

    def _push(self, frame):
        """Called by the transport when a frame (or close marker) arrives from a peer."""
        sender = frame.sender if isinstance(frame, Frame) else frame[1]
        self._inbox[sender].put(frame)

    def send(self, receiver: int, phase: int, layer: int, kind: int, payload: bytes = b""):
        if self._closed:
            raise ChannelClosed(f"{PARTY_NAMES[self.party]} endpoint is closed")
        if receiver == self.party or receiver not in self._inbox:
            raise TransportError(f"no channel to party {receiver}")
        frame = Frame(self.party, receiver, phase, layer, kind, bytes(payload))
        self.meter._count(frame, "out", receiver)
        self._deliver(frame)

    def recv(self, sender: int, timeout: float | None = None) -> Frame:
        try:
            item = self._inbox[sender].get(timeout=self.timeout if timeout is None else timeout)
        except queue.Empty:
            raise TransportTimeout(
                f"{PARTY_NAMES[self.party]} timed out waiting for {PARTY_NAMES[sender]}") from None
        if not isinstance(item, Frame):
            self._inbox[sender].put(item)
            raise ChannelClosed(f"channel from {PARTY_NAMES[sender]} is closed")
        self.meter._count(item, "in", sender)
        return item

    @contextmanager
    def timed(self, phase: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.meter.add_time(phase, (time.perf_counter() - start) * 1000.0)

    def close(self):
        self._closed = True


class LocalNetwork:
    """In-process transport: one unbounded queue per directed pair."""

    class _LocalEndpoint(Endpoint):
        def __init__(self, net: "LocalNetwork", party: int, timeout: float):
            super().__init__(party, timeout)
            self._net = net

        def _deliver(self, frame: Frame):
            peer = self._net.endpoints[frame.receiver]
            # frames are immutable bytes, so handing over the object is a faithful copy
            peer._push(frame)

        def close(self):
            if not self._closed:
                super().close()
                for p, ep in self._net.endpoints.items():
                    if p != self.party:
                        ep._push((_CLOSED, self.party))

    def __init__(self, timeout: float = 300.0, parties=range(len(PARTY_NAMES))):
        self.endpoints = {p: self._LocalEndpoint(self, p, timeout) for p in parties}

    def endpoint(self, party: int) -> Endpoint:
        return self.endpoints[party]


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ChannelClosed("socket closed")
        buf.extend(chunk)
    return bytes(buf)


class TcpEndpoint(Endpoint):
    """TCP transport: a socket per peer, a reader thread per socket feeding the inbox."""

    def __init__(self, party: int, addresses: dict[int, tuple[str, int]], timeout: float = 300.0,
                 connect_timeout: float = 60.0):
        super().__init__(party, timeout)
        self.addresses = addresses
        self._socks: dict[int, socket.socket] = {}
        self._send_locks: dict[int, threading.Lock] = {}
        self._threads: list[threading.Thread] = []
        self._connect(connect_timeout)

    def _connect(self, connect_timeout: float):
        host, port = self.addresses[self.party]
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(len(self.addresses))
        server.settimeout(connect_timeout)
        peers = sorted(p for p in self.addresses if p != self.party)
        # lower-numbered party accepts, higher-numbered party dials
        deadline = time.monotonic() + connect_timeout
        for peer in peers:
            if peer < self.party:
                while True:
                    try:
                        s = socket.create_connection(self.addresses[peer], timeout=connect_timeout)
                        break
                    except OSError:
                        if time.monotonic() > deadline:
                            raise TransportError(f"cannot reach party {PARTY_NAMES[peer]}") from None
                        time.sleep(0.05)
                s.sendall(struct.pack("<B", self.party))
                self._register(peer, s)
        expected = {p for p in peers if p > self.party}
        while expected:
            try:
                s, _ = server.accept()
            except socket.timeout:
                raise TransportError("peers did not connect in time") from None
            s.settimeout(None)
            (peer,) = struct.unpack("<B", _read_exact(s, 1))
            if peer not in expected:
                s.close()
                raise TransportError(f"unexpected connection from party {peer}")
            expected.discard(peer)
            self._register(peer, s)
        server.close()

    def _register(self, peer: int, s: socket.socket):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(None)
        self._socks[peer] = s
        self._send_locks[peer] = threading.Lock()
        t = threading.Thread(target=self._reader, args=(peer, s), daemon=True)
        t.start()
        self._threads.append(t)

    def _reader(self, peer: int, s: socket.socket):
        try:
            while True:
                length, sender, receiver, phase, layer, kind = HEADER.unpack(_read_exact(s, HEADER_BYTES))
                payload = _read_exact(s, length) if length else b""
                self._push(Frame(sender, receiver, phase, layer, kind, payload))
        except (ChannelClosed, OSError, struct.error):
            self._push((_CLOSED, peer))

    def _deliver(self, frame: Frame):
        s = self._socks[frame.receiver]
        with self._send_locks[frame.receiver]:
            s.sendall(frame.encode())

    def close(self):
        if self._closed:
            return
        super().close()
        for s in self._socks.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()


def parse_addresses(spec) -> dict[int, tuple[str, int]]:
    """Accept a dict {party name: "host:port"} or a JSON/plain string of that mapping."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    out = {}
    for name, addr in spec.items():
        idx = PARTY_NAMES.index(name) if name in PARTY_NAMES else int(name)
        host, port = addr.rsplit(":", 1)
        out[idx] = (host, int(port))
    return out


@dataclass
class MetricsReport:
    run_id: str
    mode: str
    l: int
    parties: dict = field(default_factory=dict)  # party name -> phase -> counters

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "mode": self.mode, "l": self.l, "parties": self.parties}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(d["run_id"], d["mode"], d["l"], d["parties"])

    def total(self, party: str, phase: str, key: str = "bytes_out") -> float:
        return self.parties[party][phase][key]

    def user_bytes(self, phase: str = "online") -> int:
        p = self.parties["user"][phase]
        return p["bytes_in"] + p["bytes_out"]

    def total_bytes(self, phase: str = "online") -> int:
        # every frame is sent by exactly one party, so summing bytes_out counts each once
        return sum(p[phase]["bytes_out"] for p in self.parties.values())


def snapshot_metrics(run_id: str, mode: str, l: int, endpoints) -> MetricsReport:
    return MetricsReport(run_id, mode, l,
                         {PARTY_NAMES[ep.party]: ep.meter.snapshot() for ep in endpoints})
