"""Framed two-party transport with traffic metering and link emulation.

Frame layout: 4-byte big-endian payload length, 1-byte message type, payload.
Message types are registered in ``Msg``; see wire.md for payload layouts.
"""
from __future__ import annotations

import contextlib
import json
import queue
import socket
import struct
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">IB")


class Msg(IntEnum):
    HANDSHAKE = 0x01
    ECHO = 0x02
    REVEAL = 0x03
    BASE_OT_A = 0x10
    BASE_OT_B = 0x11
    BASE_OT_E = 0x12
    EXT_MATRIX = 0x13
    EXT_CORRECTION = 0x14
    GC_TABLES = 0x20
    GC_INPUT_LABELS_GARBLER = 0x21
    GC_OUTPUT_DECODE = 0x22
    PROTO_COT_JOB_HEADER = 0x30
    PROTO_OT_MASKED = 0x31


class NetError(Exception):
    pass


class ProtocolError(NetError):
    """Desync or malformed message during a protocol."""


class HandshakeError(NetError):
    """Parameters disagree between the two parties."""


# ---------------------------------------------------------------------------

@dataclass
class PhaseCounters:
    bytes_sent: int = 0
    bytes_received: int = 0
    payload_sent: int = 0
    payload_received: int = 0
    frames_sent: int = 0
    frames_received: int = 0
    round_trips: int = 0


class TrafficMeter:
    """Byte/frame counters per labeled phase.

    Phases nest: inside ``phase("fwd")`` then ``phase("gc")`` traffic is
    booked to "fwd", "fwd/gc" and the root "" counter.  A round trip is
    counted each time this party sends after having received.
    """

    def __init__(self):
        self.counters: dict[str, PhaseCounters] = defaultdict(PhaseCounters)
        self._stack: list[str] = []
        self._last = "send"

    @contextlib.contextmanager
    def phase(self, name: str):
        full = "/".join(self._stack + [name])
        self._stack.append(name)
        try:
            yield self.counters[full]
        finally:
            self._stack.pop()

    def _targets(self):
        out = [""]
        for i in range(1, len(self._stack) + 1):
            out.append("/".join(self._stack[:i]))
        return [self.counters[k] for k in out]

    def on_send(self, payload_len: int):
        rt = self._last == "recv"
        self._last = "send"
        for c in self._targets():
            c.bytes_sent += payload_len + HEADER.size
            c.payload_sent += payload_len
            c.frames_sent += 1
            c.round_trips += rt

    def on_recv(self, payload_len: int):
        self._last = "recv"
        for c in self._targets():
            c.bytes_received += payload_len + HEADER.size
            c.payload_received += payload_len
            c.frames_received += 1

    @property
    def total(self) -> PhaseCounters:
        return self.counters[""]

    def snapshot(self, name: str = "") -> PhaseCounters:
        c = self.counters[name]
        return PhaseCounters(**vars(c))


# ---------------------------------------------------------------------------

def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:], n - got)
        if k == 0:
            raise NetError("connection closed by peer")
        got += k
    return bytes(buf)


class Channel:
    """One persistent framed TCP connection, owned by one session at a time."""

    def __init__(self, sock: socket.socket, meter: TrafficMeter | None = None):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self.meter = meter or TrafficMeter()

    # raw frame I/O, overridden by the emulated channel
    def _write(self, data: bytes):
        self.sock.sendall(data)

    def _read(self, n: int) -> bytes:
        return _recv_exact(self.sock, n)

    def send_frame(self, msg_type: int, payload: bytes | memoryview = b""):
        payload = bytes(payload)
        self._write(HEADER.pack(len(payload), int(msg_type)) + payload)
        self.meter.on_send(len(payload))

    def recv_frame(self, expect: int | None = None) -> tuple[int, bytes]:
        n, t = HEADER.unpack(self._read(HEADER.size))
        payload = self._read(n) if n else b""
        self.meter.on_recv(n)
        if expect is not None and t != int(expect):
            raise ProtocolError(f"expected message {Msg(expect).name}, got type {t:#x}")
        return t, payload

    def recv(self, expect: int) -> bytes:
        return self.recv_frame(expect)[1]

    def send_array(self, msg_type: int, arr: np.ndarray):
        self.send_frame(msg_type, np.ascontiguousarray(arr).tobytes())

    def recv_array(self, expect: int, dtype, shape) -> np.ndarray:
        data = self.recv(expect)
        dt = np.dtype(dtype)
        n = int(np.prod(shape, dtype=np.int64))
        if len(data) != n * dt.itemsize:
            raise ProtocolError(f"payload of {len(data)} bytes, expected {n * dt.itemsize}")
        return np.frombuffer(data, dtype=dt).reshape(shape).copy()

    def close(self):
        with contextlib.suppress(OSError):
            self.sock.close()


def listen(addr: tuple[str, int], timeout: float | None = 60.0) -> Channel:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(addr)
    srv.listen(1)
    srv.settimeout(timeout)
    try:
        conn, _ = srv.accept()
    finally:
        srv.close()
    conn.settimeout(None)
    return Channel(conn)


def connect(addr: tuple[str, int], timeout: float = 60.0) -> Channel:
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(addr, timeout=5.0)
            sock.settimeout(None)
            return Channel(sock)
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def loopback_pair() -> tuple[Channel, Channel]:
    """Two connected channels over real loopback TCP."""
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)
    a = socket.create_connection(srv.getsockname())
    b, _ = srv.accept()
    srv.close()
    return Channel(a), Channel(b)


# ---------------------------------------------------------------------------

def handshake(ch: Channel, role: int, params: dict) -> dict:
    """Exchange session parameters and abort on any disagreement.

    ``params`` must hold the fields both parties have to agree on; each side
    also contributes ``seed_share`` and the returned dict carries the joint
    public ``batch_seed`` (XOR of both contributions).
    """
    mine = dict(params, version=PROTOCOL_VERSION, role=role)
    ch.send_frame(Msg.HANDSHAKE, json.dumps(mine, sort_keys=True).encode())
    theirs = json.loads(ch.recv(Msg.HANDSHAKE))
    if theirs.get("version") != PROTOCOL_VERSION:
        raise HandshakeError(f"protocol version {theirs.get('version')} != {PROTOCOL_VERSION}")
    if theirs.get("role") == role or theirs.get("role") not in (1, 2):
        raise HandshakeError(f"both parties claim role {role}")
    for k, v in mine.items():
        if k in ("role", "seed_share"):
            continue
        if theirs.get(k) != v:
            raise HandshakeError(f"parameter {k!r} differs: {v!r} vs {theirs.get(k)!r}")
    extra = set(theirs) - set(mine)
    if extra:
        raise HandshakeError(f"peer sent unknown parameters {sorted(extra)}")
    out = dict(mine)
    out["batch_seed"] = int(mine.get("seed_share", 0)) ^ int(theirs.get("seed_share", 0))
    return out


# ---------------------------------------------------------------------------

@dataclass
class ChannelConfig:
    mode: str = "real"
    latency_ms: float = 0.0
    bandwidth: float = float("inf")

    def __post_init__(self):
        if self.latency_ms < 0 or self.bandwidth <= 0:
            raise ValueError("latency must be >= 0 and bandwidth > 0")

    @classmethod
    def preset(cls, mode: str) -> "ChannelConfig":
        if mode == "lan-sim":
            return cls(mode, 0.3, 1.82e9)
        if mode == "wan-sim":
            return cls(mode, 42.0, 24.3e6)
        if mode == "real":
            return cls(mode)
        raise ValueError(f"unknown channel mode {mode!r}")


class EmulatedChannel(Channel):
    """Adds one-way latency and a bandwidth cap to outgoing frames.

    Outgoing frames go through a delay queue served by a background thread:
    a frame leaves at ``max(now, link_free) + size/bandwidth`` and is written
    to the socket ``latency`` later.  Metering is unchanged.
    """

    def __init__(self, inner: Channel, config: ChannelConfig):
        self.sock = inner.sock
        self.meter = inner.meter
        self.config = config
        self._q: queue.Queue = queue.Queue()
        self._link_free = 0.0
        self._err: BaseException | None = None
        self._t = threading.Thread(target=self._pump, daemon=True)
        self._t.start()

    def _pump(self):
        while True:
            item = self._q.get()
            if item is None:
                return
            due, data = item
            dt = due - time.monotonic()
            if dt > 0:
                time.sleep(dt)
            try:
                self.sock.sendall(data)
            except BaseException as e:  # surfaced on the next send
                self._err = e
                return

    def _write(self, data: bytes):
        if self._err:
            raise NetError("emulated link failed") from self._err
        now = time.monotonic()
        start = max(now, self._link_free)
        self._link_free = start + len(data) / self.config.bandwidth
        self._q.put((self._link_free + self.config.latency_ms / 1000.0, data))

    def flush(self):
        while not self._q.empty():
            time.sleep(0.001)

    def close(self):
        self._q.put(None)
        self._t.join(timeout=5)
        super().close()


def emulate(ch: Channel, config: ChannelConfig) -> Channel:
    if config.mode == "real" and config.latency_ms == 0 and config.bandwidth == float("inf"):
        return ch
    return EmulatedChannel(ch, config)
