"""Message-passing substrate simulating the VFL system.

Server and clients live in one process; messages either pass by reference
(memory transport) or travel as length-prefixed frames over a loopback
socket pair (wire transport).  Frames carry a self-describing field-tagged
payload in UTF-8 text; reals are encoded with 17 significant digits so
decode(encode(m)) reproduces every double bit-exactly.

Raw data columns never appear in a message: the constructors below only
accept ranks, perturbed comparison bits, latents, embeddings and residual
state.
"""

from __future__ import annotations

import base64
import json
import os
import socket
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

MESSAGE_KINDS = (
    "RankShare",
    "LatentBlock",
    "EmbeddingShare",
    "BroadcastState",
    "OmegaNotice",
    "Control",
)

MAX_FRAME = 1 << 30
_WIRE_VERSION = 1


@dataclass
class Message:
    kind: str
    payload: dict
    version: int = _WIRE_VERSION

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")


def rank_share(client, variable_ids, values, thetas, rows, packed_bits, debiased):
    """Perturbed-rank release of one client: per-variable debiased rank
    vectors plus the packed perturbed comparison bits they derive from."""
    return Message(
        "RankShare",
        {
            "client": int(client),
            "variable_ids": [int(v) for v in variable_ids],
            "values": [np.asarray(v, dtype=np.float64) for v in values],
            "thetas": [float(t) for t in thetas],
            "rows": [np.asarray(r, dtype=np.int64) for r in rows],
            "bits": [np.asarray(b, dtype=np.uint8) for b in packed_bits],
            "debiased": [bool(d) for d in debiased],
        },
    )


def latent_block(client, variable_ids, block):
    return Message(
        "LatentBlock",
        {
            "client": int(client),
            "variable_ids": [int(v) for v in variable_ids],
            "block": np.asarray(block, dtype=np.float64),
        },
    )


def embedding_share(client, zeta):
    return Message(
        "EmbeddingShare",
        {"client": int(client), "zeta": np.asarray(zeta, dtype=np.float64)},
    )


def broadcast_state(h, gamma):
    return Message(
        "BroadcastState",
        {
            "h": np.asarray(h, dtype=np.float64),
            "gamma": np.asarray(gamma, dtype=np.float64),
        },
    )


def omega_notice(dim):
    return Message("OmegaNotice", {"dim": int(dim)})


def control(round_no, phase):
    return Message("Control", {"round": int(round_no), "phase": int(phase)})


# ---------------------------------------------------------------- wire codec

def _fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def _enc(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, float):
        return {"~f": _fmt_real(v)}
    if isinstance(v, np.ndarray):
        if v.dtype == np.uint8:
            return {"~B": base64.b64encode(v.tobytes()).decode("ascii"), "n": int(v.size)}
        if v.ndim == 1 and np.issubdtype(v.dtype, np.integer):
            return {"~I": [int(x) for x in v]}
        if v.ndim == 1:
            return {"~F": [_fmt_real(x) for x in v]}
        if v.ndim == 2:
            return {"~F2": {"s": list(v.shape), "d": [_fmt_real(x) for x in v.ravel()]}}
        raise TypeError(f"cannot encode array of ndim {v.ndim}")
    if isinstance(v, (list, tuple)):
        return [_enc(x) for x in v]
    if isinstance(v, dict):
        out = {}
        for k, x in v.items():
            if not isinstance(k, str) or k.startswith("~"):
                raise TypeError("payload dict keys must be plain strings")
            out[k] = _enc(x)
        return out
    if isinstance(v, (np.floating,)):
        return {"~f": _fmt_real(float(v))}
    if isinstance(v, (np.integer,)):
        return int(v)
    raise TypeError(f"cannot encode {type(v)!r}")


def _dec(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, list):
        return [_dec(x) for x in v]
    if isinstance(v, dict):
        if "~f" in v:
            return float(v["~f"])
        if "~B" in v:
            return np.frombuffer(base64.b64decode(v["~B"]), dtype=np.uint8)[: v["n"]].copy()
        if "~I" in v:
            return np.asarray(v["~I"], dtype=np.int64)
        if "~F" in v:
            return np.asarray([float(x) for x in v["~F"]], dtype=np.float64)
        if "~F2" in v:
            s = v["~F2"]["s"]
            return np.asarray([float(x) for x in v["~F2"]["d"]], dtype=np.float64).reshape(s)
        return {k: _dec(x) for k, x in v.items()}
    raise TypeError(f"cannot decode {type(v)!r}")


def wire_encode(msg: Message) -> bytes:
    """Length-prefixed frame: 4-byte big-endian payload length + tagged UTF-8
    payload with 17-significant-digit reals."""
    body = json.dumps(
        {"k": msg.kind, "v": msg.version, "p": _enc(msg.payload)},
        separators=(",", ":"),
    ).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise ValueError("frame exceeds the 2^30 byte cap")
    return len(body).to_bytes(4, "big") + body


def wire_decode(frame: bytes) -> Message:
    if len(frame) < 4:
        raise ValueError("truncated frame header")
    n = int.from_bytes(frame[:4], "big")
    if n > MAX_FRAME:
        raise ValueError("declared frame length exceeds the 2^30 byte cap")
    if len(frame) != 4 + n:
        raise ValueError("truncated frame body")
    doc = json.loads(frame[4:].decode("utf-8"))
    if doc["k"] not in MESSAGE_KINDS:
        raise ValueError(f"unknown kind tag {doc['k']!r}")
    return Message(kind=doc["k"], payload=_dec(doc["p"]), version=doc["v"])


# ---------------------------------------------------------------- transports

class MemoryTransport:
    """In-process queues; messages pass by reference (treat as immutable)."""

    name = "memory"

    def __init__(self, record: bool = False):
        self._queues: dict[tuple, deque] = {}
        self.record = record
        self.transcript: list[tuple[object, object, Message]] = []

    def send(self, src, dst, msg: Message) -> None:
        self._queues.setdefault((src, dst), deque()).append(msg)
        if self.record:
            self.transcript.append((src, dst, msg))

    def recv(self, src, dst) -> Message:
        q = self._queues.get((src, dst))
        if not q:
            raise RuntimeError(f"no message queued from {src} to {dst}")
        return q.popleft()

    def pending(self, src, dst) -> int:
        return len(self._queues.get((src, dst), ()))

    def close(self):
        pass


class LoopbackTransport:
    """Frames travel through real loopback socket pairs per channel.

    Both socket ends live in this process; sends drain the receive side into
    a reassembly buffer so arbitrarily large frames cannot deadlock.
    """

    name = "loopback"

    def __init__(self, record: bool = False):
        self._chan: dict[tuple, dict] = {}
        self.record = record
        self.transcript: list[tuple[object, object, bytes]] = []

    def _channel(self, key):
        ch = self._chan.get(key)
        if ch is None:
            a, b = socket.socketpair()
            a.setblocking(False)
            b.setblocking(False)
            ch = {"w": a, "r": b, "buf": bytearray(), "msgs": deque()}
            self._chan[key] = ch
        return ch

    def _drain(self, ch):
        while True:
            try:
                data = ch["r"].recv(1 << 16)
            except BlockingIOError:
                break
            if not data:
                break
            ch["buf"] += data
        buf = ch["buf"]
        while len(buf) >= 4:
            n = int.from_bytes(buf[:4], "big")
            if n > MAX_FRAME:
                raise ValueError("declared frame length exceeds the 2^30 byte cap")
            if len(buf) < 4 + n:
                break
            frame = bytes(buf[: 4 + n])
            del buf[: 4 + n]
            ch["msgs"].append(wire_decode(frame))

    def send(self, src, dst, msg: Message) -> None:
        frame = wire_encode(msg)
        if self.record:
            self.transcript.append((src, dst, frame))
        ch = self._channel((src, dst))
        view = memoryview(frame)
        while view:
            try:
                sent = ch["w"].send(view[: 1 << 16])
                view = view[sent:]
            except BlockingIOError:
                self._drain(ch)

    def recv(self, src, dst) -> Message:
        ch = self._channel((src, dst))
        self._drain(ch)
        if not ch["msgs"]:
            raise RuntimeError(f"no message queued from {src} to {dst}")
        return ch["msgs"].popleft()

    def pending(self, src, dst) -> int:
        key = (src, dst)
        if key not in self._chan:
            return 0
        ch = self._chan[key]
        self._drain(ch)
        return len(ch["msgs"])

    def close(self):
        for ch in self._chan.values():
            ch["w"].close()
            ch["r"].close()
        self._chan.clear()


def make_transport(name: str | None = None, record: bool = False):
    name = name or os.environ.get("FED_TRANSPORT", "memory")
    if name == "memory":
        return MemoryTransport(record=record)
    if name == "loopback":
        return LoopbackTransport(record=record)
    raise ValueError(f"unknown transport {name!r} (use memory|loopback)")


class ClientStepError(RuntimeError):
    def __init__(self, client, cause):
        super().__init__(f"client {client} failed: {cause}")
        self.client = client
        self.cause = cause


SERVER = "server"


class Federation:
    """Round orchestration: client steps run to completion (optionally on a
    thread pool), the server consumes their messages behind a barrier, then
    its replies are delivered back."""

    def __init__(self, n_clients: int, transport=None, parallel: bool = False):
        self.n_clients = n_clients
        self.transport = transport if transport is not None else make_transport()
        self.parallel = parallel

    def run_round(self, client_step, server_step, round_no: int = 0):
        """One barrier round.

        ``client_step(k) -> list[Message]`` produces client k's uplink;
        ``server_step(inbox) -> dict[k, list[Message]]`` consumes the inbox
        (client id -> messages, in send order) and returns the downlink.
        Returns the per-client delivered messages.
        """

        def _run(k):
            try:
                return list(client_step(k))
            except Exception as exc:  # abort the round naming the client
                raise ClientStepError(k, exc) from exc

        if self.parallel and self.n_clients > 1:
            with ThreadPoolExecutor(max_workers=self.n_clients) as pool:
                outs = list(pool.map(_run, range(self.n_clients)))
        else:
            outs = [_run(k) for k in range(self.n_clients)]
        for k, msgs in enumerate(outs):
            for msg in msgs:
                self.transport.send(k, SERVER, msg)

        inbox = {
            k: [self.transport.recv(k, SERVER) for _ in range(self.transport.pending(k, SERVER))]
            for k in range(self.n_clients)
        }
        downlink = server_step(inbox) or {}
        for k, msgs in downlink.items():
            for msg in msgs:
                self.transport.send(SERVER, k, msg)
        delivered = {
            k: [self.transport.recv(SERVER, k) for _ in range(self.transport.pending(SERVER, k))]
            for k in range(self.n_clients)
        }
        return delivered
