"""Client side of the model-serving wire protocol.

A remote process (subprocess over stdio, or a TCP server) can stand in for
the in-process language model and discriminator: the engine only ever needs
next-token logits and class probabilities. Messages are newline-delimited
JSON objects, UTF-8, one per line; the server speaks first with a ``hello``
describing its vocabulary. Requests carry strictly increasing ids and the
protocol is lock-step: at most one request is outstanding per connection.

JSON has no Infinity literal, so masked (-inf) logits travel as ``null``.

    server -> {"type":"hello","vocab":[...],"eos_id":e,"bos_id":b,"classes":c}
    client -> {"type":"next_logits_batch","id":n,"sequences":[[...],...]}
    server -> {"type":"logits","id":n,"values":[[...],...]}
    client -> {"type":"class_prob_batch","id":n,"sequences":[[...]],"class":k}
    server -> {"type":"prob","id":n,"values":[...]}
    server -> {"type":"error","id":n,"message":"..."}
    client -> {"type":"shutdown"}
"""

from __future__ import annotations

import json
import os
import selectors
import shlex
import socket
import subprocess
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Distribution, InvalidArgumentError, TokenSequence, Vocabulary
from .discriminator import Discriminator
from .lm import LanguageModel


class BridgeError(RuntimeError):
    pass


class BridgeProtocolError(BridgeError):
    pass


class BridgeTimeout(BridgeError):
    pass


def _reject_constant(name: str):
    raise ValueError(f"non-finite JSON literal {name!r} is not allowed")


def encode_message(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


def logits_to_wire(logits) -> list:
    return [None if v == -np.inf else float(v) for v in logits]


def logits_from_wire(values: Sequence) -> np.ndarray:
    return np.array([-np.inf if v is None else float(v) for v in values],
                    dtype=np.float64)


class _StdioTransport:
    def __init__(self, argv: Sequence[str]):
        self._proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE,
                                      stdout=subprocess.PIPE, bufsize=0)
        self._buffer = bytearray()
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)

    def send(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeProtocolError(f"server pipe closed: {exc}") from exc

    def read_line(self, deadline: float) -> bytes:
        while True:
            nl = self._buffer.find(b"\n")
            if nl >= 0:
                line = bytes(self._buffer[:nl])
                del self._buffer[:nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout("timed out waiting for server reply")
            if not self._selector.select(remaining):
                raise BridgeTimeout("timed out waiting for server reply")
            chunk = os.read(self._proc.stdout.fileno(), 65536)
            if not chunk:
                raise BridgeProtocolError("server closed the connection")
            self._buffer.extend(chunk)

    def close(self) -> None:
        self._selector.close()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BridgeError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._buffer = bytearray()

    def send(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise BridgeProtocolError(f"connection lost: {exc}") from exc

    def read_line(self, deadline: float) -> bytes:
        while True:
            nl = self._buffer.find(b"\n")
            if nl >= 0:
                line = bytes(self._buffer[:nl])
                del self._buffer[:nl + 1]
                return line
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeout("timed out waiting for server reply")
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise BridgeTimeout("timed out waiting for server reply") from None
            if not chunk:
                raise BridgeProtocolError("server closed the connection")
            self._buffer.extend(chunk)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class BridgeConnection:
    """Lock-step request/response channel with monotonically increasing ids."""

    def __init__(self, transport, timeout: float = 10.0):
        self._transport = transport
        self._timeout = timeout
        self._next_id = 0
        self._closed = False
        hello = self._read_message()
        if hello.get("type") != "hello":
            self._fail(f"expected hello, got {hello.get('type')!r}")
        try:
            tokens = tuple(str(t) for t in hello["vocab"])
            self.vocab = Vocabulary(tokens=tokens, eos_id=int(hello["eos_id"]),
                                    bos_id=int(hello["bos_id"]))
            self.num_classes = int(hello["classes"])
        except (KeyError, TypeError, InvalidArgumentError) as exc:
            self._fail(f"malformed hello: {exc}")

    def _fail(self, message: str):
        self.close()
        raise BridgeProtocolError(message)

    def _read_message(self) -> dict:
        line = self._transport.read_line(time.monotonic() + self._timeout)
        try:
            # strict JSON: Infinity/NaN literals are protocol violations
            # (masked logits travel as null)
            obj = json.loads(line.decode("utf-8"), parse_constant=_reject_constant)
        except (UnicodeDecodeError, json.JSONDecodeError, ValueError) as exc:
            self._fail(f"undecodable message: {exc}")
        if not isinstance(obj, dict) or "type" not in obj:
            self._fail("message is not an object with a type tag")
        return obj

    def request(self, msg_type: str, payload: dict, expect: str) -> dict:
        if self._closed:
            raise BridgeError("connection already closed")
        self._next_id += 1
        request_id = self._next_id
        message = {"type": msg_type, "id": request_id, **payload}
        self._transport.send(encode_message(message))
        reply = self._read_message()
        if reply.get("type") == "error":
            self._fail(f"server error for request {request_id}: "
                       f"{reply.get('message')}")
        if reply.get("type") != expect:
            self._fail(f"expected {expect}, got {reply.get('type')!r}")
        if reply.get("id") != request_id:
            self._fail(f"reply id {reply.get('id')} does not match "
                       f"request id {request_id}")
        return reply

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._transport.send(encode_message({"type": "shutdown"}))
        except BridgeError:
            pass
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def _sequence_payload(contexts: Sequence[Sequence[int]]) -> list[list[int]]:
    out = []
    for ctx in contexts:
        tokens = ctx.tokens if isinstance(ctx, TokenSequence) else ctx
        out.append([int(t) for t in tokens])
    return out


class RemoteLanguageModel(LanguageModel):
    def __init__(self, conn: BridgeConnection):
        self._conn = conn

    def vocabulary(self) -> Vocabulary:
        return self._conn.vocab

    def next_logits(self, context) -> Distribution:
        return self.next_logits_batch([context])[0]

    def next_logits_batch(self, contexts) -> list[Distribution]:
        reply = self._conn.request(
            "next_logits_batch", {"sequences": _sequence_payload(contexts)},
            expect="logits")
        values = reply.get("values")
        if not isinstance(values, list) or len(values) != len(contexts):
            self._conn._fail("logits reply has wrong batch size")
        dists = []
        for row in values:
            if not isinstance(row, list) or len(row) != self._conn.vocab.size:
                self._conn._fail(f"logits row has length "
                                 f"{len(row) if isinstance(row, list) else '?'}, "
                                 f"expected {self._conn.vocab.size}")
            dists.append(Distribution(logits=logits_from_wire(row)))
        return dists


class RemoteDiscriminator(Discriminator):
    def __init__(self, conn: BridgeConnection):
        if conn.num_classes < 2:
            raise BridgeProtocolError("server does not expose a discriminator")
        self._conn = conn

    def num_classes(self) -> int:
        return self._conn.num_classes

    def vocabulary(self) -> Vocabulary:
        return self._conn.vocab

    def class_prob_batch(self, seqs, class_id: int) -> list[float]:
        if not 0 <= class_id < self.num_classes():
            raise InvalidArgumentError(f"class_id {class_id} out of range")
        # the scored unit is the generated continuation; the wire format
        # carries flat sequences, so the prompt is dropped client-side
        reply = self._conn.request(
            "class_prob_batch",
            {"sequences": _sequence_payload([s.generated for s in seqs]),
             "class": int(class_id)},
            expect="prob")
        values = reply.get("values")
        if not isinstance(values, list) or len(values) != len(seqs):
            self._conn._fail("prob reply has wrong batch size")
        for v in values:
            if not isinstance(v, (int, float)) or not 0 <= v <= 1:
                self._conn._fail(f"probability out of range: {v!r}")
        return [float(v) for v in values]

    def class_prob(self, seq, class_id: int) -> float:
        return self.class_prob_batch([seq], class_id)[0]

    def class_probs(self, seq) -> np.ndarray:
        return np.array([self.class_prob(seq, c) for c in range(self.num_classes())])


@dataclass
class BridgeHandles:
    connection: BridgeConnection
    lm: RemoteLanguageModel
    discriminator: RemoteDiscriminator | None

    def close(self):
        self.connection.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def connect_stdio(argv: Sequence[str], timeout: float = 10.0) -> BridgeHandles:
    conn = BridgeConnection(_StdioTransport(argv), timeout=timeout)
    return _handles(conn)


def connect_tcp(host: str, port: int, timeout: float = 10.0) -> BridgeHandles:
    conn = BridgeConnection(_TcpTransport(host, port, timeout), timeout=timeout)
    return _handles(conn)


def connect(endpoint: str, timeout: float = 10.0) -> BridgeHandles:
    """``stdio:<command line>`` or ``tcp:<host>:<port>``."""
    if endpoint.startswith("stdio:"):
        return connect_stdio(shlex.split(endpoint[len("stdio:"):]), timeout)
    if endpoint.startswith("tcp:"):
        host, _, port = endpoint[len("tcp:"):].rpartition(":")
        if not host or not port.isdigit():
            raise InvalidArgumentError(f"bad tcp endpoint: {endpoint!r}")
        return connect_tcp(host, int(port), timeout)
    raise InvalidArgumentError(f"unknown endpoint scheme: {endpoint!r}")


def _handles(conn: BridgeConnection) -> BridgeHandles:
    disc = RemoteDiscriminator(conn) if conn.num_classes >= 2 else None
    return BridgeHandles(connection=conn, lm=RemoteLanguageModel(conn),
                         discriminator=disc)
