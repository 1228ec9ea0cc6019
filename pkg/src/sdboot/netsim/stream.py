"""Reliable message exchange over the virtual datagram network.

HTTP needs more than a single datagram can carry, but full TCP dynamics are
out of scope. The compromise: a message is split into numbered segments,
every segment is acknowledged individually, and the sender retransmits only
segments that have not been acknowledged. Requests and responses share a
connection id so a peer can correlate them across a NAT boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from sdboot.netsim.net import Datagram, Interface
from sdboot.netsim.node import Node
from sdboot.wire.http import HttpRequest, HttpResponse, decode_request, decode_response, text_response

SEGMENT_PAYLOAD = 1400
HEADER = struct.Struct("!BQIHH")  # kind, conn_id, msg_seq, seg_index, seg_count
KIND_DATA = 1
KIND_ACK = 2
RETRANSMIT_INTERVAL = 0.25
MAX_SEND_ATTEMPTS = 8

MSG_REQUEST = 0
MSG_RESPONSE = 1

MessageHandler = Callable[[str, int, int, int, bytes], None]


class StreamError(Exception):
    pass


def split_message(data: bytes) -> list[bytes]:
    if not data:
        return [b""]
    return [data[i : i + SEGMENT_PAYLOAD] for i in range(0, len(data), SEGMENT_PAYLOAD)]


@dataclass
class _Outgoing:
    segments: list[bytes]
    acked: set[int] = field(default_factory=set)
    attempts: int = 0
    timer: object = None
    on_done: Optional[Callable[[], None]] = None
    on_error: Optional[Callable[[str], None]] = None

    @property
    def complete(self) -> bool:
        return len(self.acked) == len(self.segments)


@dataclass
class _Incoming:
    count: int
    parts: dict[int, bytes] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.parts) == self.count

    def assemble(self) -> bytes:
        return b"".join(self.parts[i] for i in range(self.count))


class StreamPeer:
    """One reliable-messaging endpoint bound to a node's UDP port."""

    def __init__(
        self,
        node: Node,
        iface: Interface,
        port: int,
        on_message: MessageHandler | None = None,
    ):
        self.node = node
        self.iface = iface
        self.port = port
        self.on_message = on_message
        self._sends: dict[tuple[str, int, int, int], _Outgoing] = {}
        self._recv: dict[tuple[str, int, int, int], _Incoming] = {}
        self._delivered: set[tuple[str, int, int, int]] = set()
        node.bind_udp(port, self._on_datagram)

    def close(self) -> None:
        for out in self._sends.values():
            if out.timer is not None:
                out.timer.cancel()
        self._sends.clear()
        self.node.unbind_udp(self.port)

    # -- sending -----------------------------------------------------------

    def send_message(
        self,
        dst_ip: str,
        dst_port: int,
        conn_id: int,
        msg_seq: int,
        data: bytes,
        on_done: Callable[[], None] | None = None,
        on_error: Callable[[str], None] | None = None,
    ) -> None:
        key = (dst_ip, dst_port, conn_id, msg_seq)
        if key in self._sends:
            raise StreamError(f"message {key} already in flight")
        out = _Outgoing(split_message(data), on_done=on_done, on_error=on_error)
        self._sends[key] = out
        self._transmit(key, out, range(len(out.segments)))
        out.timer = self.node.schedule(RETRANSMIT_INTERVAL, lambda: self._retransmit(key))

    def _transmit(self, key, out: _Outgoing, indexes) -> None:
        dst_ip, dst_port, conn_id, msg_seq = key
        for i in indexes:
            header = HEADER.pack(KIND_DATA, conn_id, msg_seq, i, len(out.segments))
            self.node.send_udp(self.iface, self.port, dst_ip, dst_port, header + out.segments[i])

    def _retransmit(self, key) -> None:
        out = self._sends.get(key)
        if out is None or out.complete:
            return
        out.attempts += 1
        if out.attempts >= MAX_SEND_ATTEMPTS:
            del self._sends[key]
            if out.on_error is not None:
                out.on_error("unacknowledged after retransmit limit")
            return
        missing = [i for i in range(len(out.segments)) if i not in out.acked]
        self._transmit(key, out, missing)
        out.timer = self.node.schedule(RETRANSMIT_INTERVAL, lambda: self._retransmit(key))

    # -- receiving ---------------------------------------------------------

    def _on_datagram(self, iface: Interface, dgram: Datagram) -> None:
        if len(dgram.payload) < HEADER.size:
            return
        kind, conn_id, msg_seq, seg_index, seg_count = HEADER.unpack_from(dgram.payload)
        if kind == KIND_ACK:
            self._on_ack(dgram, conn_id, msg_seq, seg_index)
        elif kind == KIND_DATA:
            self._on_data(dgram, conn_id, msg_seq, seg_index, seg_count)

    def _on_ack(self, dgram: Datagram, conn_id: int, msg_seq: int, seg_index: int) -> None:
        key = (dgram.src_ip, dgram.src_port, conn_id, msg_seq)
        out = self._sends.get(key)
        if out is None:
            return
        out.acked.add(seg_index)
        if out.complete:
            if out.timer is not None:
                out.timer.cancel()
            del self._sends[key]
            if out.on_done is not None:
                out.on_done()

    def _on_data(self, dgram: Datagram, conn_id: int, msg_seq: int, seg_index: int, seg_count: int) -> None:
        ack = HEADER.pack(KIND_ACK, conn_id, msg_seq, seg_index, seg_count)
        self.node.send_udp(self.iface, self.port, dgram.src_ip, dgram.src_port, ack)
        key = (dgram.src_ip, dgram.src_port, conn_id, msg_seq)
        if key in self._delivered:
            return
        if seg_count == 0 or seg_index >= seg_count:
            return
        incoming = self._recv.get(key)
        if incoming is None:
            incoming = self._recv[key] = _Incoming(seg_count)
        incoming.parts.setdefault(seg_index, dgram.payload[HEADER.size :])
        if incoming.complete:
            del self._recv[key]
            self._delivered.add(key)
            if self.on_message is not None:
                self.on_message(dgram.src_ip, dgram.src_port, conn_id, msg_seq, incoming.assemble())


class HttpClient:
    """Issues HTTP exchanges over a StreamPeer; replies arrive via callback."""

    def __init__(self, node: Node, iface: Interface, timeout: float = 30.0):
        self.node = node
        self.timeout = timeout
        self._pending: dict[int, tuple[Callable, Callable, object]] = {}
        self.peer = StreamPeer(node, iface, node.ephemeral_port(), self._on_message)

    def request(
        self,
        dst_ip: str,
        dst_port: int,
        request: HttpRequest,
        on_reply: Callable[[HttpResponse], None],
        on_error: Callable[[str], None],
    ) -> int:
        conn_id = self.node.rng.getrandbits(64)
        timer = self.node.schedule(self.timeout, lambda: self._on_timeout(conn_id))
        self._pending[conn_id] = (on_reply, on_error, timer)
        self.peer.send_message(
            dst_ip,
            dst_port,
            conn_id,
            MSG_REQUEST,
            request.encode(),
            on_error=lambda reason: self._fail(conn_id, reason),
        )
        return conn_id

    def close(self) -> None:
        for _, _, timer in self._pending.values():
            timer.cancel()
        self._pending.clear()
        self.peer.close()

    def _on_message(self, src_ip: str, src_port: int, conn_id: int, msg_seq: int, data: bytes) -> None:
        if msg_seq != MSG_RESPONSE:
            return
        entry = self._pending.pop(conn_id, None)
        if entry is None:
            return
        on_reply, on_error, timer = entry
        timer.cancel()
        try:
            response = decode_response(data)
        except Exception as exc:
            on_error(f"bad response: {exc}")
            return
        on_reply(response)

    def _on_timeout(self, conn_id: int) -> None:
        entry = self._pending.pop(conn_id, None)
        if entry is not None:
            entry[1]("no response within timeout")

    def _fail(self, conn_id: int, reason: str) -> None:
        entry = self._pending.pop(conn_id, None)
        if entry is not None:
            _, on_error, timer = entry
            timer.cancel()
            on_error(reason)


class HttpServer:
    """Serves HTTP requests arriving over the stream layer on a fixed port."""

    def __init__(
        self,
        node: Node,
        iface: Interface,
        port: int,
        handler: Callable[[HttpRequest], HttpResponse],
    ):
        self.node = node
        self.handler = handler
        self.peer = StreamPeer(node, iface, port, self._on_message)

    def close(self) -> None:
        self.peer.close()

    def _on_message(self, src_ip: str, src_port: int, conn_id: int, msg_seq: int, data: bytes) -> None:
        if msg_seq != MSG_REQUEST:
            return
        try:
            request = decode_request(data)
            request.client_ip = src_ip
        except Exception:
            response = text_response(400, "malformed request")
        else:
            try:
                response = self.handler(request)
            except Exception as exc:
                self.node.trace.record("http_handler_error", error=repr(exc))
                response = text_response(500, "internal error")
        self.peer.send_message(src_ip, src_port, conn_id, MSG_RESPONSE, response.encode())
