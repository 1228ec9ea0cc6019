"""TFTP wire codec: RRQ, DATA, ACK, ERROR, OACK frames plus block chunking.

Write requests are out of scope; the server side only ever ships one
bootloader image. Strings travel as latin-1 so arbitrary bytes survive a
round trip.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

DEFAULT_BLOCK_SIZE = 512
MIN_BLOCK_SIZE = 8
MAX_BLOCK_SIZE = 1428

OP_RRQ = 1
OP_WRQ = 2
OP_DATA = 3
OP_ACK = 4
OP_ERROR = 5
OP_OACK = 6


class TftpError(ValueError):
    """Base for all TFTP codec failures."""


class UnknownOpcode(TftpError):
    pass


class UnterminatedString(TftpError):
    pass


class MalformedPacket(TftpError):
    pass


class ErrorCode(enum.IntEnum):
    NOT_DEFINED = 0
    FILE_NOT_FOUND = 1
    ACCESS_VIOLATION = 2
    DISK_FULL = 3
    ILLEGAL_OPERATION = 4
    UNKNOWN_TRANSFER_ID = 5
    FILE_EXISTS = 6
    NO_SUCH_USER = 7
    OPTION_NEGOTIATION = 8


@dataclass(frozen=True)
class ReadRequest:
    filename: str
    mode: str = "octet"
    options: tuple[tuple[str, str], ...] = ()

    def option(self, key: str) -> str | None:
        for k, v in self.options:
            if k.lower() == key.lower():
                return v
        return None


@dataclass(frozen=True)
class Data:
    block: int
    payload: bytes

    def is_final(self, block_size: int) -> bool:
        return len(self.payload) < block_size


@dataclass(frozen=True)
class Ack:
    block: int


@dataclass(frozen=True)
class Error:
    code: int
    message: str = ""


@dataclass(frozen=True)
class OptionAck:
    options: tuple[tuple[str, str], ...]


TftpPacket = Union[ReadRequest, Data, Ack, Error, OptionAck]


def chunk_payloads(blob: bytes, block_size: int) -> list[bytes]:
    """Split a file into DATA payloads: floor(n/b) full blocks plus a final
    short block, empty when n is an exact multiple of b."""
    if block_size < 1:
        raise ValueError(f"block size must be positive, got {block_size}")
    blocks = [blob[i : i + block_size] for i in range(0, len(blob), block_size)]
    if not blocks or len(blocks[-1]) == block_size:
        blocks.append(b"")
    return blocks


def encode_tftp(pkt: TftpPacket) -> bytes:
    if isinstance(pkt, ReadRequest):
        out = struct.pack("!H", OP_RRQ) + _z(pkt.filename) + _z(pkt.mode)
        for key, value in pkt.options:
            out += _z(key) + _z(value)
        return out
    if isinstance(pkt, Data):
        _check_block(pkt.block)
        return struct.pack("!HH", OP_DATA, pkt.block) + pkt.payload
    if isinstance(pkt, Ack):
        _check_block(pkt.block)
        return struct.pack("!HH", OP_ACK, pkt.block)
    if isinstance(pkt, Error):
        return struct.pack("!HH", OP_ERROR, pkt.code) + _z(pkt.message)
    if isinstance(pkt, OptionAck):
        out = struct.pack("!H", OP_OACK)
        for key, value in pkt.options:
            out += _z(key) + _z(value)
        return out
    raise TypeError(f"not a TFTP packet: {pkt!r}")


def decode_tftp(raw: bytes) -> TftpPacket:
    if len(raw) < 2:
        raise MalformedPacket(f"frame is {len(raw)} bytes, need at least an opcode")
    opcode = struct.unpack_from("!H", raw)[0]
    body = raw[2:]
    if opcode == OP_RRQ:
        filename, rest = _take_z(body)
        mode, rest = _take_z(rest)
        options = []
        while rest:
            key, rest = _take_z(rest)
            value, rest = _take_z(rest)
            options.append((key, value))
        return ReadRequest(filename, mode, tuple(options))
    if opcode == OP_DATA:
        if len(body) < 2:
            raise MalformedPacket("DATA frame missing block number")
        return Data(struct.unpack_from("!H", body)[0], body[2:])
    if opcode == OP_ACK:
        if len(body) != 2:
            raise MalformedPacket(f"ACK frame must be 4 bytes, got {len(raw)}")
        return Ack(struct.unpack_from("!H", body)[0])
    if opcode == OP_ERROR:
        if len(body) < 2:
            raise MalformedPacket("ERROR frame missing code")
        message, rest = _take_z(body[2:])
        if rest:
            raise MalformedPacket("trailing bytes after ERROR message")
        return Error(struct.unpack_from("!H", body)[0], message)
    if opcode == OP_OACK:
        options = []
        rest = body
        while rest:
            key, rest = _take_z(rest)
            value, rest = _take_z(rest)
            options.append((key, value))
        return OptionAck(tuple(options))
    raise UnknownOpcode(f"opcode {opcode}")


def negotiate_block_size(requested: str | None) -> int | None:
    """Server-side blksize handling: None when the option is absent or
    unusable, otherwise the accepted size clamped into the supported range."""
    if requested is None:
        return None
    try:
        value = int(requested)
    except ValueError:
        return None
    if value < MIN_BLOCK_SIZE:
        return None
    return min(value, MAX_BLOCK_SIZE)


def summary(pkt: TftpPacket) -> str:
    if isinstance(pkt, ReadRequest):
        opts = "".join(f" {k}={v}" for k, v in pkt.options)
        return f"TFTP RRQ {pkt.filename} mode={pkt.mode}{opts}"
    if isinstance(pkt, Data):
        return f"TFTP DATA #{pkt.block} ({len(pkt.payload)} bytes)"
    if isinstance(pkt, Ack):
        return f"TFTP ACK #{pkt.block}"
    if isinstance(pkt, Error):
        return f"TFTP ERROR {pkt.code} {pkt.message}"
    return "TFTP OACK " + " ".join(f"{k}={v}" for k, v in pkt.options)


def _z(text: str) -> bytes:
    raw = text.encode("latin-1")
    if b"\x00" in raw:
        raise MalformedPacket(f"embedded NUL in string {text!r}")
    return raw + b"\x00"


def _take_z(raw: bytes) -> tuple[str, bytes]:
    idx = raw.find(b"\x00")
    if idx < 0:
        raise UnterminatedString(f"no terminator in {raw[:32]!r}")
    return raw[:idx].decode("latin-1"), raw[idx + 1 :]


def _check_block(block: int) -> None:
    if not 0 <= block <= 0xFFFF:
        raise MalformedPacket(f"block number out of range: {block}")
