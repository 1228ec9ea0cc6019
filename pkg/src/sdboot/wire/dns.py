"""Minimal DNS codec for captive and hosts-map resolution: single-question
A queries and uncompressed single-record answers. Compression pointers are
rejected; the captive use case never produces them."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from ipaddress import IPv4Address

QTYPE_A = 1
QCLASS_IN = 1

RCODE_OK = 0
RCODE_NXDOMAIN = 3
RCODE_NOT_IMPLEMENTED = 4

MAX_NAME_LEN = 255
MAX_LABEL_LEN = 63


class DnsError(ValueError):
    """Base for all DNS codec failures."""


class TruncatedLabel(DnsError):
    pass


class MultipleQuestions(DnsError):
    pass


class Unsupported(DnsError):
    pass


class BadFrame(DnsError):
    pass


@dataclass(frozen=True)
class DnsQuery:
    id: int
    name: str
    qtype: int = QTYPE_A
    qclass: int = QCLASS_IN


@dataclass(frozen=True)
class ARecord:
    name: str
    ttl: int
    address: IPv4Address


@dataclass(frozen=True)
class DnsAnswer:
    id: int
    name: str
    qtype: int = QTYPE_A
    qclass: int = QCLASS_IN
    rcode: int = RCODE_OK
    records: tuple[ARecord, ...] = ()

    @property
    def answer_count(self) -> int:
        return len(self.records)


def encode_name(name: str) -> bytes:
    out = bytearray()
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not raw:
                raise BadFrame(f"empty label in {name!r}")
            if len(raw) > MAX_LABEL_LEN:
                raise BadFrame(f"label over 63 bytes in {name!r}")
            out += bytes([len(raw)]) + raw
    out += b"\x00"
    if len(out) > MAX_NAME_LEN:
        raise BadFrame(f"name over 255 bytes: {name!r}")
    return bytes(out)


def decode_name(raw: bytes, offset: int) -> tuple[str, int]:
    """Read a label sequence starting at offset; returns (name, next offset)."""
    labels = []
    total = 0
    while True:
        if offset >= len(raw):
            raise TruncatedLabel(f"name runs past the buffer at offset {offset}")
        length = raw[offset]
        if length == 0:
            return ".".join(labels), offset + 1
        if length & 0xC0:
            raise Unsupported(f"compressed or extended label byte {length:#04x}")
        offset += 1
        if offset + length > len(raw):
            raise TruncatedLabel(f"label length {length} exceeds the buffer")
        total += length + 1
        if total > MAX_NAME_LEN:
            raise TruncatedLabel("name exceeds 255 bytes")
        labels.append(raw[offset : offset + length].decode("ascii", errors="replace"))
        offset += length


def encode_dns_query(query: DnsQuery) -> bytes:
    header = struct.pack("!HHHHHH", query.id, 0x0100, 1, 0, 0, 0)
    return header + encode_name(query.name) + struct.pack("!HH", query.qtype, query.qclass)


def decode_dns_query(raw: bytes) -> DnsQuery:
    if len(raw) < 12:
        raise BadFrame(f"frame is {len(raw)} bytes, need a 12-byte header")
    qid, _flags, qdcount, _an, _ns, _ar = struct.unpack_from("!HHHHHH", raw)
    if qdcount != 1:
        raise MultipleQuestions(f"qdcount is {qdcount}, only single-question queries supported")
    name, offset = decode_name(raw, 12)
    if offset + 4 > len(raw):
        raise BadFrame("question truncated before qtype/qclass")
    qtype, qclass = struct.unpack_from("!HH", raw, offset)
    return DnsQuery(qid, name, qtype, qclass)


def encode_dns_answer(answer: DnsAnswer) -> bytes:
    flags = 0x8180 | (answer.rcode & 0x0F)
    out = bytearray(struct.pack("!HHHHHH", answer.id, flags, 1, len(answer.records), 0, 0))
    out += encode_name(answer.name) + struct.pack("!HH", answer.qtype, answer.qclass)
    for record in answer.records:
        out += encode_name(record.name)
        out += struct.pack("!HHIH", QTYPE_A, QCLASS_IN, record.ttl, 4)
        out += record.address.packed
    return bytes(out)


def decode_dns_answer(raw: bytes) -> DnsAnswer:
    if len(raw) < 12:
        raise BadFrame(f"frame is {len(raw)} bytes, need a 12-byte header")
    qid, flags, qdcount, ancount, _ns, _ar = struct.unpack_from("!HHHHHH", raw)
    if not flags & 0x8000:
        raise BadFrame("response bit not set")
    if qdcount != 1:
        raise MultipleQuestions(f"qdcount is {qdcount}")
    rcode = flags & 0x0F
    name, offset = decode_name(raw, 12)
    if offset + 4 > len(raw):
        raise BadFrame("question truncated before qtype/qclass")
    qtype, qclass = struct.unpack_from("!HH", raw, offset)
    offset += 4
    records = []
    for _ in range(ancount):
        rr_name, offset = decode_name(raw, offset)
        if offset + 10 > len(raw):
            raise BadFrame("resource record truncated")
        rr_type, rr_class, ttl, rdlen = struct.unpack_from("!HHIH", raw, offset)
        offset += 10
        if offset + rdlen > len(raw):
            raise BadFrame("rdata truncated")
        rdata = raw[offset : offset + rdlen]
        offset += rdlen
        if rr_type == QTYPE_A and rr_class == QCLASS_IN:
            if rdlen != 4:
                raise BadFrame(f"A record rdata is {rdlen} bytes")
            records.append(ARecord(rr_name, ttl, IPv4Address(rdata)))
    return DnsAnswer(qid, name, qtype, qclass, rcode, tuple(records))
