"""Independent reference implementations used as test oracles.

Everything in this module is deliberately written from the protocol layouts
directly (fixed offsets, brute-force loops) and never imports the production
codecs, so codec tests compare two independent derivations of each value.
"""

from __future__ import annotations

import struct
from pathlib import Path

FIXTURES = Path(__file__).parent / "fixtures"


def load_hex_fixture(name: str) -> bytes:
    """Read a hex-dump fixture: hex bytes, whitespace-separated, '#' comments."""
    out = []
    for line in (FIXTURES / name).read_text().splitlines():
        line = line.split("#", 1)[0]
        out.extend(line.split())
    return bytes(int(tok, 16) for tok in out)


def ref_parse_bootp(raw: bytes) -> dict:
    """Fixed-offset BOOTP frame reader (RFC 2131 figure 1 layout).

    Returns header fields plus a raw option dict {code: first payload}.
    """
    if len(raw) < 240:
        raise ValueError("short frame")
    fields = {
        "op": raw[0],
        "htype": raw[1],
        "hlen": raw[2],
        "hops": raw[3],
        "xid": struct.unpack_from("!I", raw, 4)[0],
        "secs": struct.unpack_from("!H", raw, 8)[0],
        "flags": struct.unpack_from("!H", raw, 10)[0],
        "ciaddr": raw[12:16],
        "yiaddr": raw[16:20],
        "siaddr": raw[20:24],
        "giaddr": raw[24:28],
        "chaddr": raw[28 : 28 + raw[2]],
        "sname": raw[44:108].split(b"\x00", 1)[0],
        "file": raw[108:236].split(b"\x00", 1)[0],
        "cookie": raw[236:240],
    }
    options: dict[int, bytes] = {}
    i = 240
    while i < len(raw):
        code = raw[i]
        if code == 0:
            i += 1
            continue
        if code == 255:
            break
        length = raw[i + 1]
        if code not in options:
            options[code] = raw[i + 2 : i + 2 + length]
        i += 2 + length
    fields["options"] = options
    return fields


def ref_tftp_chunks(data: bytes, block_size: int) -> list[bytes]:
    """Brute-force TFTP file splitter.

    Walks the file byte range in block_size steps; the transfer always ends
    with a block shorter than block_size, which is empty when the file length
    is an exact multiple.
    """
    blocks = []
    offset = 0
    while True:
        block = data[offset : offset + block_size]
        blocks.append(block)
        offset += block_size
        if len(block) < block_size:
            return blocks


def ref_encode_dns_name(name: str) -> bytes:
    """Length-prefixed label encoding of a dotted name (RFC 1035 section 3.1)."""
    out = b""
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            out += bytes([len(raw)]) + raw
    return out + b"\x00"


def ref_encode_dns_query(qid: int, name: str, qtype: int = 1, qclass: int = 1) -> bytes:
    """Reference single-question query frame with the RD flag set."""
    header = struct.pack("!HHHHHH", qid, 0x0100, 1, 0, 0, 0)
    return header + ref_encode_dns_name(name) + struct.pack("!HH", qtype, qclass)
