"""DHCP/BOOTP wire codec with the PXE boot-steering options.

Covers the message subset a network-boot gateway needs: BOOTP header,
magic cookie, TLV options, and the PXE client identification options.
IPv4 only.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field
from ipaddress import IPv4Address

log = logging.getLogger(__name__)

MAGIC_COOKIE = b"\x63\x82\x53\x63"
BOOTP_HEADER_LEN = 236
# Common interoperability floor: encoded frames are zero-padded up to this.
MIN_FRAME_LEN = 300

# Option codes used by this codebase. Unknown codes pass through untouched.
OPT_SUBNET_MASK = 1
OPT_ROUTER = 3
OPT_DNS_SERVERS = 6
OPT_REQUESTED_IP = 50
OPT_LEASE_TIME = 51
OPT_MESSAGE_TYPE = 53
OPT_SERVER_ID = 54
OPT_PARAM_REQUEST = 55
OPT_VENDOR_CLASS = 60
OPT_CLIENT_ID = 61
OPT_TFTP_SERVER = 66
OPT_BOOTFILE = 67
OPT_CLIENT_ARCH = 93

PXE_VENDOR_PREFIX = b"PXEClient"


class DhcpError(ValueError):
    """Base for all DHCP codec failures."""


class TooShort(DhcpError):
    pass


class BadMagicCookie(DhcpError):
    pass


class MalformedOption(DhcpError):
    pass


class OversizeOption(DhcpError):
    pass


class Op(enum.IntEnum):
    BOOT_REQUEST = 1
    BOOT_REPLY = 2


class MessageType(enum.IntEnum):
    DISCOVER = 1
    OFFER = 2
    REQUEST = 3
    DECLINE = 4
    ACK = 5
    NAK = 6
    RELEASE = 7
    INFORM = 8


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def parse_mac(text: str) -> bytes:
    raw = bytes.fromhex(text.replace(":", "").replace("-", ""))
    if len(raw) != 6:
        raise ValueError(f"not a 6-byte MAC: {text!r}")
    return raw


@dataclass(frozen=True)
class DhcpOption:
    """One TLV option. Pad (0) and end (255) are codec artifacts, not options."""

    code: int
    payload: bytes

    def __post_init__(self) -> None:
        if not 1 <= self.code <= 254:
            raise ValueError(f"option code out of range: {self.code}")
        if len(self.payload) > 255:
            raise OversizeOption(f"option {self.code} payload is {len(self.payload)} bytes")


def ip_option(code: int, address: IPv4Address) -> DhcpOption:
    return DhcpOption(code, address.packed)


def u8_option(code: int, value: int) -> DhcpOption:
    return DhcpOption(code, bytes([value]))


def u32_option(code: int, value: int) -> DhcpOption:
    return DhcpOption(code, struct.pack("!I", value))


ZERO_IP = IPv4Address("0.0.0.0")


@dataclass
class DhcpMessage:
    op: Op
    transaction_id: int
    client_mac: bytes
    client_ip: IPv4Address = ZERO_IP
    your_ip: IPv4Address = ZERO_IP
    server_ip: IPv4Address = ZERO_IP  # siaddr, the PXE next-server field
    gateway_ip: IPv4Address = ZERO_IP
    server_name: str = ""
    boot_file: str = ""
    options: list[DhcpOption] = field(default_factory=list)

    def option(self, code: int) -> bytes | None:
        for opt in self.options:
            if opt.code == code:
                return opt.payload
        return None

    def message_type(self) -> MessageType | None:
        payload = self.option(OPT_MESSAGE_TYPE)
        if payload is None or len(payload) != 1:
            return None
        try:
            return MessageType(payload[0])
        except ValueError:
            return None

    def is_pxe_client(self) -> bool:
        vendor = self.option(OPT_VENDOR_CLASS)
        return vendor is not None and vendor.startswith(PXE_VENDOR_PREFIX)

    def validate(self) -> None:
        if len(self.client_mac) != 6:
            raise DhcpError(f"client_mac must be 6 bytes, got {len(self.client_mac)}")
        if not 0 <= self.transaction_id <= 0xFFFFFFFF:
            raise DhcpError(f"transaction_id out of range: {self.transaction_id}")
        if len(self.server_name.encode("ascii")) > 64:
            raise DhcpError("server_name exceeds 64 bytes")
        if len(self.boot_file.encode("ascii")) > 128:
            raise DhcpError("boot_file exceeds 128 bytes")
        seen: set[int] = set()
        for opt in self.options:
            if opt.code in seen:
                raise DhcpError(f"duplicate option code {opt.code}")
            seen.add(opt.code)
        if OPT_MESSAGE_TYPE not in seen:
            raise DhcpError("message-type option (53) is required")

    def summary(self) -> str:
        kind = self.message_type()
        name = kind.name if kind else "BOOTP"
        bits = [f"DHCP {name} xid={self.transaction_id:#010x} mac={format_mac(self.client_mac)}"]
        if self.your_ip != ZERO_IP:
            bits.append(f"yiaddr={self.your_ip}")
        if self.server_ip != ZERO_IP:
            bits.append(f"siaddr={self.server_ip}")
        if self.boot_file:
            bits.append(f"file={self.boot_file}")
        return " ".join(bits)


def encode_dhcp(msg: DhcpMessage) -> bytes:
    """Serialize: fixed BOOTP header, cookie, options in list order, end, pad."""
    msg.validate()
    out = bytearray()
    out += struct.pack("!BBBB", msg.op, 1, 6, 0)  # htype=ethernet, hlen=6, hops=0
    out += struct.pack("!IHH", msg.transaction_id, 0, 0)  # secs, flags
    out += msg.client_ip.packed
    out += msg.your_ip.packed
    out += msg.server_ip.packed
    out += msg.gateway_ip.packed
    out += msg.client_mac + b"\x00" * 10
    out += msg.server_name.encode("ascii").ljust(64, b"\x00")
    out += msg.boot_file.encode("ascii").ljust(128, b"\x00")
    assert len(out) == BOOTP_HEADER_LEN
    out += MAGIC_COOKIE
    for opt in msg.options:
        out += bytes([opt.code, len(opt.payload)]) + opt.payload
    out += b"\xff"
    if len(out) < MIN_FRAME_LEN:
        out += b"\x00" * (MIN_FRAME_LEN - len(out))
    return bytes(out)


def decode_dhcp(raw: bytes) -> DhcpMessage:
    """Parse a frame. Unknown options are preserved; duplicate codes keep the
    first occurrence (a warning is logged). Raises a DhcpError subclass on any
    malformed input."""
    if len(raw) < BOOTP_HEADER_LEN + 4:
        raise TooShort(f"frame is {len(raw)} bytes, need at least 240")
    if raw[236:240] != MAGIC_COOKIE:
        raise BadMagicCookie(f"bytes 236..240 are {raw[236:240].hex()}")
    try:
        op = Op(raw[0])
    except ValueError as exc:
        raise MalformedOption(f"bad op byte {raw[0]}") from exc
    hlen = raw[2]
    if hlen != 6:
        raise MalformedOption(f"unsupported hardware address length {hlen}")
    xid = struct.unpack_from("!I", raw, 4)[0]
    msg = DhcpMessage(
        op=op,
        transaction_id=xid,
        client_mac=raw[28:34],
        client_ip=IPv4Address(raw[12:16]),
        your_ip=IPv4Address(raw[16:20]),
        server_ip=IPv4Address(raw[20:24]),
        gateway_ip=IPv4Address(raw[24:28]),
        server_name=_field_text(raw[44:108]),
        boot_file=_field_text(raw[108:236]),
    )
    seen: set[int] = set()
    i = 240
    while i < len(raw):
        code = raw[i]
        if code == 0:
            i += 1
            continue
        if code == 255:
            break
        if i + 1 >= len(raw):
            raise MalformedOption(f"option {code} at offset {i} has no length byte")
        length = raw[i + 1]
        end = i + 2 + length
        if end > len(raw):
            raise MalformedOption(f"option {code} length {length} overruns the buffer")
        if code in seen:
            log.warning("duplicate DHCP option %d in xid %#010x, keeping first", code, xid)
        else:
            seen.add(code)
            msg.options.append(DhcpOption(code, raw[i + 2 : end]))
        i = end
    return msg


def _field_text(raw: bytes) -> str:
    # sname/file are NUL-terminated; tolerate non-ascii garbage without raising
    return raw.split(b"\x00", 1)[0].decode("ascii", errors="replace")
