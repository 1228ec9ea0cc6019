"""DHCP codec tests: fixture capture, fixed offsets, round trips, option rules."""

from __future__ import annotations

from ipaddress import IPv4Address

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdboot.wire import dhcp
from oracles import load_hex_fixture, ref_parse_bootp


def minimal_message(**kwargs) -> dhcp.DhcpMessage:
    defaults = dict(
        op=dhcp.Op.BOOT_REPLY,
        transaction_id=0x1234ABCD,
        client_mac=bytes.fromhex("525400123456"),
        options=[dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.OFFER)],
    )
    defaults.update(kwargs)
    return dhcp.DhcpMessage(**defaults)


class TestDecodeFixture:
    """The fixture is a stock client DISCOVER checked against the RFC layout."""

    def test_discover_capture(self):
        raw = load_hex_fixture("dhcp_discover_client.hex")
        msg = dhcp.decode_dhcp(raw)
        assert msg.op is dhcp.Op.BOOT_REQUEST
        assert msg.message_type() is dhcp.MessageType.DISCOVER
        assert msg.transaction_id == 0x3D1D
        assert dhcp.format_mac(msg.client_mac) == "00:0b:82:01:fc:42"
        assert msg.client_ip == IPv4Address("0.0.0.0")
        assert msg.boot_file == ""

    def test_fields_match_reference_parser(self):
        raw = load_hex_fixture("dhcp_discover_client.hex")
        msg = dhcp.decode_dhcp(raw)
        ref = ref_parse_bootp(raw)
        assert msg.op == ref["op"]
        assert msg.transaction_id == ref["xid"]
        assert msg.client_mac == ref["chaddr"]
        assert {opt.code: opt.payload for opt in msg.options} == ref["options"]

    def test_unknown_options_preserved(self):
        raw = load_hex_fixture("dhcp_discover_client.hex")
        msg = dhcp.decode_dhcp(raw)
        # 50 and 55 are not interpreted by the codec; payloads pass through
        assert msg.option(50) == b"\x00\x00\x00\x00"
        assert msg.option(55) == b"\x01\x03\x06\x2a"


class TestEncode:
    def test_offer_yiaddr_offset(self):
        # yiaddr lives at bytes 16..20 of the fixed header
        msg = minimal_message(your_ip=IPv4Address("192.168.77.100"))
        raw = dhcp.encode_dhcp(msg)
        assert raw[16:20] == bytes([0xC0, 0xA8, 0x4D, 0x64])
        assert ref_parse_bootp(raw)["yiaddr"] == IPv4Address("192.168.77.100").packed

    def test_minimal_message_padded_to_300(self):
        # 236 header + 4 cookie + 3 (option 53) + 1 (end) = 244, padded to 300
        raw = dhcp.encode_dhcp(minimal_message())
        assert len(raw) == 300
        assert raw[244:] == b"\x00" * 56

    def test_cookie_and_end_marker(self):
        raw = dhcp.encode_dhcp(minimal_message())
        assert raw[236:240] == dhcp.MAGIC_COOKIE
        assert raw[243] == 255

    def test_large_message_not_truncated(self):
        opts = [dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, 2)]
        opts += [dhcp.DhcpOption(code, b"x" * 60) for code in range(100, 110)]
        raw = dhcp.encode_dhcp(minimal_message(options=opts))
        assert len(raw) > 300
        assert dhcp.decode_dhcp(raw).option(105) == b"x" * 60

    def test_oversize_option_rejected(self):
        with pytest.raises(dhcp.OversizeOption):
            dhcp.DhcpOption(67, b"y" * 256)

    def test_duplicate_options_rejected_on_encode(self):
        opts = [dhcp.u8_option(53, 1), dhcp.u8_option(53, 2)]
        with pytest.raises(dhcp.DhcpError):
            dhcp.encode_dhcp(minimal_message(options=opts))

    def test_missing_message_type_rejected(self):
        with pytest.raises(dhcp.DhcpError):
            dhcp.encode_dhcp(minimal_message(options=[]))


class TestDecodeErrors:
    def test_too_short(self):
        with pytest.raises(dhcp.TooShort):
            dhcp.decode_dhcp(b"\x01" * 239)

    def test_zeroed_cookie(self):
        raw = bytearray(dhcp.encode_dhcp(minimal_message()))
        raw[236:240] = b"\x00\x00\x00\x00"
        with pytest.raises(dhcp.BadMagicCookie):
            dhcp.decode_dhcp(bytes(raw))

    def test_option_overrunning_buffer(self):
        raw = dhcp.encode_dhcp(minimal_message())[:240]
        raw += bytes([67, 200, 1, 2, 3])  # claims 200 payload bytes, has 3
        with pytest.raises(dhcp.MalformedOption):
            dhcp.decode_dhcp(raw)

    def test_duplicate_option_on_decode_keeps_first(self):
        raw = dhcp.encode_dhcp(minimal_message())[:240]
        raw += bytes([67, 1, ord("a"), 67, 1, ord("b"), 53, 1, 1, 255])
        msg = dhcp.decode_dhcp(raw)
        assert msg.option(67) == b"a"

    def test_pad_options_skipped(self):
        raw = dhcp.encode_dhcp(minimal_message())[:240]
        raw += bytes([0, 0, 53, 1, 2, 0, 255])
        assert dhcp.decode_dhcp(raw).message_type() is dhcp.MessageType.OFFER


option_strategy = st.builds(
    dhcp.DhcpOption,
    code=st.integers(min_value=1, max_value=254),
    payload=st.binary(max_size=64),
)


@st.composite
def message_strategy(draw):
    codes = draw(
        st.lists(st.integers(min_value=1, max_value=254), unique=True, max_size=6)
    )
    options = [dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, draw(st.integers(1, 8)))]
    for code in codes:
        if code != dhcp.OPT_MESSAGE_TYPE:
            options.append(dhcp.DhcpOption(code, draw(st.binary(max_size=32))))
    ips = st.integers(min_value=0, max_value=0xFFFFFFFF).map(IPv4Address)
    return dhcp.DhcpMessage(
        op=draw(st.sampled_from(list(dhcp.Op))),
        transaction_id=draw(st.integers(0, 0xFFFFFFFF)),
        client_mac=draw(st.binary(min_size=6, max_size=6)),
        client_ip=draw(ips),
        your_ip=draw(ips),
        server_ip=draw(ips),
        gateway_ip=draw(ips),
        server_name=draw(st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), max_size=40)),
        boot_file=draw(st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), max_size=100)),
        options=options,
    )


class TestRoundTrip:
    @settings(max_examples=300)
    @given(message_strategy())
    def test_decode_encode_identity(self, msg):
        assert dhcp.decode_dhcp(dhcp.encode_dhcp(msg)) == msg

    def test_fixture_reencode_roundtrip(self):
        msg = dhcp.decode_dhcp(load_hex_fixture("dhcp_discover_client.hex"))
        assert dhcp.decode_dhcp(dhcp.encode_dhcp(msg)) == msg


class TestMacHelpers:
    def test_format_parse_roundtrip(self):
        assert dhcp.parse_mac("52:54:00:12:34:56") == bytes.fromhex("525400123456")
        assert dhcp.format_mac(bytes.fromhex("525400123456")) == "52:54:00:12:34:56"

    def test_bad_mac_rejected(self):
        with pytest.raises(ValueError):
            dhcp.parse_mac("52:54:00")
