"""Boot gateway behavior: upstream probing, the two DHCP personalities,
TFTP bootloader serving, captive DNS, and the connectivity portal.

The core is transport-agnostic. It talks to the world through a runtime
object (send datagrams, schedule callbacks, attach the upstream interface),
so the simulation harness and the live UDP listeners drive the exact same
code.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from typing import Callable, Protocol

from sdboot import bootscript
from sdboot.gateway.config import GatewayConfig
from sdboot.gateway.leases import LeaseTable
from sdboot.netsim.net import AuthFailure, NoSuchNetwork
from sdboot.wire import dhcp, dns, tftp
from sdboot.wire.http import HttpRequest, HttpResponse, text_response

BROADCAST = "255.255.255.255"


class GatewayMode(enum.Enum):
    STANDALONE = "standalone"
    PROXY = "proxy"


class ProfileKind(enum.Enum):
    WIFI = "wifi"
    CELLULAR = "cellular"
    WIRED = "wired"


class ProfileStatus(enum.Enum):
    UNCONFIGURED = "unconfigured"
    CONNECTING = "connecting"
    CONNECTED = "connected"
    FAILED = "failed"


@dataclass
class ConnectivityProfile:
    kind: ProfileKind
    ssid: str = ""
    passphrase: str = ""
    apn: str = ""
    credentials: str = ""
    status: ProfileStatus = ProfileStatus.UNCONFIGURED
    error: str = ""


class MissingField(ValueError):
    def __init__(self, name: str):
        super().__init__(f"missing field: {name}")
        self.field = name


class GatewayRuntime(Protocol):
    """What the core needs from its host (simulated node or live process)."""

    rng: random.Random

    @property
    def now(self) -> float: ...

    def schedule(self, delay: float, fn: Callable[[], None]): ...

    def send_lan(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None: ...

    def send_upstream(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None: ...

    def upstream_available(self) -> bool: ...

    def upstream_mac(self) -> bytes: ...

    def upstream_attach(self, profile: ConnectivityProfile) -> None: ...

    def add_upstream_ip(self, ip: str) -> None: ...

    def log(self, kind: str, **detail) -> None: ...


@dataclass
class _TftpTransfer:
    packets: list[tftp.TftpPacket]
    cursor: int = 0

    def current_block(self) -> int:
        pkt = self.packets[self.cursor]
        return pkt.block if isinstance(pkt, tftp.Data) else 0


class GatewayCore:
    def __init__(self, cfg: GatewayConfig, runtime: GatewayRuntime):
        self.cfg = cfg
        self.runtime = runtime
        self.mode: GatewayMode | None = None  # None until the first probe resolves
        self.upstream_server_ip: IPv4Address | None = None
        self.upstream_ip: IPv4Address | None = None  # our own upstream lease
        self.leases = LeaseTable(cfg.pool, cfg.lease_seconds)
        self.profile = ConnectivityProfile(ProfileKind.WIRED, status=ProfileStatus.UNCONFIGURED)
        self.upstream_connected = False
        self._transfers: dict[tuple[str, int], _TftpTransfer] = {}
        self._probe_attempt = 0
        self._probe_xid: int | None = None
        self._probe_timer = None

    # -- lifecycle and upstream probing -------------------------------------

    def start(self) -> None:
        self.runtime.log("gateway_start", ip=str(self.cfg.gateway_ip))
        self._probe_attempt = 0
        self._probe_step()

    def _probe_step(self) -> None:
        if not self.runtime.upstream_available():
            self._resolve_mode(GatewayMode.STANDALONE)
            return
        if self._probe_attempt >= self.cfg.probe_retries:
            self._resolve_mode(GatewayMode.STANDALONE)
            return
        self._probe_attempt += 1
        self._probe_xid = self.runtime.rng.getrandbits(32)
        discover = dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REQUEST,
            transaction_id=self._probe_xid,
            client_mac=self.runtime.upstream_mac(),
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.DISCOVER),
                dhcp.DhcpOption(dhcp.OPT_CLIENT_ID, b"\x01" + self.runtime.upstream_mac()),
                dhcp.DhcpOption(dhcp.OPT_PARAM_REQUEST, bytes([1, 3, 6])),
            ],
        )
        self.runtime.log("probe_discover", attempt=self._probe_attempt, xid=self._probe_xid)
        self.runtime.send_upstream(
            "0.0.0.0", self.cfg.dhcp_client_port, BROADCAST, self.cfg.dhcp_port,
            dhcp.encode_dhcp(discover),
        )
        self._probe_timer = self.runtime.schedule(self.cfg.probe_timeout, self._probe_step)

    def _resolve_mode(self, mode: GatewayMode) -> None:
        if self._probe_timer is not None:
            self._probe_timer.cancel()
            self._probe_timer = None
        self._probe_xid = None
        previous = self.mode
        self.mode = mode
        self.runtime.log(
            "mode_resolved",
            mode=mode.value,
            previous=previous.value if previous else None,
            upstream_server=str(self.upstream_server_ip) if self.upstream_server_ip else None,
        )

    def _on_upstream_dhcp(self, msg: dhcp.DhcpMessage, src_ip: str) -> None:
        if msg.op is not dhcp.Op.BOOT_REPLY or msg.client_mac != self.runtime.upstream_mac():
            return
        kind = msg.message_type()
        if kind is dhcp.MessageType.OFFER and msg.transaction_id == self._probe_xid:
            server = msg.option(dhcp.OPT_SERVER_ID)
            self.upstream_server_ip = IPv4Address(server) if server else IPv4Address(src_ip)
            # claim the offered lease so the gateway has a reachable address
            # on the upstream network for its TFTP steering
            request = dhcp.DhcpMessage(
                op=dhcp.Op.BOOT_REQUEST,
                transaction_id=msg.transaction_id,
                client_mac=self.runtime.upstream_mac(),
                options=[
                    dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.REQUEST),
                    dhcp.ip_option(dhcp.OPT_REQUESTED_IP, msg.your_ip),
                    dhcp.ip_option(dhcp.OPT_SERVER_ID, self.upstream_server_ip),
                ],
            )
            self.upstream_ip = msg.your_ip
            self.runtime.add_upstream_ip(str(msg.your_ip))
            self.runtime.send_upstream(
                "0.0.0.0", self.cfg.dhcp_client_port, BROADCAST, self.cfg.dhcp_port,
                dhcp.encode_dhcp(request),
            )
            self._resolve_mode(GatewayMode.PROXY)
        elif kind is dhcp.MessageType.ACK:
            self.runtime.log("upstream_lease_confirmed", ip=str(msg.your_ip))

    @property
    def effective_ip(self) -> IPv4Address:
        """The address the gateway speaks with on the client-facing side:
        its upstream lease once proxying, its static address otherwise."""
        if self.mode is GatewayMode.PROXY and self.upstream_ip is not None:
            return self.upstream_ip
        return self.cfg.gateway_ip

    # -- DHCP ----------------------------------------------------------------

    def on_dhcp(self, raw: bytes, src_ip: str, src_port: int, upstream: bool = False) -> None:
        try:
            msg = dhcp.decode_dhcp(raw)
        except dhcp.DhcpError as exc:
            self.runtime.log("dhcp_decode_error", error=str(exc))
            return
        if upstream:
            self._on_upstream_dhcp(msg, src_ip)
            return
        if msg.op is not dhcp.Op.BOOT_REQUEST:
            return
        if self.mode is GatewayMode.STANDALONE:
            reply = self.handle_dhcp_standalone(msg)
        elif self.mode is GatewayMode.PROXY:
            reply = self.handle_dhcp_proxy(msg)
        else:
            return  # still probing; clients will retry
        if reply is not None:
            self.runtime.log("dhcp_reply", summary=reply.summary())
            self.runtime.send_lan(
                str(self.effective_ip), self.cfg.dhcp_port,
                BROADCAST, self.cfg.dhcp_client_port,
                dhcp.encode_dhcp(reply),
            )

    def handle_dhcp_standalone(self, msg: dhcp.DhcpMessage) -> dhcp.DhcpMessage | None:
        kind = msg.message_type()
        if kind not in (dhcp.MessageType.DISCOVER, dhcp.MessageType.REQUEST):
            return None
        ip = self.leases.allocate(msg.client_mac, self.runtime.now)
        if ip is None:
            self.runtime.log("pool_exhausted", mac=dhcp.format_mac(msg.client_mac))
            return None
        reply_kind = (
            dhcp.MessageType.OFFER if kind is dhcp.MessageType.DISCOVER else dhcp.MessageType.ACK
        )
        gateway = self.cfg.gateway_ip
        return dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REPLY,
            transaction_id=msg.transaction_id,
            client_mac=msg.client_mac,
            your_ip=ip,
            server_ip=gateway,
            boot_file=self.cfg.boot_filename,
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, reply_kind),
                dhcp.ip_option(dhcp.OPT_SUBNET_MASK, self.cfg.network.netmask),
                dhcp.ip_option(dhcp.OPT_ROUTER, gateway),
                dhcp.ip_option(dhcp.OPT_DNS_SERVERS, gateway),
                dhcp.u32_option(dhcp.OPT_LEASE_TIME, self.cfg.lease_seconds),
                dhcp.ip_option(dhcp.OPT_SERVER_ID, gateway),
                dhcp.DhcpOption(dhcp.OPT_VENDOR_CLASS, dhcp.PXE_VENDOR_PREFIX),
                dhcp.DhcpOption(dhcp.OPT_TFTP_SERVER, str(gateway).encode("ascii")),
                dhcp.DhcpOption(dhcp.OPT_BOOTFILE, self.cfg.boot_filename.encode("ascii")),
            ],
        )

    def handle_dhcp_proxy(self, msg: dhcp.DhcpMessage) -> dhcp.DhcpMessage | None:
        if not msg.is_pxe_client():
            self.runtime.log("dhcp_ignored_not_pxe", mac=dhcp.format_mac(msg.client_mac))
            return None
        if msg.message_type() is not dhcp.MessageType.DISCOVER:
            return None  # address allocation is the upstream server's business
        me = self.effective_ip
        return dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REPLY,
            transaction_id=msg.transaction_id,
            client_mac=msg.client_mac,
            # no your_ip: the proxy never allocates addresses
            server_ip=me,
            boot_file=self.cfg.boot_filename,
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.OFFER),
                dhcp.ip_option(dhcp.OPT_SERVER_ID, me),
                dhcp.DhcpOption(dhcp.OPT_VENDOR_CLASS, dhcp.PXE_VENDOR_PREFIX),
                dhcp.DhcpOption(dhcp.OPT_TFTP_SERVER, str(me).encode("ascii")),
                dhcp.DhcpOption(dhcp.OPT_BOOTFILE, self.cfg.boot_filename.encode("ascii")),
            ],
        )

    # -- TFTP ----------------------------------------------------------------

    def on_tftp(self, raw: bytes, src_ip: str, src_port: int) -> None:
        key = (src_ip, src_port)
        try:
            pkt = tftp.decode_tftp(raw)
        except tftp.TftpError as exc:
            self._tftp_send(key, tftp.Error(tftp.ErrorCode.NOT_DEFINED, f"malformed packet: {exc}"))
            return
        if isinstance(pkt, tftp.ReadRequest):
            plan = self.plan_tftp_transfer(pkt)
            first = plan[0]
            if isinstance(first, tftp.Error):
                self.runtime.log("tftp_refused", filename=pkt.filename, reason=first.message)
                self._tftp_send(key, first)
                return
            self.runtime.log(
                "tftp_transfer_start", filename=pkt.filename,
                blocks=sum(1 for p in plan if isinstance(p, tftp.Data)),
            )
            self._transfers[key] = _TftpTransfer(plan)
            self._tftp_send(key, first)
        elif isinstance(pkt, tftp.Ack):
            transfer = self._transfers.get(key)
            if transfer is None:
                self._tftp_send(
                    key, tftp.Error(tftp.ErrorCode.ILLEGAL_OPERATION, "no transfer in progress")
                )
                return
            self._tftp_advance(key, transfer, pkt.block)
        elif isinstance(pkt, tftp.Error):
            self._transfers.pop(key, None)
            self.runtime.log("tftp_client_error", code=int(pkt.code), message=pkt.message)
        else:
            self._tftp_send(
                key, tftp.Error(tftp.ErrorCode.ILLEGAL_OPERATION, "expected read request or ack")
            )

    def plan_tftp_transfer(self, rrq: tftp.ReadRequest) -> list[tftp.TftpPacket]:
        """The whole reply sequence for a read request: an option ack when
        block size was negotiated, then the numbered data blocks. A bad
        filename plans to a single error packet."""
        if rrq.filename != self.cfg.boot_filename:
            return [tftp.Error(tftp.ErrorCode.FILE_NOT_FOUND, f"no such file: {rrq.filename}")]
        packets: list[tftp.TftpPacket] = []
        block_size = tftp.DEFAULT_BLOCK_SIZE
        negotiated = tftp.negotiate_block_size(rrq.option("blksize"))
        if negotiated is not None:
            block_size = negotiated
            packets.append(tftp.OptionAck((("blksize", str(block_size)),)))
        payloads = tftp.chunk_payloads(self.cfg.bootloader_blob, block_size)
        packets.extend(tftp.Data(i + 1, p) for i, p in enumerate(payloads))
        return packets

    def _tftp_advance(self, key, transfer: _TftpTransfer, acked_block: int) -> None:
        current = transfer.current_block()
        if acked_block == current:
            if transfer.cursor + 1 >= len(transfer.packets):
                del self._transfers[key]
                self.runtime.log("tftp_transfer_done")
                return
            transfer.cursor += 1
            self._tftp_send(key, transfer.packets[transfer.cursor])
        elif acked_block == current - 1:
            self._tftp_send(key, transfer.packets[transfer.cursor])  # duplicate ack: resend
        # anything else is stale noise

    def _tftp_send(self, key: tuple[str, int], pkt: tftp.TftpPacket) -> None:
        self.runtime.send_lan(
            str(self.effective_ip), self.cfg.tftp_port, key[0], key[1], tftp.encode_tftp(pkt)
        )

    # -- DNS -----------------------------------------------------------------

    def on_dns(self, raw: bytes, src_ip: str, src_port: int) -> None:
        try:
            query = dns.decode_dns_query(raw)
        except dns.DnsError as exc:
            self.runtime.log("dns_decode_error", error=str(exc))
            return
        answer = self.answer_dns(query)
        self.runtime.log(
            "dns_answer", name=query.name, qtype=query.qtype, rcode=answer.rcode,
        )
        self.runtime.send_lan(
            str(self.effective_ip), self.cfg.dns_port, src_ip, src_port,
            dns.encode_dns_answer(answer),
        )

    def answer_dns(self, query: dns.DnsQuery) -> dns.DnsAnswer:
        """Captive resolution: every A query is the gateway itself, with a
        TTL low enough that clients re-ask once real connectivity exists."""
        if query.qtype != dns.QTYPE_A:
            return dns.DnsAnswer(
                query.id, query.name, query.qtype, query.qclass,
                rcode=dns.RCODE_NOT_IMPLEMENTED,
            )
        record = dns.ARecord(query.name, self.cfg.dns_ttl, self.cfg.gateway_ip)
        return dns.DnsAnswer(query.id, query.name, records=(record,))

    # -- connectivity portal -------------------------------------------------

    def handle_portal(self, request: HttpRequest) -> HttpResponse:
        path = request.path
        fields = request.form()
        self.runtime.log("portal_request", path=path)
        if path == "/configure/wifi":
            script = self._wifi_form()
        elif path == "/configure/wifi/submit":
            script = self._submit_wifi(fields)
        elif path == "/configure/cellular":
            script = self._cellular_form()
        elif path == "/configure/cellular/submit":
            script = self._submit_cellular(fields)
        elif path == "/configure/wired":
            script = self._submit_wired()
        else:
            # captive behavior: whatever the client tried to reach, it gets
            # the connectivity menu
            script = self._menu()
        return text_response(200, bootscript.render_script(script))

    def _base_url(self) -> str:
        return f"http://{self.cfg.gateway_ip}"

    def _menu(self) -> bootscript.Script:
        statements: list[bootscript.Statement] = [
            bootscript.Echo("This site is offline: choose an upstream connection"),
        ]
        if self.profile.status is ProfileStatus.FAILED and self.profile.error:
            statements.append(bootscript.Echo(f"Previous attempt failed: {self.profile.error}"))
        statements.extend(
            [
                bootscript.MenuStart("Connect to the internet"),
                bootscript.MenuItem("wifi", "Configure Wi-Fi"),
                bootscript.MenuItem("cellular", "Configure cellular modem"),
                bootscript.MenuItem("wired", "Use wired uplink"),
                bootscript.Choose("target"),
                bootscript.Chain(f"{self._base_url()}/configure/${{target}}"),
            ]
        )
        return bootscript.Script(tuple(statements))

    def _wifi_form(self, error: str = "") -> bootscript.Script:
        statements: list[bootscript.Statement] = []
        if error:
            statements.append(bootscript.Echo(error))
        statements.extend(
            [
                bootscript.Echo("Wireless network configuration"),
                bootscript.Prompt("ssid", "Wireless network name (SSID)"),
                bootscript.Prompt("passphrase", "Wireless passphrase", masked=True),
                bootscript.Chain(
                    f"{self._base_url()}/configure/wifi/submit"
                    "?ssid=${ssid}&passphrase=${passphrase}"
                ),
            ]
        )
        return bootscript.Script(tuple(statements))

    def _cellular_form(self, error: str = "") -> bootscript.Script:
        statements: list[bootscript.Statement] = []
        if error:
            statements.append(bootscript.Echo(error))
        statements.extend(
            [
                bootscript.Echo("Cellular modem configuration"),
                bootscript.Prompt("apn", "Access point name (APN)"),
                bootscript.Prompt("credentials", "Network credentials", masked=True),
                bootscript.Chain(
                    f"{self._base_url()}/configure/cellular/submit"
                    "?apn=${apn}&credentials=${credentials}"
                ),
            ]
        )
        return bootscript.Script(tuple(statements))

    def _submit_wifi(self, fields: dict[str, str]) -> bootscript.Script:
        try:
            ssid = _require(fields, "ssid")
            passphrase = _require(fields, "passphrase")
        except MissingField as exc:
            self.runtime.log("portal_missing_field", field=exc.field)
            return self._wifi_form(error=str(exc))
        self.profile = ConnectivityProfile(
            ProfileKind.WIFI, ssid=ssid, passphrase=passphrase, status=ProfileStatus.CONNECTING
        )
        self.runtime.log("profile_stored", profile="wifi", ssid=ssid)
        self.runtime.schedule(0.0, self.attach_upstream)
        return self._retry_script(f"Connecting to wireless network {ssid}")

    def _submit_cellular(self, fields: dict[str, str]) -> bootscript.Script:
        try:
            apn = _require(fields, "apn")
        except MissingField as exc:
            self.runtime.log("portal_missing_field", field=exc.field)
            return self._cellular_form(error=str(exc))
        self.profile = ConnectivityProfile(
            ProfileKind.CELLULAR,
            apn=apn,
            credentials=fields.get("credentials", ""),
            status=ProfileStatus.CONNECTING,
        )
        self.runtime.log("profile_stored", profile="cellular", apn=apn)
        self.runtime.schedule(0.0, self.attach_upstream)
        return self._retry_script(f"Connecting via access point {apn}")

    def _submit_wired(self) -> bootscript.Script:
        self.profile = ConnectivityProfile(ProfileKind.WIRED, status=ProfileStatus.CONNECTING)
        self.runtime.log("profile_stored", profile="wired")
        self.runtime.schedule(0.0, self.attach_upstream)
        return self._retry_script("Bringing up the wired uplink")

    def _retry_script(self, message: str) -> bootscript.Script:
        # no boot statement: the client falls back into its boot flow and
        # re-runs DHCP once the upstream settles
        return bootscript.Script(
            (
                bootscript.Echo(message),
                bootscript.Echo("Retrying network boot"),
            )
        )

    def attach_upstream(self) -> ProfileStatus:
        """Bind the upstream interface per the stored profile, then re-probe
        so the mode can move to proxying."""
        try:
            self.runtime.upstream_attach(self.profile)
        except (NoSuchNetwork, AuthFailure) as exc:
            self.profile.status = ProfileStatus.FAILED
            self.profile.error = str(exc)
            self.runtime.log("upstream_attach_failed", error=str(exc))
            return self.profile.status
        self.profile.status = ProfileStatus.CONNECTED
        self.profile.error = ""
        self.upstream_connected = True
        self.runtime.log("upstream_attached", profile=self.profile.kind.value)
        self._probe_attempt = 0
        self._probe_step()
        return self.profile.status


def _require(fields: dict[str, str], name: str) -> str:
    value = fields.get(name, "").strip()
    if not value:
        raise MissingField(name)
    return value
