"""Simulated diskless network-boot client.

Drives the whole boot standard end to end: DHCP discovery with offer
merging, TFTP bootloader fetch, boot-script execution, DNS resolution,
HTTP chainloading, credential entry, artifact download with digest
verification, and a terminal Booted or Failed state. The client never
raises out of the event loop; every misbehavior lands in
session.failure_reason with the stage it happened at.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from ipaddress import IPv4Address
from urllib.parse import urlsplit

from sdboot import bootscript
from sdboot.netsim import Datagram, HttpClient, Interface, Network, Node
from sdboot.wire import dhcp, dns, tftp
from sdboot.wire.http import HttpRequest

DHCP_SERVER_PORT = 67
DHCP_CLIENT_PORT = 68
TFTP_PORT = 69
DNS_PORT = 53
HTTP_PORT = 80

OFFER_WINDOW = 0.5          # collect offers briefly before choosing
DISCOVER_ATTEMPTS = 4
FIRST_BACKOFF = 1.0         # doubles per attempt: 1, 2, 4, 8
REQUEST_TIMEOUT = 2.0
REQUEST_ATTEMPTS = 2
TFTP_TIMEOUT = 1.0
TFTP_RETRIES = 5
DNS_TIMEOUT = 2.0
DNS_RETRIES = 3
MAX_LOGIN_ATTEMPTS = 3
MAX_BOOT_CYCLES = 5         # re-entries into PXE (portal retry loops)
REENTRY_DELAY = 1.0


class BootState(enum.Enum):
    POWER_ON = "PowerOn"
    DISCOVERING = "Discovering"
    OFFER_SELECTED = "OfferSelected"
    FETCHING_BOOTLOADER = "FetchingBootloader"
    EXECUTING_SCRIPT = "ExecutingScript"
    AWAITING_CREDENTIALS = "AwaitingCredentials"
    AUTHENTICATING = "Authenticating"
    FETCHING_ARTIFACTS = "FetchingArtifacts"
    BOOTED = "Booted"
    FAILED = "Failed"


class FailureReason(enum.Enum):
    NO_OFFER = "NoOffer"
    TFTP_ERROR = "TftpError"
    SCRIPT_ERROR = "ScriptError"
    DNS_ERROR = "DnsError"
    HTTP_ERROR = "HttpError"
    AUTH_REJECTED = "AuthRejected"
    DIGEST_MISMATCH = "DigestMismatch"


class NoUsableOffer(Exception):
    pass


@dataclass(frozen=True)
class IpConfig:
    ip: str
    dns: str
    next_server: str
    boot_file: str


@dataclass
class CredentialSource:
    """Scripted login pairs plus answers for prompt/menu variables.

    Pairs are consumed one per login cycle; an empty list means the user
    walked away. Prompt answers keyed by variable name: a list is consumed
    front to back, a bare string repeats forever.
    """

    pairs: list[tuple[str, str]] = field(default_factory=list)
    answers: dict[str, object] = field(default_factory=dict)

    def next_pair(self) -> tuple[str, str] | None:
        if not self.pairs:
            return None
        return self.pairs.pop(0)

    def answer(self, var: str) -> str | None:
        value = self.answers.get(var)
        if value is None:
            return None
        if isinstance(value, list):
            if not value:
                return None
            return str(value.pop(0))
        return str(value)


@dataclass
class BootSession:
    mac: str
    state: BootState = BootState.POWER_ON
    ip_config: IpConfig | None = None
    os_id: str | None = None
    bootloader_digest: str | None = None
    artifacts: dict[str, str] = field(default_factory=dict)  # url -> sha256
    failed_stage: BootState | None = None
    failure_reason: FailureReason | None = None
    failure_detail: str = ""
    state_history: list[BootState] = field(default_factory=list)
    started_at: float = 0.0
    finished_at: float | None = None

    @property
    def boot_time(self) -> float | None:
        if self.finished_at is None:
            return None
        return self.finished_at - self.started_at

    def visited(self, state: BootState) -> bool:
        return state in self.state_history


def _has_boot_info(offer: dhcp.DhcpMessage) -> bool:
    return bool(offer.boot_file) or offer.option(dhcp.OPT_BOOTFILE) is not None


def _has_address(offer: dhcp.DhcpMessage) -> bool:
    return offer.your_ip != dhcp.ZERO_IP


def select_offer(offers: list[dhcp.DhcpMessage]) -> dhcp.DhcpMessage:
    """Pick or synthesize the offer to act on.

    Boot-bearing offers tagged with the PXE vendor class outrank untagged
    ones; a plain DHCP server slipping a boot file into its offer does not
    outbid the boot infrastructure. Among those, an offer carrying both an
    address and boot info wins outright. A boot-info-only offer (the proxy
    case) is merged with an addressful offer: address, lease and DNS from
    the addressful one, boot steering from the proxy. The address side
    prefers a pure address offer over a boot-bearing rival, so an offer
    that lost the boot contest does not get to supply identity instead.
    No boot info anywhere means nothing here can boot us.
    """
    boot_bearing = [o for o in offers if _has_boot_info(o)]
    if not boot_bearing:
        raise NoUsableOffer("no offer carries a boot file")
    if any(o.is_pxe_client() for o in boot_bearing):
        boot_bearing = [o for o in boot_bearing if o.is_pxe_client()]
    for offer in boot_bearing:
        if _has_address(offer):
            return offer
    addressful = [o for o in offers if _has_address(o)]
    if not addressful:
        raise NoUsableOffer("boot file offered but no offer carries an address")
    plain = [o for o in addressful if not _has_boot_info(o)]
    proxy, addr = boot_bearing[0], (plain or addressful)[0]
    merged_options = [
        opt
        for opt in addr.options
        if opt.code not in (dhcp.OPT_TFTP_SERVER, dhcp.OPT_BOOTFILE)
    ]
    for code in (dhcp.OPT_TFTP_SERVER, dhcp.OPT_BOOTFILE):
        payload = proxy.option(code)
        if payload is not None:
            merged_options.append(dhcp.DhcpOption(code, payload))
    return dhcp.DhcpMessage(
        op=addr.op,
        transaction_id=addr.transaction_id,
        client_mac=addr.client_mac,
        your_ip=addr.your_ip,
        server_ip=proxy.server_ip if proxy.server_ip != dhcp.ZERO_IP else addr.server_ip,
        boot_file=proxy.boot_file or addr.boot_file,
        options=merged_options,
    )


class ClientNode(Node):
    """One diskless machine. Construct, attach net0 to a segment, then
    start_boot(); the session reaches a terminal state as simulated time
    advances. run_boot() wraps that for single-client tests."""

    def __init__(self, network: Network, name: str, mac: str, creds: CredentialSource | None = None):
        super().__init__(network, name)
        self.mac = dhcp.format_mac(dhcp.parse_mac(mac))
        self.mac_bytes = dhcp.parse_mac(mac)
        self.creds = creds or CredentialSource()
        self.net0 = self.add_interface("net0")
        self.session: BootSession | None = None
        self._http: HttpClient | None = None
        self._timers: list = []
        self._reset_run_state()

    # -- lifecycle -----------------------------------------------------------

    def start_boot(self) -> BootSession:
        """Fresh session every call: a diskless machine keeps nothing."""
        self._teardown()
        self.session = BootSession(mac=self.mac, started_at=self.now)
        self._set_state(BootState.POWER_ON)
        self._login_attempts = 0
        self._boot_cycles = 0
        self._enter_discovery()
        return self.session

    def run_boot(self) -> BootSession:
        session = self.start_boot()
        self.network.run()
        return session

    def _reset_run_state(self) -> None:
        self._xid = 0
        self._attempt = 0
        self._offers: list[dhcp.DhcpMessage] = []
        self._selected: dhcp.DhcpMessage | None = None
        self._request_attempts = 0
        self._tftp_port: int | None = None
        self._tftp_expected = 1
        self._tftp_buf = bytearray()
        self._tftp_retries = 0
        self._tftp_last: bytes | None = None
        self._tftp_server: tuple[str, int] | None = None
        self._program: tuple[bootscript.Statement, ...] = ()
        self._pc = 0
        self._env = bootscript.VarEnv({"net0/mac": self.mac})
        self._menu_items: list[bootscript.MenuItem] = []
        self._pending_auth = False
        self._kernel_url: str | None = None
        self._dns_cache: dict[str, str] = {}
        self._dns_port: int | None = None
        self._login_attempts = getattr(self, "_login_attempts", 0)
        self._boot_cycles = getattr(self, "_boot_cycles", 0)

    def _teardown(self) -> None:
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()
        for port in (DHCP_CLIENT_PORT, self._tftp_port, self._dns_port):
            if port is not None:
                self.unbind_udp(port)
        if self._http is not None:
            self._http.close()
            self._http = None
        for ip in list(self.net0.ips):
            self.net0.drop_ip(ip)
        self._reset_run_state()

    def _later(self, delay: float, fn) -> None:
        timer = self.schedule(delay, fn)
        self._timers.append(timer)

    def _set_state(self, state: BootState) -> None:
        assert self.session is not None
        self.session.state = state
        self.session.state_history.append(state)
        self.trace.record("state", state=state.value)

    def _fail(self, reason: FailureReason, detail: str) -> None:
        session = self.session
        assert session is not None
        session.failed_stage = session.state
        session.failure_reason = reason
        session.failure_detail = detail
        session.finished_at = self.now
        self._set_state(BootState.FAILED)
        self.trace.record(
            "failure",
            stage=session.failed_stage.value,
            reason=reason.value,
            detail=detail,
        )
        self._teardown_keep_session()

    def _teardown_keep_session(self) -> None:
        session = self.session
        self._teardown()
        self.session = session

    # -- DHCP ----------------------------------------------------------------

    def _enter_discovery(self) -> None:
        self._set_state(BootState.DISCOVERING)
        self._attempt = 0
        self._offers = []
        if DHCP_CLIENT_PORT not in self._udp_handlers:
            self.bind_udp(DHCP_CLIENT_PORT, self._on_dhcp)
        self._send_discover()

    def _send_discover(self) -> None:
        self._attempt += 1
        self._xid = self.rng.getrandbits(32)
        msg = dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REQUEST,
            transaction_id=self._xid,
            client_mac=self.mac_bytes,
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.DISCOVER),
                dhcp.DhcpOption(dhcp.OPT_CLIENT_ID, b"\x01" + self.mac_bytes),
                dhcp.DhcpOption(
                    dhcp.OPT_PARAM_REQUEST,
                    bytes(
                        [
                            dhcp.OPT_SUBNET_MASK,
                            dhcp.OPT_ROUTER,
                            dhcp.OPT_DNS_SERVERS,
                            dhcp.OPT_TFTP_SERVER,
                            dhcp.OPT_BOOTFILE,
                        ]
                    ),
                ),
                dhcp.DhcpOption(dhcp.OPT_VENDOR_CLASS, b"PXEClient:Arch:00007"),
                dhcp.DhcpOption(dhcp.OPT_CLIENT_ARCH, b"\x00\x07"),
            ],
        )
        self.trace.record("dhcp_discover", attempt=self._attempt, xid=self._xid)
        self.send_udp(
            self.net0,
            DHCP_CLIENT_PORT,
            "255.255.255.255",
            DHCP_SERVER_PORT,
            dhcp.encode_dhcp(msg),
            src_ip="0.0.0.0",
        )
        self._later(OFFER_WINDOW, self._offer_window_closed)
        backoff = FIRST_BACKOFF * (2 ** (self._attempt - 1))
        self._later(backoff, self._discover_deadline)

    def _on_dhcp(self, iface: Interface, dgram: Datagram) -> None:
        try:
            msg = dhcp.decode_dhcp(dgram.payload)
        except dhcp.DhcpError as exc:
            self.trace.record("dhcp_ignored", reason=str(exc))
            return
        if msg.op != dhcp.Op.BOOT_REPLY or msg.client_mac != self.mac_bytes:
            return
        if msg.transaction_id != self._xid:
            return
        kind = msg.message_type()
        if kind == dhcp.MessageType.OFFER and self.session.state == BootState.DISCOVERING:
            self._offers.append(msg)
            self.trace.record(
                "dhcp_offer",
                from_ip=dgram.src_ip,
                your_ip=str(msg.your_ip),
                boot_file=msg.boot_file,
            )
        elif kind == dhcp.MessageType.ACK and self.session.state == BootState.OFFER_SELECTED:
            self._on_ack(msg)

    def _offer_window_closed(self) -> None:
        if self.session.state is BootState.DISCOVERING:
            self._try_select()

    def _discover_deadline(self) -> None:
        if self.session.state is not BootState.DISCOVERING:
            return
        self._try_select()
        if self.session.state is not BootState.DISCOVERING:
            return
        if self._attempt < DISCOVER_ATTEMPTS:
            self._send_discover()
        else:
            detail = (
                "no DHCP offer received"
                if not self._offers
                else "offers received but none bootable"
            )
            self._fail(FailureReason.NO_OFFER, detail)

    def _try_select(self) -> None:
        if not self._offers:
            return
        try:
            selected = select_offer(self._offers)
        except NoUsableOffer:
            return
        self._selected = selected
        self._set_state(BootState.OFFER_SELECTED)
        self._request_attempts = 0
        self._send_request()

    def _send_request(self) -> None:
        selected = self._selected
        self._request_attempts += 1
        options = [
            dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.REQUEST),
            dhcp.ip_option(dhcp.OPT_REQUESTED_IP, selected.your_ip),
            dhcp.DhcpOption(dhcp.OPT_CLIENT_ID, b"\x01" + self.mac_bytes),
            dhcp.DhcpOption(dhcp.OPT_VENDOR_CLASS, b"PXEClient:Arch:00007"),
        ]
        server_id = selected.option(dhcp.OPT_SERVER_ID)
        if server_id is not None:
            options.insert(2, dhcp.DhcpOption(dhcp.OPT_SERVER_ID, server_id))
        msg = dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REQUEST,
            transaction_id=selected.transaction_id,
            client_mac=self.mac_bytes,
            options=options,
        )
        self._xid = selected.transaction_id
        self.trace.record("dhcp_request", requested_ip=str(selected.your_ip))
        self.send_udp(
            self.net0,
            DHCP_CLIENT_PORT,
            "255.255.255.255",
            DHCP_SERVER_PORT,
            dhcp.encode_dhcp(msg),
            src_ip="0.0.0.0",
        )
        self._later(REQUEST_TIMEOUT, self._request_deadline)

    def _request_deadline(self) -> None:
        if self.session.state is not BootState.OFFER_SELECTED:
            return
        if self._request_attempts < REQUEST_ATTEMPTS:
            self._send_request()
        else:
            self._fail(FailureReason.NO_OFFER, "no ACK for our address request")

    def _on_ack(self, ack: dhcp.DhcpMessage) -> None:
        selected = self._selected
        your_ip = ack.your_ip if ack.your_ip != dhcp.ZERO_IP else selected.your_ip
        dns_opt = ack.option(dhcp.OPT_DNS_SERVERS) or selected.option(dhcp.OPT_DNS_SERVERS)
        dns_ip = str(IPv4Address(dns_opt[:4])) if dns_opt else ""
        tftp_opt = selected.option(dhcp.OPT_TFTP_SERVER)
        next_server = (
            tftp_opt.decode("ascii", "replace")
            if tftp_opt
            else str(selected.server_ip)
        )
        boot_file = selected.boot_file
        if not boot_file:
            opt67 = selected.option(dhcp.OPT_BOOTFILE)
            boot_file = opt67.decode("ascii", "replace") if opt67 else ""
        self.session.ip_config = IpConfig(
            ip=str(your_ip), dns=dns_ip, next_server=next_server, boot_file=boot_file
        )
        self.net0.add_ip(str(your_ip))
        self.trace.record(
            "dhcp_ack",
            ip=str(your_ip),
            dns=dns_ip,
            next_server=next_server,
            boot_file=boot_file,
        )
        self._fetch_bootloader()

    # -- TFTP ----------------------------------------------------------------

    def _fetch_bootloader(self) -> None:
        self._set_state(BootState.FETCHING_BOOTLOADER)
        cfg = self.session.ip_config
        self._tftp_port = self.ephemeral_port()
        self.bind_udp(self._tftp_port, self._on_tftp)
        self._tftp_server = (cfg.next_server, TFTP_PORT)
        self._tftp_expected = 1
        self._tftp_buf = bytearray()
        self._tftp_retries = 0
        packet = tftp.encode_tftp(tftp.ReadRequest(cfg.boot_file))
        self._tftp_last = packet
        self.trace.record("tftp_rrq", filename=cfg.boot_file, server=cfg.next_server)
        self.send_udp(self.net0, self._tftp_port, cfg.next_server, TFTP_PORT, packet)
        self._later(TFTP_TIMEOUT, self._tftp_deadline)

    def _tftp_deadline(self) -> None:
        if self.session.state is not BootState.FETCHING_BOOTLOADER:
            return
        self._tftp_retries += 1
        if self._tftp_retries >= TFTP_RETRIES:
            self._fail(FailureReason.TFTP_ERROR, "transfer timed out")
            return
        host, port = self._tftp_server
        self.send_udp(self.net0, self._tftp_port, host, port, self._tftp_last)
        self._later(TFTP_TIMEOUT, self._tftp_deadline)

    def _on_tftp(self, iface: Interface, dgram: Datagram) -> None:
        if self.session.state is not BootState.FETCHING_BOOTLOADER:
            return
        try:
            pkt = tftp.decode_tftp(dgram.payload)
        except tftp.TftpError as exc:
            self._fail(FailureReason.TFTP_ERROR, f"undecodable packet: {exc}")
            return
        if isinstance(pkt, tftp.Error):
            self._fail(
                FailureReason.TFTP_ERROR, f"server error {int(pkt.code)}: {pkt.message}"
            )
            return
        if not isinstance(pkt, tftp.Data):
            self._fail(FailureReason.TFTP_ERROR, f"unexpected {type(pkt).__name__}")
            return
        self._tftp_retries = 0
        if pkt.block == self._tftp_expected - 1:
            self._send_tftp_ack(pkt.block)  # duplicate data, re-ack
            return
        if pkt.block != self._tftp_expected:
            return
        self._tftp_buf += pkt.payload
        self.trace.record("tftp_data", block=pkt.block, size=len(pkt.payload))
        self._send_tftp_ack(pkt.block)
        self._tftp_expected += 1
        if pkt.is_final(tftp.DEFAULT_BLOCK_SIZE):
            blob = bytes(self._tftp_buf)
            self.session.bootloader_digest = hashlib.sha256(blob).hexdigest()
            self.trace.record("tftp_done", size=len(blob))
            self.unbind_udp(self._tftp_port)
            self._tftp_port = None
            self._run_bootloader(blob)

    def _send_tftp_ack(self, block: int) -> None:
        host, port = self._tftp_server
        packet = tftp.encode_tftp(tftp.Ack(block))
        self._tftp_last = packet
        self.send_udp(self.net0, self._tftp_port, host, port, packet)

    # -- script execution ----------------------------------------------------

    def _run_bootloader(self, blob: bytes) -> None:
        self._boot_cycles += 1
        if self._boot_cycles > MAX_BOOT_CYCLES:
            self._fail(FailureReason.SCRIPT_ERROR, "boot flow did not converge")
            return
        text = blob.split(b"\x00", 1)[0].decode("utf-8", "replace")
        self._set_state(BootState.EXECUTING_SCRIPT)
        self._load_script(text, source="bootloader")

    def _load_script(self, text: str, source: str) -> None:
        try:
            script = bootscript.parse_script(text)
            script.validate()
        except bootscript.ScriptError as exc:
            self._fail(FailureReason.SCRIPT_ERROR, f"{source}: {exc}")
            return
        self.trace.record("script_loaded", source=source, statements=len(script.statements))
        self._program = script.statements
        self._pc = 0
        self._menu_items = []
        self._step()

    def _step(self) -> None:
        while self.session.state not in (BootState.BOOTED, BootState.FAILED):
            if self._pc >= len(self._program):
                self._script_ended()
                return
            stmt = self._program[self._pc]
            self._pc += 1
            if not self._execute(stmt):
                return  # async continuation or terminal state

    def _execute(self, stmt: bootscript.Statement) -> bool:
        """Returns True to keep stepping synchronously."""
        try:
            if isinstance(stmt, bootscript.Echo):
                self.trace.record(
                    "echo",
                    text=bootscript.substitute_text(stmt.text, self._env, url_encode=False),
                )
                return True
            if isinstance(stmt, bootscript.Set):
                self._env.bind(
                    stmt.var,
                    bootscript.substitute_text(stmt.value, self._env, url_encode=False),
                )
                return True
            if isinstance(stmt, bootscript.MenuStart):
                self._menu_items = []
                return True
            if isinstance(stmt, bootscript.MenuItem):
                self._menu_items.append(stmt)
                return True
            if isinstance(stmt, bootscript.Choose):
                return self._do_choose(stmt)
            if isinstance(stmt, bootscript.Prompt):
                return self._do_prompt(stmt)
            if isinstance(stmt, bootscript.Login):
                return self._do_login()
            if isinstance(stmt, bootscript.Chain):
                self._do_chain(stmt)
                return False
            if isinstance(stmt, bootscript.Kernel):
                self._do_download(stmt.url, is_kernel=True, params=stmt.params)
                return False
            if isinstance(stmt, bootscript.Initrd):
                self._do_download(stmt.url, is_kernel=False, params="")
                return False
            if isinstance(stmt, bootscript.Boot):
                self._do_boot()
                return False
        except bootscript.UndefinedVariable as exc:
            self._fail(FailureReason.SCRIPT_ERROR, f"undefined variable {exc}")
            return False
        self._fail(FailureReason.SCRIPT_ERROR, f"unhandled statement {stmt!r}")
        return False

    def _script_ended(self) -> None:
        """A script that ends without boot hands control back to firmware:
        re-enter PXE after a beat. The connectivity portal's post-submit
        page relies on this to restart discovery against the new uplink."""
        self.trace.record("script_ended", reenter=True)
        self._soft_reset()
        self._later(REENTRY_DELAY, self._enter_discovery)

    def _soft_reset(self) -> None:
        """Back to an unconfigured NIC, keeping session identity and the
        login/cycle counters."""
        for timer in self._timers:
            timer.cancel()
        self._timers.clear()
        for port in (self._tftp_port, self._dns_port):
            if port is not None:
                self.unbind_udp(port)
        self._tftp_port = None
        self._dns_port = None
        if self._http is not None:
            self._http.close()
            self._http = None
        for ip in list(self.net0.ips):
            self.net0.drop_ip(ip)
        self._offers = []
        self._selected = None
        self._program = ()
        self._pc = 0
        self._env = bootscript.VarEnv({"net0/mac": self.mac})
        self._dns_cache = {}
        self._kernel_url = None

    def _do_choose(self, stmt: bootscript.Choose) -> bool:
        keys = [item.key for item in self._menu_items]
        answer = self.creds.answer(stmt.var)
        if answer is None:
            self._fail(
                FailureReason.SCRIPT_ERROR, f"no scripted choice for menu var {stmt.var!r}"
            )
            return False
        if answer not in keys:
            self._fail(
                FailureReason.SCRIPT_ERROR,
                f"choice {answer!r} not among menu items {keys}",
            )
            return False
        self._env.bind(stmt.var, answer)
        self.trace.record("menu_choice", var=stmt.var, choice=answer)
        return True

    def _do_prompt(self, stmt: bootscript.Prompt) -> bool:
        self._set_state(BootState.AWAITING_CREDENTIALS)
        answer = self.creds.answer(stmt.var)
        if answer is None:
            self._fail(
                FailureReason.SCRIPT_ERROR, f"no scripted answer for prompt {stmt.var!r}"
            )
            return False
        self._env.bind(stmt.var, answer)
        self.trace.record("prompt_answered", var=stmt.var, masked=stmt.masked)
        self._set_state(BootState.EXECUTING_SCRIPT)
        return True

    def _do_login(self) -> bool:
        self._set_state(BootState.AWAITING_CREDENTIALS)
        if self._login_attempts >= MAX_LOGIN_ATTEMPTS:
            self._fail(
                FailureReason.AUTH_REJECTED,
                f"gave up after {self._login_attempts} login attempts",
            )
            return False
        pair = self.creds.next_pair()
        if pair is None:
            reason = (
                FailureReason.AUTH_REJECTED
                if self._login_attempts
                else FailureReason.SCRIPT_ERROR
            )
            self._fail(reason, "no credentials left to try")
            return False
        self._login_attempts += 1
        username, password = pair
        self._env.bind("username", username)
        self._env.bind("password", password)
        self._pending_auth = True
        self.trace.record("login_entered", attempt=self._login_attempts, username=username)
        self._set_state(BootState.EXECUTING_SCRIPT)
        return True

    # -- network-bound script statements -------------------------------------

    def _do_chain(self, stmt: bootscript.Chain) -> None:
        url = bootscript.substitute_text(stmt.url, self._env, url_encode=True)
        if self._pending_auth:
            self._set_state(BootState.AUTHENTICATING)
            self._pending_auth = False
        self.trace.record("chain", url=url)
        self._http_get(
            url,
            on_body=lambda body, resp: self._chained_script(url, body),
            on_error=lambda reason: self._fail(FailureReason.HTTP_ERROR, f"{url}: {reason}"),
        )

    def _chained_script(self, url: str, body: bytes) -> None:
        if self.session.state is BootState.AUTHENTICATING:
            self._set_state(BootState.EXECUTING_SCRIPT)
        self._load_script(body.decode("utf-8", "replace"), source=url)

    def _do_download(self, url: str, is_kernel: bool, params: str) -> None:
        url = bootscript.substitute_text(url, self._env, url_encode=True)
        if self.session.state is not BootState.FETCHING_ARTIFACTS:
            self._set_state(BootState.FETCHING_ARTIFACTS)
        self.trace.record("download_start", url=url, artifact="kernel" if is_kernel else "initrd")

        def done(body: bytes, resp) -> None:
            digest = hashlib.sha256(body).hexdigest()
            expected = resp.header("X-Artifact-Digest")
            if expected is not None and expected != digest:
                self._fail(
                    FailureReason.DIGEST_MISMATCH,
                    f"{url}: artifact digest {digest[:12]}… does not match advertised {expected[:12]}…",
                )
                return
            self.session.artifacts[url] = digest
            if is_kernel:
                self._kernel_url = url
                self.session.os_id = _os_id_from_url(url)
            self.trace.record("download_done", url=url, size=len(body), digest=digest)
            self._step()

        self._http_get(
            url,
            on_body=done,
            on_error=lambda reason: self._fail(FailureReason.HTTP_ERROR, f"{url}: {reason}"),
        )

    def _do_boot(self) -> None:
        if self._kernel_url is None:
            self._fail(FailureReason.SCRIPT_ERROR, "boot with no kernel loaded")
            return
        self.session.finished_at = self.now
        self._set_state(BootState.BOOTED)
        self.trace.record(
            "booted",
            os_id=self.session.os_id,
            artifacts=len(self.session.artifacts),
            boot_time=round(self.session.boot_time, 6),
        )
        self._teardown_keep_session()

    # -- DNS + HTTP plumbing -------------------------------------------------

    def _http_get(self, url: str, on_body, on_error) -> None:
        parts = urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            self._fail(FailureReason.SCRIPT_ERROR, f"unsupported URL {url!r}")
            return
        port = parts.port or HTTP_PORT
        target = parts.path or "/"
        if parts.query:
            target += "?" + parts.query
        host = parts.hostname

        def resolved(ip: str) -> None:
            request = HttpRequest("GET", target, [("Host", host)])
            self.trace.record("http_request", host=host, ip=ip, target=target)

            def replied(response) -> None:
                self.trace.record(
                    "http_response", status=response.status, size=len(response.body)
                )
                if response.status != 200:
                    on_error(f"status {response.status}")
                    return
                on_body(response.body, response)

            if self._http is None:
                self._http = HttpClient(self, self.net0)
            self._http.request(ip, port, request, replied, on_error)

        self._resolve(host, resolved, on_error)

    def _resolve(self, host: str, on_ip, on_error) -> None:
        try:
            IPv4Address(host)
            on_ip(host)
            return
        except ValueError:
            pass
        if host in self._dns_cache:
            on_ip(self._dns_cache[host])
            return
        cfg = self.session.ip_config
        if cfg is None or not cfg.dns:
            self._fail(FailureReason.DNS_ERROR, f"no DNS server to resolve {host!r}")
            return
        if self._dns_port is None:
            self._dns_port = self.ephemeral_port()
            self.bind_udp(self._dns_port, self._on_dns)
        query_id = self.rng.getrandbits(16)
        state = {"tries": 0, "timer": None, "done": False}
        self._dns_pending = (query_id, host, on_ip, on_error, state)
        self._send_dns_query(query_id, host, cfg.dns, state)

    def _send_dns_query(self, query_id: int, host: str, server: str, state: dict) -> None:
        state["tries"] += 1
        self.trace.record("dns_query", name=host, server=server, attempt=state["tries"])
        self.send_udp(
            self.net0,
            self._dns_port,
            server,
            DNS_PORT,
            dns.encode_dns_query(dns.DnsQuery(query_id, host)),
        )

        def deadline() -> None:
            if state["done"]:
                return
            if state["tries"] >= DNS_RETRIES:
                state["done"] = True
                self._fail(
                    FailureReason.DNS_ERROR, f"no answer for {host!r} after {state['tries']} tries"
                )
                return
            self._send_dns_query(query_id, host, server, state)

        timer = self.schedule(DNS_TIMEOUT, deadline)
        self._timers.append(timer)
        state["timer"] = timer

    def _on_dns(self, iface: Interface, dgram: Datagram) -> None:
        pending = getattr(self, "_dns_pending", None)
        if pending is None:
            return
        query_id, host, on_ip, on_error, state = pending
        if state["done"]:
            return
        try:
            answer = dns.decode_dns_answer(dgram.payload)
        except dns.DnsError:
            return
        if answer.id != query_id:
            return
        state["done"] = True
        if state["timer"] is not None:
            state["timer"].cancel()
        if answer.rcode != dns.RCODE_OK or not answer.records:
            self.trace.record("dns_failure", name=host, rcode=answer.rcode)
            self._fail(
                FailureReason.DNS_ERROR, f"{host!r} did not resolve (rcode {answer.rcode})"
            )
            return
        ip = str(answer.records[0].address)
        self._dns_cache[host] = ip
        self.trace.record("dns_answer", name=host, address=ip, ttl=answer.records[0].ttl)
        on_ip(ip)


def _os_id_from_url(url: str) -> str | None:
    parts = urlsplit(url).path.split("/")
    try:
        idx = parts.index("files")
        return parts[idx + 1]
    except (ValueError, IndexError):
        return None
