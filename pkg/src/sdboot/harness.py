"""Glue between the protocol cores and the simulated network.

GatewayNode hosts the boot-gateway core on a two-interface node and, once
an uplink is attached, bridges the client segment with the upstream one so
clients can reach the upstream DHCP server, the NAT router, and the cloud
beyond it. CloudNode hosts the control plane behind an in-sim HTTP server.
build_world() assembles the reference deployment: clients and gateway on a
local segment, a NAT router upstream, the cloud on the far side.
"""

from __future__ import annotations

import random

from dataclasses import dataclass, field

from sdboot.client import ClientNode, CredentialSource
from sdboot.cloud import CloudApi, CloudService, Store
from sdboot.gateway.config import GatewayConfig
from sdboot.gateway.core import ConnectivityProfile, GatewayCore, ProfileKind
from sdboot.netsim import (
    Datagram,
    HttpServer,
    Interface,
    Network,
    NoSuchNetwork,
    RouterNode,
    SegmentKind,
)
from sdboot.netsim.node import Node
from sdboot.wire import dhcp, tftp

LAN_ID = "lan"
UPLINK_ID = "uplink"
INTERNET_ID = "internet"

ROUTER_INSIDE_IP = "10.0.50.1"
ROUTER_INSIDE_SUBNET = "10.0.50.0/24"
ROUTER_POOL = ("10.0.50.100", "10.0.50.200")
ROUTER_EXTERNAL_IP = "203.0.113.77"
CLOUD_IP = "198.51.100.10"

DEFAULT_WIFI = ("corp-uplink", "correct-battery-staple")
DEFAULT_APN = "broadband.example"


class GatewayNode(Node):
    """Two-homed node running the gateway core. The lan interface serves
    clients; the wan interface joins whatever uplink the portal configures.
    While both sides are attached the node forwards frames between them,
    which is what lets addressless proxy boots use upstream addresses."""

    def __init__(
        self,
        network: Network,
        name: str,
        cfg: GatewayConfig,
        mac: str = "52:54:00:00:00:fe",
        wired_segment: str | None = None,
    ):
        super().__init__(network, name)
        self.cfg = cfg
        self.mac_bytes = dhcp.parse_mac(mac)
        self.wired_segment = wired_segment
        self.lan = self.add_interface("lan", [str(cfg.gateway_ip)])
        self.wan = self.add_interface("wan")
        self.core = GatewayCore(cfg, runtime=self)
        self.bind_udp(cfg.dhcp_port, self._dhcp_in)
        self.bind_udp(cfg.dhcp_client_port, self._dhcp_client_in)
        self.bind_udp(cfg.tftp_port, self._tftp_in)
        self.bind_udp(cfg.dns_port, self._dns_in)
        self.portal = HttpServer(self, self.lan, cfg.http_port, self.core.handle_portal)

    def start(self) -> None:
        self.core.start()

    # -- local protocol dispatch --------------------------------------------

    def _dhcp_in(self, iface: Interface, dgram: Datagram) -> None:
        if iface is self.wan:
            return  # serving DHCP on the uplink is the upstream's job
        self.core.on_dhcp(dgram.payload, dgram.src_ip, dgram.src_port)

    def _dhcp_client_in(self, iface: Interface, dgram: Datagram) -> None:
        if iface is self.wan:
            self.core.on_dhcp(dgram.payload, dgram.src_ip, dgram.src_port, upstream=True)

    def _tftp_in(self, iface: Interface, dgram: Datagram) -> None:
        self.core.on_tftp(dgram.payload, dgram.src_ip, dgram.src_port)

    def _dns_in(self, iface: Interface, dgram: Datagram) -> None:
        self.core.on_dns(dgram.payload, dgram.src_ip, dgram.src_port)

    # -- bridging ------------------------------------------------------------

    def on_datagram(self, iface: Interface, dgram: Datagram) -> None:
        super().on_datagram(iface, dgram)
        if self.lan.segment is None or self.wan.segment is None:
            return
        if dgram.is_broadcast or not self.owns_ip(dgram.dst_ip):
            other = self.wan if iface is self.lan else self.lan
            self.network.send(other, dgram)

    # -- gateway runtime contract -------------------------------------------

    def send_lan(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None:
        self.send_udp(self.lan, src_port, dst_ip, dst_port, payload, src_ip=src_ip)

    def send_upstream(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None:
        if self.wan.segment is None:
            self.trace.record("upstream_send_dropped", dst=dst_ip)
            return
        self.send_udp(self.wan, src_port, dst_ip, dst_port, payload, src_ip=src_ip)

    def upstream_available(self) -> bool:
        return self.wan.segment is not None

    def upstream_mac(self) -> bytes:
        return self.mac_bytes

    def upstream_attach(self, profile: ConnectivityProfile) -> None:
        if profile.kind is ProfileKind.WIFI:
            self.network.attach_wifi(self.wan, profile.ssid, profile.passphrase)
        elif profile.kind is ProfileKind.CELLULAR:
            self.network.attach_cellular(self.wan, profile.apn)
        else:
            if self.wired_segment is None:
                raise NoSuchNetwork("no cable present on the wan port")
            self.network.attach(self.wan, self.wired_segment)

    def add_upstream_ip(self, ip: str) -> None:
        self.wan.add_ip(ip)

    def log(self, kind: str, **detail) -> None:
        self.trace.record(kind, **detail)


class CloudNode(Node):
    """Control plane reachable over the simulated internet."""

    def __init__(self, network: Network, name: str, ip: str, api: CloudApi):
        super().__init__(network, name)
        self.api = api
        self.eth0 = self.add_interface("eth0", [ip])
        self.server = HttpServer(self, self.eth0, 80, self._handle)

    def _handle(self, request):
        response = self.api.handle(request)
        self.trace.record(
            "http", method=request.method, target=request.target, status=response.status
        )
        return response


class RogueBootServer(Node):
    """Hostile DHCP+TFTP talker planted on the client segment.

    Answers every DISCOVER with a full offer that steers boot at itself
    and serves a bootloader of its own making. It does not present the
    PXE vendor class, which is exactly the gap the client's selection
    policy exploits: with the gateway in-path its tagged offer outranks
    this one. A rogue that forges the tag too is out of scope here; the
    defense claimed is for the deployment where the gateway sits between
    clients and everything else, not for an arbitrary attacker.
    """

    def __init__(
        self,
        network: Network,
        name: str = "rogue",
        ip: str = "192.168.77.66",
        boot_file: str = "evil.ipxe",
        payload: bytes = b"#!ipxe\necho not your bootloader\n",
    ):
        super().__init__(network, name)
        self.ip = ip
        self.boot_file = boot_file
        self.payload = payload
        self.eth0 = self.add_interface("eth0", [ip])
        self._hosts: dict[bytes, str] = {}
        self._next_host = 200
        self.bind_udp(67, self._on_dhcp)
        self.bind_udp(69, self._on_tftp)

    def _lease_for(self, mac: bytes) -> str:
        if mac not in self._hosts:
            self._hosts[mac] = f"192.168.77.{self._next_host}"
            self._next_host += 1
        return self._hosts[mac]

    def _on_dhcp(self, iface: Interface, dgram: Datagram) -> None:
        try:
            msg = dhcp.decode_dhcp(dgram.payload)
        except dhcp.DhcpError:
            return
        if msg.op is not dhcp.Op.BOOT_REQUEST:
            return
        me = dhcp.IPv4Address(self.ip)
        kind = msg.message_type()
        if kind is dhcp.MessageType.REQUEST:
            if msg.option(dhcp.OPT_SERVER_ID) != me.packed:
                return  # the client chose someone else; stay quiet
            reply_kind = dhcp.MessageType.ACK
        elif kind is dhcp.MessageType.DISCOVER:
            reply_kind = dhcp.MessageType.OFFER
        else:
            return
        reply = dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REPLY,
            transaction_id=msg.transaction_id,
            client_mac=msg.client_mac,
            your_ip=dhcp.IPv4Address(self._lease_for(msg.client_mac)),
            server_ip=me,
            boot_file=self.boot_file,
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, reply_kind),
                dhcp.ip_option(dhcp.OPT_SUBNET_MASK, dhcp.IPv4Address("255.255.255.0")),
                dhcp.ip_option(dhcp.OPT_ROUTER, me),
                dhcp.ip_option(dhcp.OPT_DNS_SERVERS, me),
                dhcp.u32_option(dhcp.OPT_LEASE_TIME, 600),
                dhcp.ip_option(dhcp.OPT_SERVER_ID, me),
                dhcp.DhcpOption(dhcp.OPT_TFTP_SERVER, self.ip.encode("ascii")),
                dhcp.DhcpOption(dhcp.OPT_BOOTFILE, self.boot_file.encode("ascii")),
            ],
        )
        self.trace.record("rogue_offer", mac=dhcp.format_mac(msg.client_mac))
        self.send_udp(self.eth0, 67, "255.255.255.255", 68, dhcp.encode_dhcp(reply), src_ip=self.ip)

    def _on_tftp(self, iface: Interface, dgram: Datagram) -> None:
        try:
            pkt = tftp.decode_tftp(dgram.payload)
        except tftp.TftpError:
            return
        if isinstance(pkt, tftp.ReadRequest):
            self.trace.record("rogue_tftp", filename=pkt.filename)
            self._send_block(dgram.src_ip, dgram.src_port, 1)
        elif isinstance(pkt, tftp.Ack):
            total = (len(self.payload) // tftp.DEFAULT_BLOCK_SIZE) + 1
            if pkt.block < total:
                self._send_block(dgram.src_ip, dgram.src_port, pkt.block + 1)

    def _send_block(self, host: str, port: int, block: int) -> None:
        lo = (block - 1) * tftp.DEFAULT_BLOCK_SIZE
        chunk = self.payload[lo:lo + tftp.DEFAULT_BLOCK_SIZE]
        packet = tftp.encode_tftp(tftp.Data(block, chunk))
        self.send_udp(self.eth0, 69, host, port, packet, src_ip=self.ip)


@dataclass
class World:
    """One assembled deployment plus handles to everything in it."""

    network: Network
    gateway: GatewayNode
    router: RouterNode | None = None
    cloud: CloudNode | None = None
    service: CloudService | None = None
    api: CloudApi | None = None
    clients: list[ClientNode] = field(default_factory=list)

    def add_client(self, name: str, mac: str, creds: CredentialSource | None = None) -> ClientNode:
        client = ClientNode(self.network, name, mac, creds)
        self.network.attach(client.net0, LAN_ID)
        self.clients.append(client)
        return client

    def add_rogue(self, **kwargs) -> RogueBootServer:
        rogue = RogueBootServer(self.network, **kwargs)
        self.network.attach(rogue.eth0, LAN_ID)
        return rogue

    def restart_control_plane(self) -> None:
        """Tear down the control-plane process and bring up a fresh one over
        the same store, as an operator restart would. In-memory state is
        gone; whatever the store kept is what the new instance knows."""
        if self.service is None or self.api is None or self.cloud is None:
            raise RuntimeError("this world has no control plane")
        root = self.service.store.root
        self.service.store.close()
        service = CloudService(
            Store(root),
            base_url=self.service.base_url,
            scrypt_n=self.service.scrypt_n,
            now_fn=lambda: self.network.clock.now,
            rng=random.Random(self.network.rng.getrandbits(64)),
        )
        api = CloudApi(service, admin_token=self.api.admin_token, static_dir=self.api.static_dir)
        self.cloud.api = api
        self.service = service
        self.api = api

    def start(self) -> None:
        self.gateway.start()

    def run(self, max_events: int = 2_000_000) -> None:
        self.network.run(max_events)


def build_world(
    seed: int = 0,
    upstream: str | None = "wired",
    gateway_attached: bool = True,
    store_root=None,
    admin_token: str = "sim-admin-token",
    cloud_domain: str = "boot.cloud.example",
    wifi_ssid: str = DEFAULT_WIFI[0],
    wifi_passphrase: str = DEFAULT_WIFI[1],
    apn: str = DEFAULT_APN,
    lan_latency: float = 0.001,
    lan_loss: float = 0.0,
    scrypt_n: int = 2**4,
    gateway_cfg: GatewayConfig | None = None,
) -> World:
    """The reference topology.

    upstream: "wired", "wifi", "cellular", or None for an isolated site.
    gateway_attached: whether the uplink is already connected at power-on;
    False models the out-of-box state the connectivity portal exists for.
    A cloud (and the router in front of it) exists whenever there is an
    upstream; store_root is required then.
    """
    network = Network(seed=seed)
    network.add_segment(LAN_ID, SegmentKind.BROADCAST, latency=lan_latency, loss=lan_loss)

    cfg = gateway_cfg or GatewayConfig(cloud_domain=cloud_domain)
    wired = UPLINK_ID if upstream == "wired" else None
    gateway = GatewayNode(network, "gateway", cfg, wired_segment=wired)
    network.attach(gateway.lan, LAN_ID)

    world = World(network=network, gateway=gateway)
    if upstream is None:
        return world

    if upstream == "wired":
        network.add_segment(UPLINK_ID, SegmentKind.BROADCAST)
    elif upstream == "wifi":
        network.add_segment(
            UPLINK_ID, SegmentKind.WIFI, ssid=wifi_ssid, passphrase=wifi_passphrase
        )
    elif upstream == "cellular":
        network.add_segment(UPLINK_ID, SegmentKind.CELLULAR, apn=apn)
    else:
        raise ValueError(f"unknown upstream kind {upstream!r}")
    network.add_segment(INTERNET_ID, SegmentKind.BROADCAST)

    router = RouterNode(
        network,
        "router",
        inside_ip=ROUTER_INSIDE_IP,
        inside_subnet=ROUTER_INSIDE_SUBNET,
        external_ip=ROUTER_EXTERNAL_IP,
        pool_start=ROUTER_POOL[0],
        pool_end=ROUTER_POOL[1],
        hosts={cloud_domain: CLOUD_IP},
    )
    # plain attach skips credential checks: the router's inside port IS the
    # uplink network's infrastructure side
    network.attach(router.inside, UPLINK_ID)
    network.attach(router.outside, INTERNET_ID)

    if store_root is None:
        raise ValueError("store_root is required when an upstream exists")
    service = CloudService(
        Store(store_root),
        base_url=f"http://{cloud_domain}",
        scrypt_n=scrypt_n,
        now_fn=lambda: network.clock.now,
        rng=random.Random(network.rng.getrandbits(64)),
    )
    api = CloudApi(service, admin_token=admin_token)
    cloud = CloudNode(network, "cloud", CLOUD_IP, api)
    network.attach(cloud.eth0, INTERNET_ID)

    if gateway_attached:
        network.attach(gateway.wan, UPLINK_ID)

    world.router = router
    world.cloud = cloud
    world.service = service
    world.api = api
    return world

