"""Upstream router node for simulated topologies.

Plays the ISP/office side of the experiment: hands out addresses from its
own subnet over DHCP, resolves a static hosts map over DNS, and NATs traffic
from the inside segment toward the outside one. Clients behind it and the
services beyond it never share a broadcast domain.
"""

from __future__ import annotations

from ipaddress import IPv4Address, IPv4Network

from sdboot.netsim.net import Datagram, Interface, NatBoundary, Network
from sdboot.netsim.node import Node
from sdboot.wire import dhcp, dns

DHCP_SERVER_PORT = 67
DHCP_CLIENT_PORT = 68
DNS_PORT = 53


class RouterNode(Node):
    def __init__(
        self,
        network: Network,
        name: str,
        inside_ip: str,
        inside_subnet: str,
        external_ip: str,
        pool_start: str,
        pool_end: str,
        hosts: dict[str, str] | None = None,
        lease_seconds: int = 3600,
    ):
        super().__init__(network, name)
        self.inside_ip = IPv4Address(inside_ip)
        self.inside_subnet = IPv4Network(inside_subnet)
        self.lease_seconds = lease_seconds
        self.hosts = dict(hosts or {})
        self.inside = self.add_interface("inside", [inside_ip])
        self.outside = self.add_interface("outside", [external_ip])
        self.nat = NatBoundary(external_ip, [inside_subnet])
        self._pool = _ip_range(pool_start, pool_end)
        self._leases: dict[bytes, IPv4Address] = {}
        self.bind_udp(DHCP_SERVER_PORT, self._on_dhcp)
        self.bind_udp(DNS_PORT, self._on_dns)

    # -- forwarding ---------------------------------------------------------

    def on_datagram(self, iface: Interface, dgram: Datagram) -> None:
        if iface is self.inside:
            if dgram.is_broadcast or self.owns_ip(dgram.dst_ip):
                super().on_datagram(iface, dgram)
            elif not self.nat.is_inside_address(dgram.dst_ip):
                self.trace.record("nat_out", flow=dgram.summary())
                self.network.send(self.outside, self.nat.translate_out(dgram, self.now))
        elif iface is self.outside:
            translated = self.nat.translate_in(dgram, self.now)
            if translated is not None:
                self.network.send(self.inside, translated)
            # unsolicited inbound: dropped on the floor

    # -- DHCP ---------------------------------------------------------------

    def _on_dhcp(self, iface: Interface, dgram: Datagram) -> None:
        if iface is not self.inside:
            return
        try:
            msg = dhcp.decode_dhcp(dgram.payload)
        except dhcp.DhcpError:
            return
        kind = msg.message_type()
        if kind is dhcp.MessageType.DISCOVER:
            self._reply(iface, msg, dhcp.MessageType.OFFER)
        elif kind is dhcp.MessageType.REQUEST:
            server_id = msg.option(dhcp.OPT_SERVER_ID)
            if server_id is not None and IPv4Address(server_id) != self.inside_ip:
                return  # the client chose a different server
            self._reply(iface, msg, dhcp.MessageType.ACK)

    def _reply(self, iface: Interface, msg: dhcp.DhcpMessage, kind: dhcp.MessageType) -> None:
        lease = self._lease_for(msg.client_mac)
        if lease is None:
            self.trace.record("dhcp_pool_exhausted", mac=dhcp.format_mac(msg.client_mac))
            return
        reply = dhcp.DhcpMessage(
            op=dhcp.Op.BOOT_REPLY,
            transaction_id=msg.transaction_id,
            client_mac=msg.client_mac,
            your_ip=lease,
            options=[
                dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, kind),
                dhcp.ip_option(dhcp.OPT_SUBNET_MASK, self.inside_subnet.netmask),
                dhcp.ip_option(dhcp.OPT_ROUTER, self.inside_ip),
                dhcp.ip_option(dhcp.OPT_DNS_SERVERS, self.inside_ip),
                dhcp.u32_option(dhcp.OPT_LEASE_TIME, self.lease_seconds),
                dhcp.ip_option(dhcp.OPT_SERVER_ID, self.inside_ip),
            ],
        )
        self.trace.record("dhcp_reply", summary=reply.summary())
        self.send_udp(
            iface,
            DHCP_SERVER_PORT,
            "255.255.255.255",
            DHCP_CLIENT_PORT,
            dhcp.encode_dhcp(reply),
            src_ip=str(self.inside_ip),
        )

    def _lease_for(self, mac: bytes) -> IPv4Address | None:
        held = self._leases.get(mac)
        if held is not None:
            return held
        taken = set(self._leases.values())
        for candidate in self._pool:
            if candidate not in taken:
                self._leases[mac] = candidate
                return candidate
        return None

    # -- DNS ----------------------------------------------------------------

    def _on_dns(self, iface: Interface, dgram: Datagram) -> None:
        try:
            query = dns.decode_dns_query(dgram.payload)
        except dns.DnsError:
            return
        if query.qtype != dns.QTYPE_A:
            answer = dns.DnsAnswer(
                query.id, query.name, query.qtype, query.qclass, rcode=dns.RCODE_NOT_IMPLEMENTED
            )
        else:
            target = self.hosts.get(query.name.lower())
            if target is None:
                answer = dns.DnsAnswer(query.id, query.name, rcode=dns.RCODE_NXDOMAIN)
            else:
                record = dns.ARecord(query.name, 300, IPv4Address(target))
                answer = dns.DnsAnswer(query.id, query.name, records=(record,))
        self.send_udp(
            iface,
            DNS_PORT,
            dgram.src_ip,
            dgram.src_port,
            dns.encode_dns_answer(answer),
            src_ip=str(self.inside_ip),
        )


def _ip_range(start: str, end: str) -> list[IPv4Address]:
    lo, hi = IPv4Address(start), IPv4Address(end)
    if hi < lo:
        raise ValueError(f"pool end {end} below start {start}")
    return [IPv4Address(int(lo) + i) for i in range(int(hi) - int(lo) + 1)]

