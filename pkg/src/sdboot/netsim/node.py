"""Node base class: owns interfaces, dispatches datagrams to port handlers.

Each node draws a private rng seeded from the network rng at creation time,
so node behaviour is deterministic given the harness seed and the order of
node construction.
"""

from __future__ import annotations

import random
from typing import Callable

from sdboot.netsim.net import BROADCAST_IP, Datagram, Interface, Network
from sdboot.netsim.trace import TraceLog

UdpHandler = Callable[[Interface, Datagram], None]


class Node:
    def __init__(self, network: Network, name: str):
        self.network = network
        self.name = name
        self.rng = random.Random(network.rng.getrandbits(64))
        self.interfaces: dict[str, Interface] = {}
        self._udp_handlers: dict[int, UdpHandler] = {}
        self._next_ephemeral = 49152
        self.trace = TraceLog(network.clock, name)

    # -- interface / address management ------------------------------------

    def add_interface(self, name: str, ips: list[str] | None = None) -> Interface:
        if name in self.interfaces:
            raise ValueError(f"interface {name!r} already exists on {self.name}")
        iface = Interface(self, name, ips)
        self.interfaces[name] = iface
        return iface

    def iface(self, name: str) -> Interface:
        return self.interfaces[name]

    def owns_ip(self, ip: str) -> bool:
        return any(ip in iface.ips for iface in self.interfaces.values())

    # -- sending ------------------------------------------------------------

    def send_udp(
        self,
        iface: Interface,
        src_port: int,
        dst_ip: str,
        dst_port: int,
        payload: bytes,
        src_ip: str | None = None,
    ) -> int:
        if src_ip is None:
            src_ip = iface.ips[0] if iface.ips else "0.0.0.0"
        dgram = Datagram(src_ip, src_port, dst_ip, dst_port, payload)
        return self.network.send(iface, dgram)

    # -- receiving -----------------------------------------------------------

    def bind_udp(self, port: int, handler: UdpHandler) -> None:
        if port in self._udp_handlers:
            raise ValueError(f"port {port} already bound on {self.name}")
        self._udp_handlers[port] = handler

    def unbind_udp(self, port: int) -> None:
        self._udp_handlers.pop(port, None)

    def ephemeral_port(self) -> int:
        port = self._next_ephemeral
        self._next_ephemeral += 1
        return port

    def on_datagram(self, iface: Interface, dgram: Datagram) -> None:
        """Called by the network when a datagram lands on one of our
        interfaces. Filters by destination address, then dispatches by port."""
        if not self._accepts(iface, dgram):
            return
        handler = self._udp_handlers.get(dgram.dst_port)
        if handler is not None:
            handler(iface, dgram)

    def _accepts(self, iface: Interface, dgram: Datagram) -> bool:
        if dgram.dst_ip == BROADCAST_IP:
            return True
        return dgram.dst_ip in iface.ips or self.owns_ip(dgram.dst_ip)

    def schedule(self, delay: float, fn: Callable[[], None]):
        return self.network.clock.schedule(delay, fn)

    @property
    def now(self) -> float:
        return self.network.clock.now

    def __repr__(self) -> str:
        return f"<Node {self.name}>"
