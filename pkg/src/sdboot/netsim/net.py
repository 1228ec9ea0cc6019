"""Virtual network: segments, interfaces, datagram delivery, NAT, capture.

All delivery is in-memory and scheduled on the simulated clock. A fixed seed
fixes the latency samples, the loss pattern, and therefore the entire packet
schedule.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from ipaddress import IPv4Network
from typing import TYPE_CHECKING, Callable, Optional

from sdboot.netsim.clock import Clock

if TYPE_CHECKING:
    from sdboot.netsim.node import Node

BROADCAST_IP = "255.255.255.255"


class NetError(Exception):
    pass


class Detached(NetError):
    pass


class NoSuchNetwork(NetError):
    pass


class AuthFailure(NetError):
    pass


@dataclass(frozen=True)
class Datagram:
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes

    @property
    def is_broadcast(self) -> bool:
        return self.dst_ip == BROADCAST_IP

    def summary(self) -> str:
        return (
            f"{self.src_ip}:{self.src_port} -> {self.dst_ip}:{self.dst_port}"
            f" ({len(self.payload)} bytes)"
        )


class SegmentKind(enum.Enum):
    BROADCAST = "broadcast"
    POINT_TO_POINT = "p2p"
    WIFI = "wifi"
    CELLULAR = "cellular"


@dataclass
class Segment:
    id: str
    kind: SegmentKind
    latency: float = 0.001
    jitter: float = 0.0
    loss: float = 0.0
    ssid: str | None = None
    passphrase: str | None = None
    apn: str | None = None
    interfaces: list["Interface"] = field(default_factory=list)


class Interface:
    def __init__(self, node: "Node", name: str, ips: list[str] | None = None):
        self.node = node
        self.name = name
        self.ips: list[str] = list(ips or [])
        self.segment: Segment | None = None

    def add_ip(self, ip: str) -> None:
        if ip not in self.ips:
            self.ips.append(ip)

    def drop_ip(self, ip: str) -> None:
        if ip in self.ips:
            self.ips.remove(ip)

    def __repr__(self) -> str:
        return f"<Interface {self.node.name}/{self.name} ips={self.ips}>"


@dataclass(frozen=True)
class CaptureRecord:
    time: float
    segment: str
    sender: str  # node/interface path of the transmitting interface
    datagram: Datagram
    dropped: bool = False


# A fault hook sees every datagram at transmission time. Returning None keeps
# the datagram as-is; returning a Datagram substitutes it; returning DROP
# removes it from the air entirely.
DROP = object()
FaultHook = Callable[[Datagram, str], Optional[object]]


class Network:
    """One harness instance: a clock, segments, capture log, fault hooks."""

    def __init__(self, seed: int = 0):
        self.clock = Clock()
        self.rng = random.Random(seed)
        self.segments: dict[str, Segment] = {}
        self.capture: list[CaptureRecord] = []
        self.faults: list[FaultHook] = []
        self.capture_enabled = True

    # -- topology ----------------------------------------------------------

    def add_segment(
        self,
        segment_id: str,
        kind: SegmentKind = SegmentKind.BROADCAST,
        latency: float = 0.001,
        jitter: float = 0.0,
        loss: float = 0.0,
        ssid: str | None = None,
        passphrase: str | None = None,
        apn: str | None = None,
    ) -> Segment:
        if segment_id in self.segments:
            raise NetError(f"segment {segment_id!r} already exists")
        seg = Segment(segment_id, kind, latency, jitter, loss, ssid, passphrase, apn)
        self.segments[segment_id] = seg
        return seg

    def attach(self, iface: Interface, segment_id: str) -> None:
        seg = self.segments.get(segment_id)
        if seg is None:
            raise NoSuchNetwork(f"no segment {segment_id!r}")
        self._attach(iface, seg)

    def attach_wifi(self, iface: Interface, ssid: str, passphrase: str) -> Segment:
        for seg in self.segments.values():
            if seg.kind is SegmentKind.WIFI and seg.ssid == ssid:
                if seg.passphrase != passphrase:
                    raise AuthFailure(f"wrong passphrase for ssid {ssid!r}")
                self._attach(iface, seg)
                return seg
        raise NoSuchNetwork(f"no wireless network {ssid!r}")

    def attach_cellular(self, iface: Interface, apn: str) -> Segment:
        for seg in self.segments.values():
            if seg.kind is SegmentKind.CELLULAR and seg.apn == apn:
                self._attach(iface, seg)
                return seg
        raise NoSuchNetwork(f"no cellular network with apn {apn!r}")

    def _attach(self, iface: Interface, seg: Segment) -> None:
        if iface.segment is not None:
            self.detach(iface)
        seg.interfaces.append(iface)
        iface.segment = seg

    def detach(self, iface: Interface) -> None:
        if iface.segment is not None:
            iface.segment.interfaces.remove(iface)
            iface.segment = None

    # -- delivery ----------------------------------------------------------

    def send(self, iface: Interface, dgram: Datagram) -> int:
        """Transmit on the interface's segment. Unicast datagrams still reach
        every other interface (shared medium); receivers filter by address.
        Returns the number of scheduled deliveries."""
        seg = iface.segment
        if seg is None:
            raise Detached(f"{iface!r} is not attached")
        for hook in self.faults:
            result = hook(dgram, seg.id)
            if result is DROP:
                self._capture(seg, iface, dgram, dropped=True)
                return 0
            if result is not None:
                dgram = result  # type: ignore[assignment]
        self._capture(seg, iface, dgram)
        scheduled = 0
        for other in list(seg.interfaces):
            if other is iface:
                continue
            if seg.loss > 0 and self.rng.random() < seg.loss:
                self._capture(seg, iface, dgram, dropped=True)
                continue
            delay = seg.latency + (self.rng.random() * seg.jitter if seg.jitter else 0.0)
            self.clock.schedule(delay, _mk_delivery(other, dgram))
            scheduled += 1
        return scheduled

    def _capture(self, seg: Segment, iface: Interface, dgram: Datagram, dropped: bool = False) -> None:
        if self.capture_enabled:
            self.capture.append(
                CaptureRecord(self.clock.now, seg.id, f"{iface.node.name}/{iface.name}", dgram, dropped)
            )

    def add_fault(self, hook: FaultHook) -> None:
        self.faults.append(hook)

    def run(self, max_events: int = 2_000_000) -> float:
        return self.clock.run_until_idle(max_events)


def _mk_delivery(iface: Interface, dgram: Datagram):
    def deliver() -> None:
        if iface.segment is not None:
            iface.node.on_datagram(iface, dgram)

    return deliver


class NatBoundary:
    """Port-translating boundary between an inside network and the outside.

    Outbound flows allocate an external port and record the mapping; inbound
    datagrams without a mapping are dropped. Mappings idle out after `ttl`
    simulated seconds.
    """

    def __init__(
        self,
        external_ip: str,
        inside_subnets: list[str],
        port_base: int = 20000,
        ttl: float = 300.0,
    ):
        self.external_ip = external_ip
        self.inside_subnets = [IPv4Network(net) for net in inside_subnets]
        self._next_port = port_base
        self._out: dict[tuple[str, int], int] = {}
        self._in: dict[int, tuple[str, int]] = {}
        self._last_used: dict[int, float] = {}
        self.ttl = ttl

    def is_inside_address(self, ip: str) -> bool:
        from ipaddress import IPv4Address

        try:
            addr = IPv4Address(ip)
        except ValueError:
            return False
        return any(addr in net for net in self.inside_subnets)

    def translate_out(self, dgram: Datagram, now: float) -> Datagram:
        self._expire(now)
        key = (dgram.src_ip, dgram.src_port)
        port = self._out.get(key)
        if port is None:
            port = self._next_port
            self._next_port += 1
            self._out[key] = port
            self._in[port] = key
        self._last_used[port] = now
        return replace(dgram, src_ip=self.external_ip, src_port=port)

    def translate_in(self, dgram: Datagram, now: float) -> Datagram | None:
        self._expire(now)
        if dgram.dst_ip != self.external_ip:
            return None
        mapping = self._in.get(dgram.dst_port)
        if mapping is None:
            return None  # unsolicited inbound: dropped
        self._last_used[dgram.dst_port] = now
        inside_ip, inside_port = mapping
        return replace(dgram, dst_ip=inside_ip, dst_port=inside_port)

    def active_mappings(self) -> int:
        return len(self._in)

    def _expire(self, now: float) -> None:
        stale = [port for port, t in self._last_used.items() if now - t > self.ttl]
        for port in stale:
            key = self._in.pop(port)
            self._out.pop(key, None)
            self._last_used.pop(port, None)
