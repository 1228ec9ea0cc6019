"""Address leases for the standalone DHCP server."""

from __future__ import annotations

from dataclasses import dataclass
from ipaddress import IPv4Address


@dataclass
class Lease:
    ip: IPv4Address
    expiry: float


class LeaseTable:
    """MAC to address bindings. The same MAC re-asking before expiry keeps
    its address; expired addresses return to the pool."""

    def __init__(self, pool: list[IPv4Address], lease_seconds: float):
        self._pool = list(pool)
        self._lease_seconds = lease_seconds
        self._by_mac: dict[bytes, Lease] = {}

    def allocate(self, mac: bytes, now: float) -> IPv4Address | None:
        """Returns the MAC's address, extending or creating its lease, or
        None when every pool address is held by someone else."""
        held = self._by_mac.get(mac)
        if held is not None and held.expiry > now:
            held.expiry = now + self._lease_seconds
            return held.ip
        taken = {
            lease.ip
            for owner, lease in self._by_mac.items()
            if owner != mac and lease.expiry > now
        }
        # prefer the expired prior address when it's still free
        candidates = self._pool
        if held is not None and held.ip not in taken:
            candidates = [held.ip] + [ip for ip in self._pool if ip != held.ip]
        for ip in candidates:
            if ip not in taken:
                self._by_mac[mac] = Lease(ip, now + self._lease_seconds)
                return ip
        return None

    def lookup(self, mac: bytes, now: float) -> IPv4Address | None:
        held = self._by_mac.get(mac)
        if held is not None and held.expiry > now:
            return held.ip
        return None

    def active_count(self, now: float) -> int:
        return sum(1 for lease in self._by_mac.values() if lease.expiry > now)
