"""Gateway configuration and the chainloading bootloader image."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from ipaddress import IPv4Address, IPv4Network
from typing import Any

from sdboot import bootscript

BLOB_PAD_TO = 4096


class ConfigError(ValueError):
    pass


@dataclass
class GatewayConfig:
    static_ip: str = "192.168.77.1"
    subnet: str = "192.168.77.0/24"
    pool_start: str = "192.168.77.100"
    pool_end: str = "192.168.77.200"
    lease_seconds: int = 3600
    boot_filename: str = "boot.ipxe"
    cloud_domain: str = "boot.cloud.example"
    probe_timeout_ms: int = 2000
    probe_retries: int = 3
    dns_ttl: int = 30
    # service ports; defaults match the real protocols, tests and live mode
    # on unprivileged hosts override them
    dhcp_port: int = 67
    dhcp_client_port: int = 68
    tftp_port: int = 69
    dns_port: int = 53
    http_port: int = 80
    bootloader_blob: bytes = field(default=b"", repr=False)

    def __post_init__(self) -> None:
        self.validate()
        if not self.bootloader_blob:
            self.bootloader_blob = build_bootloader_blob(self.cloud_domain)

    def validate(self) -> None:
        if not self.boot_filename:
            raise ConfigError("boot_filename must be nonempty")
        try:
            net = IPv4Network(self.subnet)
            gateway = IPv4Address(self.static_ip)
            lo = IPv4Address(self.pool_start)
            hi = IPv4Address(self.pool_end)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if gateway not in net:
            raise ConfigError(f"gateway {gateway} outside subnet {net}")
        if lo not in net or hi not in net:
            raise ConfigError(f"lease pool {lo}-{hi} outside subnet {net}")
        if hi < lo:
            raise ConfigError(f"lease pool end {hi} below start {lo}")
        if lo <= gateway <= hi:
            raise ConfigError("lease pool must exclude the gateway's own address")
        if self.lease_seconds <= 0:
            raise ConfigError("lease_seconds must be positive")
        if self.probe_retries < 1:
            raise ConfigError("probe_retries must be at least 1")
        if self.probe_timeout_ms <= 0:
            raise ConfigError("probe_timeout_ms must be positive")

    @property
    def gateway_ip(self) -> IPv4Address:
        return IPv4Address(self.static_ip)

    @property
    def network(self) -> IPv4Network:
        return IPv4Network(self.subnet)

    @property
    def pool(self) -> list[IPv4Address]:
        lo, hi = IPv4Address(self.pool_start), IPv4Address(self.pool_end)
        return [IPv4Address(int(lo) + i) for i in range(int(hi) - int(lo) + 1)]

    @property
    def probe_timeout(self) -> float:
        return self.probe_timeout_ms / 1000.0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GatewayConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "bootloader_blob" in data and isinstance(data["bootloader_blob"], str):
            data = dict(data)
            data["bootloader_blob"] = data["bootloader_blob"].encode("utf-8")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        del out["bootloader_blob"]
        return out


def build_bootloader_blob(cloud_domain: str, pad_to: int = BLOB_PAD_TO) -> bytes:
    """Stand-in for the flashed bootloader image: an embedded chainload script,
    a NUL terminator, and zero padding up to a fixed image size."""
    script = bootscript.Script(
        (
            bootscript.Echo("network boot"),
            bootscript.Chain(f"http://{cloud_domain}/boot?mac=${{net0/mac}}"),
        )
    )
    text = bootscript.render_script(script).encode("utf-8")
    if len(text) + 1 > pad_to:
        raise ConfigError(f"bootloader script of {len(text)} bytes exceeds image size {pad_to}")
    return text + b"\x00" + b"\x00" * (pad_to - len(text) - 1)


def extract_blob_script(blob: bytes) -> str:
    """Recover the script text a bootloader image carries (everything before
    the first NUL)."""
    end = blob.find(b"\x00")
    if end < 0:
        end = len(blob)
    return blob[:end].decode("utf-8")
