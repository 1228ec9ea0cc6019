"""Boot gateway: DHCP (standalone and proxy), TFTP bootloader serving,
captive DNS, and the connectivity-configuration portal."""

from sdboot.gateway.config import (
    ConfigError,
    GatewayConfig,
    build_bootloader_blob,
    extract_blob_script,
)
from sdboot.gateway.core import (
    ConnectivityProfile,
    GatewayCore,
    GatewayMode,
    MissingField,
    ProfileKind,
    ProfileStatus,
)
from sdboot.gateway.leases import LeaseTable

__all__ = [
    "ConfigError",
    "ConnectivityProfile",
    "GatewayConfig",
    "GatewayCore",
    "GatewayMode",
    "LeaseTable",
    "MissingField",
    "ProfileKind",
    "ProfileStatus",
    "build_bootloader_blob",
    "extract_blob_script",
]
