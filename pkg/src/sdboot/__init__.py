"""Software-defined network boot stack.

A boot gateway (DHCP/ProxyDHCP, TFTP, captive DNS, connectivity portal),
a provisioning control plane (OS definitions, users, boot authentication,
audit log), a scripted bootloader dialect connecting the two, and a
deterministic network simulation harness that drives diskless clients
through the whole flow.
"""

__version__ = "0.1.0"
