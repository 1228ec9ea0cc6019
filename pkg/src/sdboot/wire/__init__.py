"""Byte-exact codecs for the wire protocols the boot path speaks."""

from sdboot.wire import dhcp, dns, http, tftp

__all__ = ["dhcp", "dns", "http", "tftp"]
