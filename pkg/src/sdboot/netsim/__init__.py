"""Deterministic in-memory network simulation: clock, segments, NAT, nodes,
reliable streams, and per-node traces."""

from sdboot.netsim.clock import Clock, EventCapExceeded, Timer
from sdboot.netsim.net import (
    BROADCAST_IP,
    DROP,
    AuthFailure,
    CaptureRecord,
    Datagram,
    Detached,
    Interface,
    NatBoundary,
    NetError,
    Network,
    NoSuchNetwork,
    Segment,
    SegmentKind,
)
from sdboot.netsim.node import Node
from sdboot.netsim.router import RouterNode
from sdboot.netsim.stream import HttpClient, HttpServer, StreamPeer
from sdboot.netsim.trace import TraceEvent, TraceLog, merge_dump

__all__ = [
    "BROADCAST_IP",
    "DROP",
    "AuthFailure",
    "CaptureRecord",
    "Clock",
    "Datagram",
    "Detached",
    "EventCapExceeded",
    "HttpClient",
    "HttpServer",
    "Interface",
    "NatBoundary",
    "NetError",
    "Network",
    "NoSuchNetwork",
    "Node",
    "RouterNode",
    "Segment",
    "SegmentKind",
    "StreamPeer",
    "Timer",
    "TraceEvent",
    "TraceLog",
    "merge_dump",
]
