"""Real-socket hosting for the gateway and the control plane.

The protocol cores are transport-agnostic; this module gives them actual
UDP sockets and HTTP listeners so the same code that runs under the
simulator can serve a lab network. Ports come from the configs, so tests
run everything on unprivileged ports while a deployment uses the real
ones (which needs the usual capabilities for 67/69/53/80).

The live gateway runs standalone: it has no programmable uplink to
attach, so the connectivity portal stores profiles but reports the
attach as failed. Proxy mode stays the simulator's territory.
"""

from __future__ import annotations

import logging
import random
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from sdboot.cloud import CloudApi, CloudService, Store
from sdboot.gateway.config import GatewayConfig
from sdboot.gateway.core import GatewayCore
from sdboot.netsim import NoSuchNetwork
from sdboot.wire.http import HttpRequest

log = logging.getLogger("sdboot.live")

RECV_SIZE = 65535


class PortBindFailure(Exception):
    def __init__(self, port: int, detail: str):
        super().__init__(f"cannot bind port {port}: {detail}")
        self.port = port


def _bind_udp(bind_ip: str, port: int, broadcast: bool = False) -> socket.socket:
    # no SO_REUSEADDR here: a second gateway on the same ports must fail
    # loudly, not silently split the traffic
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    if broadcast:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_BROADCAST, 1)
    try:
        sock.bind((bind_ip, port))
    except OSError as exc:
        sock.close()
        raise PortBindFailure(port, str(exc)) from exc
    return sock


class _HttpAdapter(BaseHTTPRequestHandler):
    """Feeds stdlib-parsed requests to a handle(HttpRequest) callable."""

    protocol_version = "HTTP/1.1"

    def _serve(self):
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        request = HttpRequest(
            method=self.command,
            target=self.path,
            headers=[(k, v) for k, v in self.headers.items()],
            body=body,
            client_ip=self.client_address[0],
        )
        response = self.server.handle(request)  # type: ignore[attr-defined]
        self.send_response(response.status)
        have_length = False
        for key, value in response.headers:
            if key.lower() == "content-length":
                have_length = True
            self.send_header(key, value)
        if not have_length:
            self.send_header("Content-Length", str(len(response.body)))
        self.end_headers()
        self.wfile.write(response.body)

    do_GET = do_POST = do_PUT = do_DELETE = _serve

    def log_message(self, fmt, *args):
        log.debug("http %s", fmt % args)


class _HttpService(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, bind_ip: str, port: int, handle):
        self.handle = handle
        try:
            super().__init__((bind_ip, port), _HttpAdapter)
        except OSError as exc:
            raise PortBindFailure(port, str(exc)) from exc


class LiveGateway:
    """The gateway core on real sockets: DHCP, TFTP, DNS, and the portal.

    Socket reader threads funnel every packet through one lock, so the
    core itself stays single-threaded exactly as it is under simulation.
    """

    def __init__(self, cfg: GatewayConfig, bind_ip: str = "0.0.0.0"):
        self.cfg = cfg
        self.bind_ip = bind_ip
        self.rng = random.Random()
        self._lock = threading.RLock()
        self._timers: set[threading.Timer] = set()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.core = GatewayCore(cfg, runtime=self)
        self._sockets: dict[int, socket.socket] = {}
        try:
            self._sockets[cfg.dhcp_port] = _bind_udp(bind_ip, cfg.dhcp_port, broadcast=True)
            self._sockets[cfg.tftp_port] = _bind_udp(bind_ip, cfg.tftp_port)
            self._sockets[cfg.dns_port] = _bind_udp(bind_ip, cfg.dns_port)
            self.portal = _HttpService(bind_ip, cfg.http_port, self._handle_portal)
        except PortBindFailure:
            self.close()
            raise

    # -- runtime contract ---------------------------------------------------

    @property
    def now(self) -> float:
        return time.monotonic()

    def schedule(self, delay: float, fn):
        def fire():
            self._timers.discard(timer)
            if self._stop.is_set():
                return
            with self._lock:
                fn()

        timer = threading.Timer(delay, fire)
        timer.daemon = True
        self._timers.add(timer)
        timer.start()
        return timer

    def send_lan(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None:
        sock = self._sockets.get(src_port)
        if sock is None:
            log.warning("no socket bound for source port %d", src_port)
            return
        try:
            sock.sendto(payload, (dst_ip, dst_port))
        except OSError as exc:
            log.warning("send to %s:%d failed: %s", dst_ip, dst_port, exc)

    def send_upstream(self, src_ip: str, src_port: int, dst_ip: str, dst_port: int, payload: bytes) -> None:
        log.debug("upstream send dropped (no live uplink): %s:%d", dst_ip, dst_port)

    def upstream_available(self) -> bool:
        return False

    def upstream_mac(self) -> bytes:
        return b"\x52\x54\x00\x00\x00\xfe"

    def upstream_attach(self, profile) -> None:
        raise NoSuchNetwork("this host has no managed uplink to attach")

    def add_upstream_ip(self, ip: str) -> None:
        log.info("upstream address %s (unused without a live uplink)", ip)

    def log(self, kind: str, **detail) -> None:
        log.info("gateway %s %s", kind, detail)

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        with self._lock:
            self.core.start()
        for port, sock in self._sockets.items():
            handler = {
                self.cfg.dhcp_port: self.core.on_dhcp,
                self.cfg.tftp_port: self.core.on_tftp,
                self.cfg.dns_port: self.core.on_dns,
            }[port]
            thread = threading.Thread(
                target=self._pump, args=(sock, handler), daemon=True,
                name=f"gateway-udp-{port}",
            )
            thread.start()
            self._threads.append(thread)
        thread = threading.Thread(
            target=self.portal.serve_forever, daemon=True, name="gateway-portal"
        )
        thread.start()
        self._threads.append(thread)

    def _pump(self, sock: socket.socket, handler) -> None:
        while not self._stop.is_set():
            try:
                raw, (ip, port) = sock.recvfrom(RECV_SIZE)
            except OSError:
                return
            with self._lock:
                try:
                    handler(raw, ip, port)
                except Exception:
                    log.exception("gateway handler failed")

    def _handle_portal(self, request: HttpRequest):
        with self._lock:
            return self.core.handle_portal(request)

    def close(self) -> None:
        self._stop.set()
        for timer in list(self._timers):
            timer.cancel()
        for sock in self._sockets.values():
            sock.close()
        if hasattr(self, "portal"):
            self.portal.shutdown()
            self.portal.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(3600):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.close()


class LiveCloud:
    """The control plane behind a real HTTP listener."""

    def __init__(
        self,
        store_root: str | Path,
        base_url: str,
        admin_token: str,
        port: int,
        bind_ip: str = "0.0.0.0",
        static_dir: str | Path | None = None,
        scrypt_n: int | None = None,
    ):
        kwargs = {} if scrypt_n is None else {"scrypt_n": scrypt_n}
        self.service = CloudService(Store(store_root), base_url=base_url, **kwargs)
        self.api = CloudApi(self.service, admin_token=admin_token, static_dir=static_dir)
        self._lock = threading.RLock()
        self.server = _HttpService(bind_ip, port, self._handle)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def _handle(self, request: HttpRequest):
        with self._lock:
            return self.api.handle(request)

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self.server.serve_forever, daemon=True, name="cloud-http"
        )
        self._thread.start()

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.service.store.close()

    def serve_forever(self) -> None:
        try:
            self.server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self.close()
