"""Simulation harness checks: clock ordering, delivery, loss determinism,
NAT translation, wireless attachment, and the reliable stream layer."""

import pytest

from sdboot.netsim import (
    BROADCAST_IP,
    AuthFailure,
    Clock,
    Datagram,
    Detached,
    EventCapExceeded,
    HttpClient,
    HttpServer,
    NatBoundary,
    Network,
    NoSuchNetwork,
    Node,
    SegmentKind,
)
from sdboot.wire.http import HttpRequest, text_response


def make_lan(seed=0, loss=0.0, node_count=3):
    net = Network(seed=seed)
    net.add_segment("lan", SegmentKind.BROADCAST, loss=loss)
    nodes = []
    for i in range(node_count):
        node = Node(net, f"pc{i}")
        iface = node.add_interface("eth0", [f"10.0.0.{i + 1}"])
        net.attach(iface, "lan")
        nodes.append(node)
    return net, nodes


class TestClock:
    def test_equal_time_fires_in_insertion_order(self):
        clock = Clock()
        fired = []
        clock.schedule(1.0, lambda: fired.append("first"))
        clock.schedule(1.0, lambda: fired.append("second"))
        clock.run_until_idle()
        assert fired == ["first", "second"]

    def test_empty_queue_returns_immediately(self):
        clock = Clock()
        assert clock.run_until_idle() == 0.0

    def test_self_rescheduling_event_trips_cap(self):
        clock = Clock()

        def again():
            clock.schedule(0.001, again)

        clock.schedule(0.0, again)
        with pytest.raises(EventCapExceeded):
            clock.run_until_idle(max_events=10_000)

    def test_advance_fires_only_due_events(self):
        clock = Clock()
        fired = []
        clock.schedule(1.0, lambda: fired.append(1))
        clock.schedule(2.0, lambda: fired.append(2))
        assert clock.advance(1.5) == 1
        assert fired == [1]
        assert clock.now == 1.5

    def test_advance_backwards_rejected(self):
        clock = Clock()
        clock.advance(5.0)
        with pytest.raises(ValueError):
            clock.advance(1.0)

    def test_cancelled_timer_does_not_fire(self):
        clock = Clock()
        fired = []
        timer = clock.schedule(1.0, lambda: fired.append(1))
        timer.cancel()
        clock.run_until_idle()
        assert fired == []


class TestDelivery:
    def test_broadcast_on_three_interface_segment_reaches_two(self):
        net, nodes = make_lan(node_count=3)
        got = []
        for node in nodes:
            node.bind_udp(67, lambda iface, d, name=node.name: got.append(name))
        scheduled = nodes[0].send_udp(
            nodes[0].iface("eth0"), 68, BROADCAST_IP, 67, b"discover"
        )
        net.run()
        assert scheduled == 2
        assert sorted(got) == ["pc1", "pc2"]

    def test_total_loss_delivers_nothing(self):
        net, nodes = make_lan(loss=1.0)
        got = []
        nodes[1].bind_udp(9, lambda iface, d: got.append(d))
        scheduled = nodes[0].send_udp(nodes[0].iface("eth0"), 9, "10.0.0.2", 9, b"x")
        net.run()
        assert scheduled == 0
        assert got == []

    def test_fixed_seed_reproduces_drop_pattern(self):
        def run(seed):
            net, nodes = make_lan(seed=seed, loss=0.5, node_count=2)
            got = []
            nodes[1].bind_udp(9, lambda iface, d: got.append(d.payload))
            for i in range(1000):
                nodes[0].send_udp(
                    nodes[0].iface("eth0"), 9, "10.0.0.2", 9, i.to_bytes(2, "big")
                )
            net.run()
            return got

        first, second = run(seed=7), run(seed=7)
        assert first == second
        assert 0 < len(first) < 1000
        assert run(seed=8) != first

    def test_unicast_filtered_by_address(self):
        net, nodes = make_lan()
        got = []
        for node in nodes:
            node.bind_udp(9, lambda iface, d, name=node.name: got.append(name))
        nodes[0].send_udp(nodes[0].iface("eth0"), 9, "10.0.0.2", 9, b"x")
        net.run()
        assert got == ["pc1"]

    def test_send_while_detached_raises(self):
        net = Network()
        node = Node(net, "loner")
        iface = node.add_interface("eth0", ["10.0.0.1"])
        with pytest.raises(Detached):
            node.send_udp(iface, 9, "10.0.0.2", 9, b"x")

    def test_no_cross_segment_leakage(self):
        net = Network()
        net.add_segment("a")
        net.add_segment("b")
        sender = Node(net, "sender")
        net.attach(sender.add_interface("eth0", ["10.0.0.1"]), "a")
        listener = Node(net, "listener")
        net.attach(listener.add_interface("eth0", ["10.0.1.1"]), "b")
        heard = []
        listener.on_datagram = lambda iface, d: heard.append(d)
        sender.send_udp(sender.iface("eth0"), 9, BROADCAST_IP, 9, b"x")
        net.run()
        assert heard == []
        assert all(rec.segment == "a" for rec in net.capture)


class TestWirelessAttachment:
    def setup_method(self):
        self.net = Network()
        self.net.add_segment(
            "wifi", SegmentKind.WIFI, ssid="office", passphrase="hunter2"
        )
        self.net.add_segment("cell", SegmentKind.CELLULAR, apn="internet.apn")
        self.node = Node(self.net, "gw")
        self.iface = self.node.add_interface("wlan0")

    def test_attach_with_correct_credentials(self):
        seg = self.net.attach_wifi(self.iface, "office", "hunter2")
        assert seg.id == "wifi"
        assert self.iface.segment is seg

    def test_wrong_passphrase_rejected(self):
        with pytest.raises(AuthFailure):
            self.net.attach_wifi(self.iface, "office", "wrong")
        assert self.iface.segment is None

    def test_unknown_ssid(self):
        with pytest.raises(NoSuchNetwork):
            self.net.attach_wifi(self.iface, "nonexistent", "x")

    def test_cellular_attach_by_apn(self):
        seg = self.net.attach_cellular(self.iface, "internet.apn")
        assert seg.id == "cell"
        with pytest.raises(NoSuchNetwork):
            self.net.attach_cellular(self.iface, "other.apn")


class TestNat:
    def test_round_trip(self):
        nat = NatBoundary("203.0.113.5", ["192.168.77.0/24"])
        out = nat.translate_out(
            Datagram("192.168.77.100", 49152, "198.51.100.9", 80, b"req"), now=0.0
        )
        assert out.src_ip == "203.0.113.5"
        assert out.src_port != 49152
        reply = Datagram("198.51.100.9", 80, out.src_ip, out.src_port, b"resp")
        back = nat.translate_in(reply, now=0.1)
        assert back is not None
        assert (back.dst_ip, back.dst_port) == ("192.168.77.100", 49152)

    def test_unsolicited_inbound_dropped(self):
        nat = NatBoundary("203.0.113.5", ["192.168.77.0/24"])
        probe = Datagram("198.51.100.9", 80, "203.0.113.5", 31337, b"scan")
        assert nat.translate_in(probe, now=0.0) is None

    def test_same_source_port_on_two_hosts_gets_distinct_external_ports(self):
        nat = NatBoundary("203.0.113.5", ["192.168.77.0/24"])
        a = nat.translate_out(
            Datagram("192.168.77.100", 49152, "198.51.100.9", 80, b""), now=0.0
        )
        b = nat.translate_out(
            Datagram("192.168.77.101", 49152, "198.51.100.9", 80, b""), now=0.0
        )
        assert a.src_port != b.src_port

    def test_stable_mapping_for_same_flow(self):
        nat = NatBoundary("203.0.113.5", ["192.168.77.0/24"])
        dgram = Datagram("192.168.77.100", 49152, "198.51.100.9", 80, b"")
        assert nat.translate_out(dgram, 0.0).src_port == nat.translate_out(dgram, 1.0).src_port

    def test_idle_mappings_expire(self):
        nat = NatBoundary("203.0.113.5", ["192.168.77.0/24"], ttl=300.0)
        out = nat.translate_out(
            Datagram("192.168.77.100", 49152, "198.51.100.9", 80, b""), now=0.0
        )
        assert nat.active_mappings() == 1
        reply = Datagram("198.51.100.9", 80, "203.0.113.5", out.src_port, b"")
        assert nat.translate_in(reply, now=400.0) is None
        assert nat.active_mappings() == 0


def http_pair(loss=0.0, seed=3):
    net = Network(seed=seed)
    net.add_segment("lan", loss=loss)
    server_node = Node(net, "server")
    s_if = server_node.add_interface("eth0", ["10.0.0.1"])
    net.attach(s_if, "lan")
    client_node = Node(net, "client")
    c_if = client_node.add_interface("eth0", ["10.0.0.2"])
    net.attach(c_if, "lan")
    return net, server_node, s_if, client_node, c_if


class TestStreamHttp:
    def test_request_response_round_trip(self):
        net, server_node, s_if, client_node, c_if = http_pair()

        def handler(request):
            assert request.path == "/hello"
            assert request.client_ip == "10.0.0.2"
            return text_response(200, f"hi {request.query['name']}")

        HttpServer(server_node, s_if, 80, handler)
        client = HttpClient(client_node, c_if)
        replies, errors = [], []
        client.request(
            "10.0.0.1", 80,
            HttpRequest("GET", "/hello?name=alice"),
            replies.append, errors.append,
        )
        net.run()
        assert errors == []
        assert len(replies) == 1
        assert replies[0].status == 200
        assert replies[0].body == b"hi alice"

    def test_large_body_crosses_segment_boundary(self):
        net, server_node, s_if, client_node, c_if = http_pair()
        blob = bytes(range(256)) * 300  # ~75 KiB, dozens of segments

        def handler(request):
            assert request.body == blob
            return _bytes_response(blob)

        HttpServer(server_node, s_if, 80, handler)
        client = HttpClient(client_node, c_if)
        replies, errors = [], []
        client.request(
            "10.0.0.1", 80,
            HttpRequest("POST", "/upload", body=blob),
            replies.append, errors.append,
        )
        net.run()
        assert errors == []
        assert replies[0].body == blob

    def test_delivery_despite_heavy_loss(self):
        net, server_node, s_if, client_node, c_if = http_pair(loss=0.4, seed=11)
        HttpServer(server_node, s_if, 80, lambda req: text_response(200, "made it"))
        client = HttpClient(client_node, c_if)
        replies, errors = [], []
        client.request(
            "10.0.0.1", 80,
            HttpRequest("GET", "/x"),
            replies.append, errors.append,
        )
        net.run()
        assert errors == []
        assert replies[0].body == b"made it"

    def test_unreachable_server_reports_error(self):
        net, server_node, s_if, client_node, c_if = http_pair(loss=1.0)
        client = HttpClient(client_node, c_if)
        replies, errors = [], []
        client.request(
            "10.0.0.1", 80,
            HttpRequest("GET", "/x"),
            replies.append, errors.append,
        )
        net.run()
        assert replies == []
        assert len(errors) == 1

    def test_handler_exception_becomes_500(self):
        net, server_node, s_if, client_node, c_if = http_pair()

        def handler(request):
            raise RuntimeError("boom")

        HttpServer(server_node, s_if, 80, handler)
        client = HttpClient(client_node, c_if)
        replies, errors = [], []
        client.request(
            "10.0.0.1", 80,
            HttpRequest("GET", "/x"),
            replies.append, errors.append,
        )
        net.run()
        assert replies[0].status == 500


def _bytes_response(blob):
    from sdboot.wire.http import HttpResponse

    return HttpResponse(200, [("Content-Type", "application/octet-stream")], blob)
