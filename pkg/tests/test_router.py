"""Upstream router behavior: DHCP leases, hosts-map DNS, NAT forwarding."""

from ipaddress import IPv4Address

from sdboot.netsim import HttpClient, HttpServer, Network, Node, RouterNode
from sdboot.wire import dhcp, dns
from sdboot.wire.http import HttpRequest, text_response

CLOUD_IP = "198.51.100.10"
CLOUD_DOMAIN = "boot.cloud.example"


def build_topology(seed=5):
    net = Network(seed=seed)
    net.add_segment("wan")
    net.add_segment("internet")
    router = RouterNode(
        net,
        "router",
        inside_ip="10.0.50.1",
        inside_subnet="10.0.50.0/24",
        external_ip="203.0.113.77",
        pool_start="10.0.50.100",
        pool_end="10.0.50.120",
        hosts={CLOUD_DOMAIN: CLOUD_IP},
    )
    net.attach(router.inside, "wan")
    net.attach(router.outside, "internet")
    cloud = Node(net, "cloud")
    cloud_if = cloud.add_interface("eth0", [CLOUD_IP])
    net.attach(cloud_if, "internet")
    client = Node(net, "pc")
    client_if = client.add_interface("eth0")
    net.attach(client_if, "wan")
    return net, router, cloud, cloud_if, client, client_if


def test_dhcp_offer_and_ack_assign_pool_address():
    net, router, _, _, client, client_if = build_topology()
    offers = []

    def on_reply(iface, dgram):
        offers.append(dhcp.decode_dhcp(dgram.payload))

    client.bind_udp(68, on_reply)
    mac = dhcp.parse_mac("52:54:00:aa:bb:01")
    discover = dhcp.DhcpMessage(
        op=dhcp.Op.BOOT_REQUEST,
        transaction_id=0x1111,
        client_mac=mac,
        options=[dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.DISCOVER)],
    )
    client.send_udp(client_if, 68, "255.255.255.255", 67, dhcp.encode_dhcp(discover))
    net.run()
    assert len(offers) == 1
    offer = offers[0]
    assert offer.message_type() is dhcp.MessageType.OFFER
    assert offer.your_ip == IPv4Address("10.0.50.100")
    assert offer.option(dhcp.OPT_DNS_SERVERS) == IPv4Address("10.0.50.1").packed

    request = dhcp.DhcpMessage(
        op=dhcp.Op.BOOT_REQUEST,
        transaction_id=0x1111,
        client_mac=mac,
        options=[
            dhcp.u8_option(dhcp.OPT_MESSAGE_TYPE, dhcp.MessageType.REQUEST),
            dhcp.ip_option(dhcp.OPT_REQUESTED_IP, offer.your_ip),
            dhcp.ip_option(dhcp.OPT_SERVER_ID, IPv4Address("10.0.50.1")),
        ],
    )
    client.send_udp(client_if, 68, "255.255.255.255", 67, dhcp.encode_dhcp(request))
    net.run()
    assert offers[-1].message_type() is dhcp.MessageType.ACK
    assert offers[-1].your_ip == offer.your_ip


def test_lease_is_stable_per_mac():
    net, router, _, _, client, client_if = build_topology()
    mac = dhcp.parse_mac("52:54:00:aa:bb:02")
    assert router._lease_for(mac) == router._lease_for(mac)
    other = dhcp.parse_mac("52:54:00:aa:bb:03")
    assert router._lease_for(other) != router._lease_for(mac)


def test_hosts_map_dns_resolution():
    net, router, _, _, client, client_if = build_topology()
    client_if.add_ip("10.0.50.100")
    answers = []
    client.bind_udp(5353, lambda iface, d: answers.append(dns.decode_dns_answer(d.payload)))
    query = dns.DnsQuery(id=9, name=CLOUD_DOMAIN)
    client.send_udp(client_if, 5353, "10.0.50.1", 53, dns.encode_dns_query(query))
    net.run()
    assert answers[0].rcode == dns.RCODE_OK
    assert answers[0].records[0].address == IPv4Address(CLOUD_IP)

    client.send_udp(
        client_if, 5353, "10.0.50.1", 53,
        dns.encode_dns_query(dns.DnsQuery(id=10, name="unknown.example")),
    )
    net.run()
    assert answers[-1].rcode == dns.RCODE_NXDOMAIN


def test_http_through_nat_round_trip():
    net, router, cloud, cloud_if, client, client_if = build_topology()
    client_if.add_ip("10.0.50.100")
    seen_ips = []

    def handler(request):
        seen_ips.append(request.client_ip)
        return text_response(200, "cloud says hi")

    HttpServer(cloud, cloud_if, 80, handler)
    http = HttpClient(client, client_if)
    replies, errors = [], []
    http.request("198.51.100.10", 80, HttpRequest("GET", "/ping"), replies.append, errors.append)
    net.run()
    assert errors == []
    assert replies[0].body == b"cloud says hi"
    # the cloud must see the NAT's external address, not the private one
    assert seen_ips == ["203.0.113.77"]


def test_inside_traffic_is_not_forwarded_outside():
    net, router, cloud, cloud_if, client, client_if = build_topology()
    client_if.add_ip("10.0.50.100")
    peer = Node(net, "peer")
    peer_if = peer.add_interface("eth0", ["10.0.50.101"])
    net.attach(peer_if, "wan")
    heard = []
    peer.bind_udp(9, lambda iface, d: heard.append(d))
    client.send_udp(client_if, 9, "10.0.50.101", 9, b"local")
    net.run()
    assert len(heard) == 1
    outside_capture = [rec for rec in net.capture if rec.segment == "internet"]
    assert outside_capture == []
