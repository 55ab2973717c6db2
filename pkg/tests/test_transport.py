import json
import socket
import threading

import pytest

from seco import transport as tp


def free_ports(count):
    socks = [socket.socket() for _ in range(count)]
    for s in socks:
        s.bind(("127.0.0.1", 0))
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def test_frame_encoding():
    frame = tp.Frame(1, 2, 2, 7, 30, b"abc")
    blob = frame.encode()
    assert len(blob) == frame.size == tp.HEADER_BYTES + 3
    assert tp.Frame.decode_header(blob[:tp.HEADER_BYTES]) == (3, 1, 2, 2, 7, 30)


def test_local_network_delivery_and_metering():
    net = tp.LocalNetwork(timeout=1)
    user, a = net.endpoint(0), net.endpoint(1)
    user.send(1, 2, 1, 5, b"x" * 10)
    user.send(1, 2, 1, 5, b"y")
    got = a.recv(0)
    assert got.payload == b"x" * 10 and got.layer == 1
    a.recv(0)
    a.send(0, 2, 0, 6, b"")
    user.recv(1)
    snap = user.meter.snapshot()["online"]
    assert snap["bytes_out"] == 11 + 2 * tp.HEADER_BYTES
    assert snap["bytes_in"] == tp.HEADER_BYTES
    assert snap["msgs"] == 3
    assert snap["rounds"] == 2  # out, out, in: direction changed once
    assert [d for d, _ in user.meter.transcript] == ["out", "out", "in"]
    user.meter.reset()
    assert user.meter.snapshot()["online"]["bytes_out"] == 0


def test_fifo_per_sender():
    net = tp.LocalNetwork(timeout=1)
    for i in range(20):
        net.endpoint(2).send(3, 1, i, 1)
    assert [net.endpoint(3).recv(2).layer for _ in range(20)] == list(range(20))


def test_timeout_and_close():
    net = tp.LocalNetwork(timeout=0.05)
    with pytest.raises(tp.TransportTimeout):
        net.endpoint(1).recv(2)
    net.endpoint(2).close()
    with pytest.raises(tp.ChannelClosed):
        net.endpoint(1).recv(2)
    with pytest.raises(tp.ChannelClosed):
        net.endpoint(2).send(1, 0, 0, 1)
    with pytest.raises(tp.TransportError):
        net.endpoint(1).send(1, 0, 0, 1)


def test_tcp_loopback_all_pairs():
    ports = free_ports(4)
    addresses = tp.parse_addresses(json.dumps({name: f"127.0.0.1:{p}" for name, p in zip(tp.PARTY_NAMES, ports)}))
    eps, errors = {}, []

    def open_ep(pid):
        try:
            eps[pid] = tp.TcpEndpoint(pid, addresses, timeout=5, connect_timeout=10)
        except Exception as exc:  # noqa: BLE001
            errors.append(exc)

    threads = [threading.Thread(target=open_ep, args=(p,)) for p in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert not errors
    try:
        for s in range(4):
            for r in range(4):
                if s != r:
                    eps[s].send(r, 1, s, r, bytes([s, r]) * 1000)
        for r in range(4):
            for s in range(4):
                if s != r:
                    f = eps[r].recv(s)
                    assert (f.sender, f.layer, f.kind, f.payload[:2]) == (s, s, r, bytes([s, r]))
        eps[3].close()
        with pytest.raises(tp.ChannelClosed):
            eps[0].recv(3, timeout=5)
    finally:
        for ep in eps.values():
            ep.close()


def test_metrics_report_json():
    rep = tp.MetricsReport("run", "seco", 3, {
        "user": {"online": {"bytes_out": 5, "bytes_in": 7}},
        "A": {"online": {"bytes_out": 7, "bytes_in": 5}},
    })
    again = tp.MetricsReport.from_json(rep.to_json())
    assert again == rep
    assert again.user_bytes() == 12
    assert again.total_bytes() == 12
    assert again.total("A", "online") == 7
