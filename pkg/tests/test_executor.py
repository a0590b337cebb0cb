from __future__ import annotations

import json
import socket
import struct

import pytest

from advdrive.executor import (
    ExecutorError,
    ExecutorTimeout,
    HilExecutor,
    ReferenceExecutor,
    SilExecutor,
    VersionMismatch,
    make_executor,
)
from advdrive.geom import Vec2
from advdrive.protocol import (
    PROTOCOL_VERSION,
    read_frame,
    send_frame,
)
from advdrive.rng import Rng
from advdrive.scenario import cutin_benign
from advdrive.world import ControlCommand, VehicleState, WorldState, step


@pytest.fixture()
def server():
    srv = ReferenceExecutor(idle_timeout=5.0)
    srv.start()
    yield srv
    srv.stop()


def connect(srv: ReferenceExecutor) -> socket.socket:
    sock = socket.create_connection(("127.0.0.1", srv.port), timeout=2.0)
    return sock


def test_sil_apply_is_exactly_step():
    rng = Rng(4)
    for _ in range(1000):
        w = WorldState(ego=VehicleState(
            position=Vec2(rng.uniform(-50, 50), rng.uniform(-50, 50)),
            heading=rng.uniform(-3.1, 3.1), speed=rng.uniform(0, 20),
            steer=rng.uniform(-0.6, 0.6)))
        cmd = ControlCommand(rng.uniform(-1, 1), rng.uniform(-1, 1))
        assert SilExecutor().apply(w, cmd).to_dict() == step(w, cmd).to_dict()


def test_sil_tick_increments():
    w = cutin_benign().build_world()
    w2 = SilExecutor().apply(w, ControlCommand())
    assert w2.tick == w.tick + 1


def test_handshake_accepted_on_matching_version(server):
    sock = connect(server)
    try:
        send_frame(sock, {"type": "HELLO", "version": PROTOCOL_VERSION})
        reply = read_frame(sock)
        assert reply == {"type": "HELLO", "version": PROTOCOL_VERSION}
    finally:
        sock.close()


def test_handshake_version_mismatch_rejected(server):
    sock = connect(server)
    try:
        send_frame(sock, {"type": "HELLO", "version": 99})
        reply = read_frame(sock)
        assert reply["type"] == "ERROR"
        assert reply["code"] == "version"
    finally:
        sock.close()


def test_hil_client_rejects_version_mismatch():
    # fake executor whose HELLO reply carries the wrong version
    import threading

    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen(1)
    port = listener.getsockname()[1]

    def fake_server():
        conn, _ = listener.accept()
        conn.settimeout(2.0)
        read_frame(conn)
        send_frame(conn, {"type": "HELLO", "version": 77})
        conn.close()

    t = threading.Thread(target=fake_server, daemon=True)
    t.start()
    hil = HilExecutor("127.0.0.1", port)
    try:
        with pytest.raises(VersionMismatch):
            hil.load(cutin_benign(), cutin_benign().resolve_map())
    finally:
        hil.close()
        listener.close()


def test_step_before_load_is_schema_error_and_keeps_session(server):
    sock = connect(server)
    try:
        send_frame(sock, {"type": "HELLO", "version": PROTOCOL_VERSION})
        read_frame(sock)
        send_frame(sock, {"type": "STEP", "tick": 0, "cmd": {}})
        reply = read_frame(sock)
        assert reply["type"] == "ERROR" and reply["code"] == "state"
        # session is still alive: a LOAD succeeds afterwards
        scen = cutin_benign()
        send_frame(sock, {"type": "LOAD", "scenario": scen.to_dict(),
                          "map": scen.resolve_map().to_dict()})
        assert read_frame(sock)["kind"] == "loaded"
    finally:
        sock.close()


def test_hundred_tick_episode_state_ticks_pair_with_steps(server):
    scen = cutin_benign()
    map_spec = scen.resolve_map()
    hil = HilExecutor("127.0.0.1", server.port)
    sil_world = scen.build_world(map_spec)
    hil_world = hil.load(scen, map_spec)
    try:
        for t in range(100):
            cmd = ControlCommand(0.5, 0.1 if t % 2 else -0.1)
            sil_world = step(sil_world, cmd)
            hil_world = hil.apply(hil_world, cmd)  # raises on tick mismatch
            assert hil_world.to_dict() == sil_world.to_dict()
    finally:
        hil.close()


def test_tick_mismatch_reported(server):
    scen = cutin_benign()
    hil = HilExecutor("127.0.0.1", server.port)
    world = hil.load(scen, scen.resolve_map())
    try:
        bad = WorldState(ego=world.ego, agents=world.agents, weather=world.weather,
                         tick=7, rng=world.rng, map=world.map)
        with pytest.raises(ExecutorError):
            hil.apply(bad, ControlCommand())
    finally:
        hil.close()


def test_apply_before_load_rejected():
    hil = HilExecutor("127.0.0.1", 1)
    with pytest.raises(ExecutorError):
        hil.apply(cutin_benign().build_world(), ControlCommand())


def test_framing_garbage_gets_error_then_close(server):
    sock = connect(server)
    try:
        sock.sendall(struct.pack(">I", 12) + b"\x00" * 12)
        reply = read_frame(sock)
        assert reply["type"] == "ERROR" and reply["code"] == "proto"
        # server closes after a framing error
        assert sock.recv(1) == b""
    finally:
        sock.close()


def test_fuzz_thousand_malformed_frames_never_hangs(server):
    rng = Rng(123)
    for i in range(500):
        sock = connect(server)
        sock.settimeout(2.0)
        try:
            kind = rng.randint(4)
            if kind == 0:  # random garbage bytes
                n = 1 + rng.randint(64)
                sock.sendall(bytes(rng.randint(256) for _ in range(n)))
            elif kind == 1:  # huge length prefix
                sock.sendall(struct.pack(">I", 0x7FFFFFFF))
            elif kind == 2:  # valid length, invalid JSON payload
                payload = bytes(rng.randint(256) for _ in range(16))
                sock.sendall(struct.pack(">I", 16) + payload)
            else:  # length prefix promising more bytes than are sent
                sock.sendall(struct.pack(">I", 64)
                             + json.dumps({"type": "NOPE"}).encode())
            # close our writer so a partial frame reads as EOF, not a stall
            try:
                sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass  # server already closed on us
            try:
                while True:
                    if not sock.recv(4096):
                        break
            except (socket.timeout, OSError):
                pass
        finally:
            sock.close()
    # schema-level junk on one connection: session survives each rejection
    sock = connect(server)
    try:
        send_frame(sock, {"type": "HELLO", "version": PROTOCOL_VERSION})
        read_frame(sock)
        for _ in range(500):
            send_frame(sock, {"type": "STEP", "tick": -1, "cmd": {"x": 1}})
            assert read_frame(sock)["type"] == "ERROR"
    finally:
        sock.close()
    # the server still serves a clean episode afterwards
    scen = cutin_benign()
    hil = HilExecutor("127.0.0.1", server.port)
    world = hil.load(scen, scen.resolve_map())
    world = hil.apply(world, ControlCommand(1.0, 0.0))
    assert world.tick == 1
    hil.close()


def test_hil_timeout_surfaces_as_executor_timeout():
    # a listener that accepts and stays silent
    silent = socket.socket()
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    port = silent.getsockname()[1]
    hil = HilExecutor("127.0.0.1", port, timeout=0.3)
    try:
        with pytest.raises((ExecutorTimeout, VersionMismatch)):
            hil.load(cutin_benign(), cutin_benign().resolve_map())
    finally:
        hil.close()
        silent.close()


def test_make_executor_parsing():
    assert isinstance(make_executor("sil"), SilExecutor)
    hil = make_executor("hil:127.0.0.1:9999")
    assert isinstance(hil, HilExecutor)
    assert hil.address == ("127.0.0.1", 9999)
    with pytest.raises(ValueError):
        make_executor("vil:1:2")
    with pytest.raises(ValueError):
        make_executor("hil:localhost")
