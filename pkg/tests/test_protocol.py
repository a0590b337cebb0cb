from __future__ import annotations

import math
import socket
import struct

import pytest
from hypothesis import given, strategies as st

from advdrive.geom import Vec2
from advdrive.protocol import (
    MAX_FRAME,
    PeerClosed,
    ProtocolError,
    command_from_wire,
    command_to_wire,
    encode_frame,
    float_to_hex,
    hex_to_float,
    read_frame,
    send_frame,
    world_from_wire,
    world_to_wire,
)
from advdrive.world import Agent, CutIn, VehicleState, WorldState, vehicle_of_class


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_hexfloat_roundtrip_bit_exact(x):
    back = hex_to_float(float_to_hex(x))
    assert struct.pack(">d", back) == struct.pack(">d", x)


def test_hexfloat_signed_zero_and_subnormals():
    for x in (0.0, -0.0, 5e-324, -5e-324, 1.7976931348623157e308):
        assert struct.pack(">d", hex_to_float(float_to_hex(x))) == struct.pack(">d", x)
    assert float_to_hex(-0.0) != float_to_hex(0.0)


def test_hex_to_float_rejects_bad_width():
    with pytest.raises(ValueError):
        hex_to_float("abcd")


def _pair():
    a, b = socket.socketpair()
    a.settimeout(2.0)
    b.settimeout(2.0)
    return a, b


def test_frame_roundtrip_over_socket():
    a, b = _pair()
    try:
        msg = {"type": "EVENT", "kind": "x", "payload": {"v": [1.5, "s"]}}
        send_frame(a, msg)
        assert read_frame(b) == msg
    finally:
        a.close()
        b.close()


def test_oversized_frame_rejected_on_encode():
    with pytest.raises(ProtocolError):
        encode_frame({"type": "EVENT", "blob": "x" * (MAX_FRAME + 1)})


def test_oversized_length_prefix_rejected_on_read():
    a, b = _pair()
    try:
        a.sendall(struct.pack(">I", MAX_FRAME + 1) + b"xx")
        with pytest.raises(ProtocolError):
            read_frame(b)
    finally:
        a.close()
        b.close()


def test_garbage_payload_rejected():
    a, b = _pair()
    try:
        payload = b"\xff\xfe not json"
        a.sendall(struct.pack(">I", len(payload)) + payload)
        with pytest.raises(ProtocolError):
            read_frame(b)
    finally:
        a.close()
        b.close()


def test_unknown_type_rejected():
    a, b = _pair()
    try:
        send_frame(a, {"type": "EVENT", "ok": 1})
        read_frame(b)
        payload = b'{"type": "WARP"}'
        a.sendall(struct.pack(">I", len(payload)) + payload)
        with pytest.raises(ProtocolError):
            read_frame(b)
    finally:
        a.close()
        b.close()


def test_eof_mid_frame_is_peer_closed():
    a, b = _pair()
    try:
        a.sendall(struct.pack(">I", 100) + b"only-part")
        a.close()
        with pytest.raises(PeerClosed):
            read_frame(b)
    finally:
        b.close()


def test_world_wire_roundtrip_bit_identical():
    agents = [
        Agent(state=vehicle_of_class("car", Vec2(1.0 / 3.0, -0.1), 0.7),
              behavior=CutIn(12.0, -2.0, 1.0), spawn=(1 / 3, -0.1, 0.7),
              cursor=math.pi),
    ]
    w = WorldState(ego=VehicleState(position=Vec2(0.1, 0.2), heading=-0.3,
                                    speed=7.77, steer=0.123456789),
                   agents=agents, tick=42)
    d = w.to_dict()
    assert world_from_wire(world_to_wire(d)) == d


def test_command_wire_roundtrip():
    d = {"throttle": -1.0 / 3.0, "steer_cmd": 0.7071067811865476,
         "source": "human"}
    assert command_from_wire(command_to_wire(d)) == d
