"""Executor wire protocol: length-prefixed JSON frames over TCP.

Frame layout: 4-byte big-endian payload length, then UTF-8 JSON. Message
types: HELLO{version}, LOAD{scenario, map}, STEP{tick, cmd}, STATE{tick,
state}, EVENT{kind, payload}, ERROR{code, text}, BYE.

Floats that must survive the wire bit-exactly (vehicle poses, speeds,
behavior cursors) are carried as 16-hex-digit big-endian IEEE-754 bit
patterns, never as decimal text. The same protocol serves the HIL tier and
the (unshipped) vehicle tier.
"""

from __future__ import annotations

import json
import socket
import struct

PROTOCOL_VERSION = 1
MAX_FRAME = 8 * 1024 * 1024  # bytes; anything larger is a protocol error

MESSAGE_TYPES = ("HELLO", "LOAD", "STEP", "STATE", "EVENT", "ERROR", "BYE")


class ProtocolError(Exception):
    """Framing-level violation: the byte stream is not a well-formed frame."""


class PeerClosed(Exception):
    pass


def float_to_hex(x: float) -> str:
    return struct.pack(">d", x).hex()


def hex_to_float(text: str) -> float:
    raw = bytes.fromhex(text)
    if len(raw) != 8:
        raise ValueError(f"expected 16 hex digits, got {text!r}")
    return struct.unpack(">d", raw)[0]


def encode_frame(msg: dict) -> bytes:
    payload = json.dumps(msg, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    return struct.pack(">I", len(payload)) + payload


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise PeerClosed("connection closed mid-frame" if buf else "connection closed")
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> dict:
    """Read one frame; raises ProtocolError on malformed bytes, PeerClosed on EOF.

    The caller owns the socket timeout; a timeout surfaces as socket.timeout.
    """
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds {MAX_FRAME}")
    payload = _recv_exact(sock, length)
    try:
        msg = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"undecodable frame: {e}") from e
    if not isinstance(msg, dict) or msg.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown or missing message type: {msg!r:.80}")
    return msg


def send_frame(sock: socket.socket, msg: dict) -> None:
    sock.sendall(encode_frame(msg))


# --- bit-exact state payloads --------------------------------------------------

def vehicle_to_wire(d: dict) -> dict:
    """Hex-encode the float fields of a serialized VehicleState."""
    out = dict(d)
    out["position"] = [float_to_hex(d["position"][0]), float_to_hex(d["position"][1])]
    for key in ("heading", "speed", "steer", "length", "width"):
        out[key] = float_to_hex(d[key])
    return out


def vehicle_from_wire(d: dict) -> dict:
    out = dict(d)
    out["position"] = [hex_to_float(d["position"][0]), hex_to_float(d["position"][1])]
    for key in ("heading", "speed", "steer", "length", "width"):
        out[key] = hex_to_float(d[key])
    return out


def world_to_wire(world_dict: dict) -> dict:
    """Encode a WorldState.to_dict() for STATE payloads (poses bit-exact)."""
    agents = []
    for a in world_dict["agents"]:
        agents.append({
            "state": vehicle_to_wire(a["state"]),
            "behavior": a["behavior"],
            "spawn": [float_to_hex(v) for v in a["spawn"]],
            "cursor": None if a["cursor"] is None else float_to_hex(a["cursor"]),
        })
    return {
        "tick": world_dict["tick"],
        "ego": vehicle_to_wire(world_dict["ego"]),
        "agents": agents,
        "weather": world_dict["weather"],
        "rng_state": world_dict["rng_state"],
    }


def world_from_wire(msg: dict) -> dict:
    agents = []
    for a in msg["agents"]:
        agents.append({
            "state": vehicle_from_wire(a["state"]),
            "behavior": a["behavior"],
            "spawn": [hex_to_float(v) for v in a["spawn"]],
            "cursor": None if a["cursor"] is None else hex_to_float(a["cursor"]),
        })
    return {
        "tick": msg["tick"],
        "ego": vehicle_from_wire(msg["ego"]),
        "agents": agents,
        "weather": msg["weather"],
        "rng_state": msg["rng_state"],
    }


def command_to_wire(cmd_dict: dict) -> dict:
    return {"throttle": float_to_hex(cmd_dict["throttle"]),
            "steer_cmd": float_to_hex(cmd_dict["steer_cmd"]),
            "source": cmd_dict["source"]}


def command_from_wire(d: dict) -> dict:
    return {"throttle": hex_to_float(d["throttle"]),
            "steer_cmd": hex_to_float(d["steer_cmd"]),
            "source": d["source"]}
