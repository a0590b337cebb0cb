"""Executor tiers: in-process SIL, wire-protocol HIL client, and the
reference executor server that stands in for external hardware.

Both tiers run the identical dynamics, and the protocol transports floats as
bit patterns, so a lock-step episode produces bit-identical traces through
either path.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass

from .protocol import (
    PROTOCOL_VERSION,
    PeerClosed,
    ProtocolError,
    command_from_wire,
    command_to_wire,
    read_frame,
    send_frame,
    world_from_wire,
    world_to_wire,
)
from .scenario import ScenarioSpec
from .world import DT, ControlCommand, MapSpec, WorldState, step


class ExecutorError(RuntimeError):
    pass


class ExecutorTimeout(ExecutorError):
    pass


class VersionMismatch(ExecutorError):
    pass


class SilExecutor:
    """Software-in-the-loop: apply() is exactly the world-sim step, in process."""

    name = "sil"

    def load(self, scenario: ScenarioSpec, map_spec: MapSpec) -> WorldState:
        return scenario.build_world(map_spec)

    def apply(self, world: WorldState, cmd: ControlCommand, dt: float = DT) -> WorldState:
        return step(world, cmd, dt)

    def close(self) -> None:
        pass


class HilExecutor:
    """Hardware-in-the-loop client: lock-step STEP/STATE over TCP.

    The remote side owns stepping; apply() sends the command for the current
    tick and decodes the returned state, which must be bit-identical to what
    SIL would produce. The passed-in world supplies static context (map,
    weather) for rebuilding the decoded state.
    """

    name = "hil"

    def __init__(self, host: str, port: int, timeout: float = 2.0):
        self.address = (host, port)
        self.timeout = timeout
        self.sock: socket.socket | None = None
        self._map: MapSpec | None = None

    def _connect(self) -> None:
        self.sock = socket.create_connection(self.address, timeout=self.timeout)
        send_frame(self.sock, {"type": "HELLO", "version": PROTOCOL_VERSION})
        reply = self._read()
        if reply["type"] == "ERROR":
            raise VersionMismatch(f"executor refused handshake: {reply}")
        if reply["type"] != "HELLO" or reply.get("version") != PROTOCOL_VERSION:
            raise VersionMismatch(f"unexpected handshake reply: {reply}")

    def _read(self) -> dict:
        assert self.sock is not None
        try:
            return read_frame(self.sock)
        except socket.timeout as e:
            raise ExecutorTimeout(f"no reply within {self.timeout}s") from e
        except (PeerClosed, ProtocolError, OSError) as e:
            raise ExecutorError(f"executor connection failed: {e}") from e

    def load(self, scenario: ScenarioSpec, map_spec: MapSpec) -> WorldState:
        if self.sock is None:
            self._connect()
        assert self.sock is not None
        send_frame(self.sock, {"type": "LOAD", "scenario": scenario.to_dict(),
                               "map": map_spec.to_dict()})
        reply = self._read()
        if reply["type"] == "ERROR":
            raise ExecutorError(f"LOAD rejected: {reply}")
        if reply["type"] != "EVENT" or reply.get("kind") != "loaded":
            raise ExecutorError(f"unexpected LOAD reply: {reply}")
        self._map = map_spec
        return scenario.build_world(map_spec)

    def apply(self, world: WorldState, cmd: ControlCommand, dt: float = DT) -> WorldState:
        if self.sock is None:
            raise ExecutorError("apply before load")
        send_frame(self.sock, {"type": "STEP", "tick": world.tick,
                               "cmd": command_to_wire(cmd.to_dict())})
        reply = self._read()
        if reply["type"] == "ERROR":
            raise ExecutorError(f"STEP rejected: {reply}")
        if reply["type"] != "STATE":
            raise ExecutorError(f"unexpected STEP reply: {reply}")
        if reply["tick"] != world.tick:
            raise ExecutorError(
                f"STATE tick {reply['tick']} does not pair with STEP tick {world.tick}"
            )
        return WorldState.from_dict(world_from_wire(reply["state"]), self._map)

    def close(self) -> None:
        if self.sock is not None:
            try:
                send_frame(self.sock, {"type": "BYE"})
            except OSError:
                pass
            self.sock.close()
            self.sock = None


def make_executor(spec: str, timeout: float = 2.0):
    """'sil' or 'hil:HOST:PORT'."""
    if spec == "sil":
        return SilExecutor()
    if spec.startswith("hil:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"hil executor needs hil:HOST:PORT, got {spec!r}")
        return HilExecutor(parts[1], int(parts[2]), timeout=timeout)
    raise ValueError(f"unknown executor {spec!r}")


# --- reference executor server -------------------------------------------------

@dataclass
class _Session:
    world: WorldState | None = None
    map_spec: MapSpec | None = None
    hello_done: bool = False


class ReferenceExecutor:
    """The shipped stand-in for external hardware: a lock-step TCP server
    running the identical dynamics.

    Framing violations answer ERROR and close the connection; well-formed
    frames that are invalid in context answer ERROR and keep the session
    alive. The handler never raises out of a connection.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 idle_timeout: float = 30.0):
        self.host = host
        self.port = port
        self.idle_timeout = idle_timeout
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> int:
        """Bind and serve on a background thread; returns the bound port."""
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self.host, self.port))
        self._listener.listen(64)
        self.port = self._listener.getsockname()[1]
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        return self.port

    def serve_forever(self) -> None:
        """Foreground variant for the CLI subcommand."""
        self.start()
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
            self._listener = None

    def _accept_loop(self) -> None:
        assert self._listener is not None
        listener = self._listener
        while not self._stop.is_set():
            try:
                conn, _addr = listener.accept()
            except OSError:
                return  # listener closed
            t = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            t.start()

    def _reply_error(self, conn: socket.socket, code: str, text: str) -> None:
        try:
            send_frame(conn, {"type": "ERROR", "code": code, "text": text})
        except OSError:
            pass

    def _handle(self, conn: socket.socket) -> None:
        session = _Session()
        conn.settimeout(self.idle_timeout)
        try:
            while True:
                try:
                    msg = read_frame(conn)
                except ProtocolError as e:
                    self._reply_error(conn, "proto", str(e))
                    return
                except (PeerClosed, socket.timeout, OSError):
                    return
                if not self._dispatch(conn, session, msg):
                    return
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _dispatch(self, conn: socket.socket, session: _Session, msg: dict) -> bool:
        kind = msg["type"]
        if kind == "BYE":
            return False
        if kind == "HELLO":
            if msg.get("version") != PROTOCOL_VERSION:
                self._reply_error(conn, "version",
                                  f"protocol version {msg.get('version')!r} "
                                  f"not supported, need {PROTOCOL_VERSION}")
                return False
            session.hello_done = True
            send_frame(conn, {"type": "HELLO", "version": PROTOCOL_VERSION})
            return True
        if not session.hello_done:
            self._reply_error(conn, "state", f"{kind} before HELLO")
            return True
        if kind == "LOAD":
            try:
                map_spec = MapSpec.from_dict(msg["map"])
                scenario = ScenarioSpec.from_dict(msg["scenario"])
                session.world = scenario.build_world(map_spec)
                session.map_spec = map_spec
            except (KeyError, TypeError, ValueError) as e:
                self._reply_error(conn, "load", f"bad LOAD payload: {e}")
                return True
            send_frame(conn, {"type": "EVENT", "kind": "loaded",
                              "payload": {"tick": session.world.tick}})
            return True
        if kind == "STEP":
            if session.world is None:
                self._reply_error(conn, "state", "STEP before LOAD")
                return True
            try:
                tick = msg["tick"]
                cmd = ControlCommand.from_dict(command_from_wire(msg["cmd"]))
            except (KeyError, TypeError, ValueError) as e:
                self._reply_error(conn, "step", f"bad STEP payload: {e}")
                return True
            if tick != session.world.tick:
                self._reply_error(conn, "tick",
                                  f"STEP tick {tick}, world at {session.world.tick}")
                return True
            session.world = step(session.world, cmd, DT)
            send_frame(conn, {"type": "STATE", "tick": tick,
                              "state": world_to_wire(session.world.to_dict())})
            return True
        if kind == "EVENT":
            return True  # informational; ignored
        self._reply_error(conn, "state", f"unexpected {kind}")
        return True
