"""Episode records: JSON-lines traces that are self-validating under replay.

Layout: one header line, one line per tick, one terminal summary line.
Each tick line stores the command applied at that tick and the world state
*after* it, so replay divergence lands exactly on the tampered tick. The
only wall-clock field is header.created_at; digests exclude it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _enc_inf(x: float) -> float | None:
    return None if math.isinf(x) else x


def _dec_inf(v) -> float:
    return math.inf if v is None else float(v)


@dataclass
class Metrics:
    collision: bool = False
    route_completion: float = 0.0
    min_ttc: float = math.inf
    attack_success_rate: float | None = None
    takeover_count: int = 0
    takeover_frequency: float = 0.0  # takeovers per minute of sim time
    perception_accuracy: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.route_completion <= 1.0):
            raise ValueError("route_completion must be in [0, 1]")
        if self.min_ttc < 0.0:
            raise ValueError("min_ttc must be >= 0")
        if self.attack_success_rate is not None and not (
            0.0 <= self.attack_success_rate <= 1.0
        ):
            raise ValueError("attack_success_rate must be in [0, 1]")
        if self.takeover_count < 0 or self.takeover_frequency < 0.0:
            raise ValueError("takeover metrics must be >= 0")

    def to_dict(self) -> dict:
        return {
            "collision": self.collision,
            "route_completion": self.route_completion,
            "min_ttc": _enc_inf(self.min_ttc),  # null encodes +inf
            "attack_success_rate": self.attack_success_rate,
            "takeover_count": self.takeover_count,
            "takeover_frequency": self.takeover_frequency,
            "perception_accuracy": self.perception_accuracy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(
            collision=d["collision"],
            route_completion=d["route_completion"],
            min_ttc=_dec_inf(d["min_ttc"]),
            attack_success_rate=d["attack_success_rate"],
            takeover_count=d["takeover_count"],
            takeover_frequency=d["takeover_frequency"],
            perception_accuracy=d["perception_accuracy"],
        )


@dataclass
class TickRow:
    tick: int
    cmd: dict                 # serialized ControlCommand applied at this tick
    state_after: dict         # serialized WorldState after applying it
    perception: list | float | None = None
    attack: dict | None = None
    events: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"type": "tick", "tick": self.tick, "cmd": self.cmd,
                "perception": self.perception, "attack": self.attack,
                "events": self.events, "state_after": self.state_after}

    @classmethod
    def from_dict(cls, d: dict) -> "TickRow":
        return cls(tick=d["tick"], cmd=d["cmd"], state_after=d["state_after"],
                   perception=d["perception"], attack=d["attack"],
                   events=d["events"])


@dataclass
class EpisodeRecord:
    header: dict
    rows: list[TickRow] = field(default_factory=list)
    summary: dict | None = None

    def validate(self) -> None:
        for i, row in enumerate(self.rows):
            if row.tick != i:
                raise ValueError(f"tick sequence broken at index {i} (tick {row.tick})")
        if self.summary is None:
            raise ValueError("record has no terminal summary")

    def metrics(self) -> Metrics:
        if self.summary is None:
            raise ValueError("record has no summary")
        return Metrics.from_dict(self.summary["metrics"])

    def lines(self) -> list[dict]:
        out = [{"type": "header", **self.header}]
        out += [r.to_dict() for r in self.rows]
        if self.summary is not None:
            out.append(self.summary)
        return out

    def digest(self) -> str:
        """sha256 over all lines, wall-clock excluded."""
        h = hashlib.sha256()
        for line in self.lines():
            if line["type"] == "header":
                line = {k: v for k, v in line.items() if k != "created_at"}
            h.update(_canon(line).encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for line in self.lines():
                f.write(_canon(line) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeRecord":
        header: dict | None = None
        rows: list[TickRow] = []
        summary: dict | None = None
        with open(path, encoding="utf-8") as f:
            for raw in f:
                raw = raw.strip()
                if not raw:
                    continue
                line = json.loads(raw)
                kind = line.get("type")
                if kind == "header":
                    if header is not None:
                        raise ValueError("duplicate header line")
                    header = {k: v for k, v in line.items() if k != "type"}
                elif kind == "tick":
                    rows.append(TickRow.from_dict(line))
                elif kind == "summary":
                    if summary is not None:
                        raise ValueError("duplicate summary line")
                    summary = line
                else:
                    raise ValueError(f"unknown record line type {kind!r}")
        if header is None:
            raise ValueError("record missing header")
        return cls(header=header, rows=rows, summary=summary)
