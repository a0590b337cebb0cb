"""Built-in map layouts: straight road, curve, intersection."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .geom import OrientedBox, Vec2
from .world import Lane, MapSpec

LANE_WIDTH = 3.5


def straight_map() -> MapSpec:
    main = [Vec2(0.0, 0.0), Vec2(160.0, 0.0)]
    adjacent = [Vec2(0.0, LANE_WIDTH), Vec2(160.0, LANE_WIDTH)]
    frontage = [Vec2(0.0, 12.0), Vec2(160.0, 12.0)]
    return MapSpec(
        name="straight",
        lanes=[Lane(main, LANE_WIDTH), Lane(adjacent, LANE_WIDTH),
               Lane(frontage, LANE_WIDTH)],
        spawn_points={
            "ego_start": (5.0, 0.0, 0.0),
            "ahead_main": (35.0, 0.0, 0.0),
            "ahead_adjacent": (25.0, LANE_WIDTH, 0.0),
            "far_adjacent": (60.0, LANE_WIDTH, 0.0),
            "far_road": (40.0, 12.0, 0.0),
        },
        routes={"main": [Vec2(5.0, 0.0), Vec2(150.0, 0.0)]},
    )


def curve_map() -> MapSpec:
    # quarter arc of radius 60 joining a straight entry
    pts = [Vec2(0.0, 0.0), Vec2(30.0, 0.0)]
    r = 60.0
    cx, cy = 30.0, r
    for k in range(1, 19):
        a = -math.pi / 2 + (math.pi / 2) * k / 18
        pts.append(Vec2(cx + r * math.cos(a), cy + r * math.sin(a)))
    return MapSpec(
        name="curve",
        lanes=[Lane(pts, LANE_WIDTH)],
        spawn_points={
            "ego_start": (2.0, 0.0, 0.0),
            "mid_curve": (cx + r * math.cos(-math.pi / 4),
                          cy + r * math.sin(-math.pi / 4), math.pi / 4),
        },
        routes={"main": list(pts)},
    )


def intersection_map() -> MapSpec:
    ew = [Vec2(-80.0, 0.0), Vec2(80.0, 0.0)]
    ns = [Vec2(0.0, -80.0), Vec2(0.0, 80.0)]
    corner = 6.0
    obstacles = [
        OrientedBox(Vec2(12.0, 12.0), 0.0, corner, corner),
        OrientedBox(Vec2(-12.0, 12.0), 0.0, corner, corner),
        OrientedBox(Vec2(12.0, -12.0), 0.0, corner, corner),
        OrientedBox(Vec2(-12.0, -12.0), 0.0, corner, corner),
    ]
    return MapSpec(
        name="intersection",
        lanes=[Lane(ew, LANE_WIDTH), Lane(ns, LANE_WIDTH)],
        static_obstacles=obstacles,
        spawn_points={
            "ego_start": (-70.0, 0.0, 0.0),
            "cross_south": (0.0, -40.0, math.pi / 2),
            "cross_north": (0.0, 40.0, -math.pi / 2),
            "oncoming": (40.0, 0.0, math.pi),
        },
        routes={"main": [Vec2(-70.0, 0.0), Vec2(70.0, 0.0)]},
    )


BUILTIN_MAPS = {
    "straight": straight_map,
    "curve": curve_map,
    "intersection": intersection_map,
}


def get_map(ref: str | dict) -> MapSpec:
    """Resolve a map reference: builtin name, path to a map JSON, or inline dict."""
    if isinstance(ref, dict):
        return MapSpec.from_dict(ref)
    if ref in BUILTIN_MAPS:
        return BUILTIN_MAPS[ref]()
    path = Path(ref)
    if path.exists():
        with open(path, encoding="utf-8") as f:
            return MapSpec.from_dict(json.load(f))
    raise ValueError(f"unknown map reference {ref!r}")


def write_builtin_maps(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in sorted(BUILTIN_MAPS.items()):
        p = out / f"{name}.map.json"
        with open(p, "w", encoding="utf-8") as f:
            json.dump(builder().to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(p)
    return written
