"""2-D geometry primitives: vectors, oriented boxes, SAT overlap, ray casting."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> "Vec2":
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def dist(self, other: "Vec2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def rotated(self, angle: float) -> "Vec2":
        c, s = math.cos(angle), math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


def unit(angle: float) -> Vec2:
    return Vec2(math.cos(angle), math.sin(angle))


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle given by center, heading (radians) and full length/width."""

    center: Vec2
    heading: float
    length: float
    width: float

    def axes(self) -> tuple[Vec2, Vec2]:
        fwd = unit(self.heading)
        left = Vec2(-fwd.y, fwd.x)
        return fwd, left

    def corners(self) -> list[Vec2]:
        fwd, left = self.axes()
        hl, hw = 0.5 * self.length, 0.5 * self.width
        c = self.center
        return [
            c + fwd * hl + left * hw,
            c + fwd * hl - left * hw,
            c - fwd * hl - left * hw,
            c - fwd * hl + left * hw,
        ]

    def edges(self) -> list[tuple[Vec2, Vec2]]:
        cs = self.corners()
        return [(cs[i], cs[(i + 1) % 4]) for i in range(4)]

    def contains(self, p: Vec2, strict: bool = False) -> bool:
        q = (p - self.center).rotated(-self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        if strict:
            return abs(q.x) < hl and abs(q.y) < hw
        return abs(q.x) <= hl and abs(q.y) <= hw

    def interior_depth(self, p: Vec2) -> float:
        """Signed margin: positive inside, negative outside (box-frame Chebyshev)."""
        q = (p - self.center).rotated(-self.heading)
        return min(0.5 * self.length - abs(q.x), 0.5 * self.width - abs(q.y))


def boxes_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Strict-interior overlap via the separating-axis test.

    Touching boundaries (zero projected overlap on some axis) does not count.
    """
    axes = [*a.axes(), *b.axes()]
    ca, cb = a.corners(), b.corners()
    for ax in axes:
        pa = [c.dot(ax) for c in ca]
        pb = [c.dot(ax) for c in cb]
        if min(max(pa), max(pb)) - max(min(pa), min(pb)) <= 0.0:
            return False
    return True


def ray_segment_distance(origin: Vec2, direction: Vec2, a: Vec2, b: Vec2) -> float | None:
    """Distance along the ray to segment a-b, or None if missed.

    `direction` must be unit length; hits behind the origin are ignored.
    """
    ex, ey = b.x - a.x, b.y - a.y
    denom = direction.x * ey - direction.y * ex
    if denom == 0.0:
        return None  # parallel (collinear grazing treated as a miss)
    dx, dy = a.x - origin.x, a.y - origin.y
    t = (dx * ey - dy * ex) / denom
    u = (direction.x * dy - direction.y * dx) / -denom
    if t >= 0.0 and 0.0 <= u <= 1.0:
        return t
    return None


def ray_box_distance(origin: Vec2, direction: Vec2, box: OrientedBox) -> float | None:
    best: float | None = None
    for a, b in box.edges():
        t = ray_segment_distance(origin, direction, a, b)
        if t is not None and (best is None or t < best):
            best = t
    return best


def point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    abx, aby = b.x - a.x, b.y - a.y
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return p.dist(a)
    t = ((p.x - a.x) * abx + (p.y - a.y) * aby) / denom
    t = min(1.0, max(0.0, t))
    return p.dist(Vec2(a.x + t * abx, a.y + t * aby))


def point_polyline_distance(p: Vec2, points: list[Vec2]) -> float:
    if len(points) == 1:
        return p.dist(points[0])
    return min(
        point_segment_distance(p, points[i], points[i + 1])
        for i in range(len(points) - 1)
    )


def polyline_length(points: list[Vec2]) -> float:
    return sum(points[i].dist(points[i + 1]) for i in range(len(points) - 1))


def polyline_point_at(points: list[Vec2], s: float) -> Vec2:
    """Point at arc length s, clamped to the polyline ends."""
    if s <= 0.0:
        return points[0]
    for i in range(len(points) - 1):
        seg = points[i].dist(points[i + 1])
        if s <= seg and seg > 0.0:
            t = s / seg
            return Vec2(
                points[i].x + t * (points[i + 1].x - points[i].x),
                points[i].y + t * (points[i + 1].y - points[i].y),
            )
        s -= seg
    return points[-1]


def polyline_project(points: list[Vec2], p: Vec2) -> float:
    """Arc length of the closest point of the polyline to p."""
    best_d = math.inf
    best_s = 0.0
    acc = 0.0
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        abx, aby = b.x - a.x, b.y - a.y
        denom = abx * abx + aby * aby
        t = 0.0 if denom == 0.0 else ((p.x - a.x) * abx + (p.y - a.y) * aby) / denom
        t = min(1.0, max(0.0, t))
        q = Vec2(a.x + t * abx, a.y + t * aby)
        d = p.dist(q)
        seg = math.sqrt(denom)
        if d < best_d:
            best_d = d
            best_s = acc + t * seg
        acc += seg
    return best_s
