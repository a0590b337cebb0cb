"""Ego-centric top-down sensor rasterization with fog and brightness compositing.

A sensor frame is a float64 numpy array of shape (H, W, 3) with values in
[0, 1]. Float64 keeps the attack-budget arithmetic exact to well below the
1e-9 tolerances the attack suite asserts.

The frame is anchored to the ego: the ego sits at a fixed pixel and the frame
is rotated so the ego heading points up. Weather is applied last:

    out = brightness * (raster * exp(-fog_beta * d) + FOG_COLOR * (1 - exp(-fog_beta * d)))

with d the ground distance of the pixel center from the ego. With
fog_beta = 0 and brightness = 1 this is exactly the plain rasterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Vec2
from .world import WorldState

GROUND_COLOR = np.array([0.12, 0.12, 0.14])
LANE_COLOR = np.array([0.30, 0.30, 0.33])
OBSTACLE_COLOR = np.array([0.46, 0.44, 0.38])
EGO_COLOR = np.array([0.92, 0.92, 0.95])
FOG_COLOR = np.array([0.72, 0.72, 0.75])
CLASS_COLORS = {
    "car": np.array([0.85, 0.15, 0.15]),
    "truck": np.array([0.15, 0.30, 0.85]),
    "pedestrian": np.array([0.90, 0.80, 0.10]),
}


@dataclass(frozen=True)
class CameraConfig:
    width: int = 64
    height: int = 64
    scale: float = 0.5       # meters per pixel
    anchor_frac: float = 0.75  # ego row as a fraction of height (from the top)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("camera dimensions must be > 0")
        if self.scale <= 0.0:
            raise ValueError("camera scale must be > 0")

    @property
    def anchor_row(self) -> float:
        return round(self.height * self.anchor_frac) - 0.5

    @property
    def anchor_col(self) -> float:
        return (self.width - 1) / 2.0


def _pixel_world_coords(world: WorldState, cam: CameraConfig) -> tuple[np.ndarray, np.ndarray]:
    """World (x, y) of every pixel center, each shaped (H, W)."""
    rows = np.arange(cam.height, dtype=np.float64)[:, None]
    cols = np.arange(cam.width, dtype=np.float64)[None, :]
    forward = (cam.anchor_row - rows) * cam.scale          # +up in image
    lateral = (cols - cam.anchor_col) * cam.scale          # +right in image
    h = world.ego.heading
    fx, fy = math.cos(h), math.sin(h)
    rx, ry = math.sin(h), -math.cos(h)                     # right of heading
    ex, ey = world.ego.position.x, world.ego.position.y
    wx = ex + forward * fx + lateral * rx
    wy = ey + forward * fy + lateral * ry
    return wx, wy


def _box_mask(wx: np.ndarray, wy: np.ndarray, cx: float, cy: float,
              heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    dx = wx - cx
    dy = wy - cy
    qx = c * dx + s * dy
    qy = -s * dx + c * dy
    return (np.abs(qx) <= 0.5 * length) & (np.abs(qy) <= 0.5 * width)


def _lane_mask(wx: np.ndarray, wy: np.ndarray, centerline: list[Vec2],
               width: float) -> np.ndarray:
    half = 0.5 * width
    mask = np.zeros(wx.shape, dtype=bool)
    for i in range(len(centerline) - 1):
        a, b = centerline[i], centerline[i + 1]
        abx, aby = b.x - a.x, b.y - a.y
        denom = abx * abx + aby * aby
        if denom == 0.0:
            continue
        t = ((wx - a.x) * abx + (wy - a.y) * aby) / denom
        t = np.clip(t, 0.0, 1.0)
        px = a.x + t * abx
        py = a.y + t * aby
        mask |= (wx - px) ** 2 + (wy - py) ** 2 <= half * half
    return mask


def _lerp(a: np.ndarray, b: np.ndarray, t: np.ndarray) -> np.ndarray:
    # a + t*(b-a): exact for constant textures, which the fusion identity
    # tests rely on (a uniform texture samples to the texel value bit-exactly)
    return a + t * (b - a)


def sample_texture_bilinear(texture: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Sample texture (Ht, Wt, 3) at normalized coords s (cols), t (rows) in [0, 1].

    Texel centers sit at (i + 0.5) / N; coordinates are clamped at the edges.
    Returns samples of shape s.shape + (3,).
    """
    ht, wt = texture.shape[0], texture.shape[1]
    fc = np.clip(s * wt - 0.5, 0.0, wt - 1.0)
    fr = np.clip(t * ht - 0.5, 0.0, ht - 1.0)
    c0 = np.floor(fc).astype(np.int64)
    r0 = np.floor(fr).astype(np.int64)
    c1 = np.minimum(c0 + 1, wt - 1)
    r1 = np.minimum(r0 + 1, ht - 1)
    fx = (fc - c0)[..., None]
    fy = (fr - r0)[..., None]
    top = _lerp(texture[r0, c0], texture[r0, c1], fx)
    bot = _lerp(texture[r1, c0], texture[r1, c1], fx)
    return _lerp(top, bot, fy)


def texture_sample_weights(texture_shape: tuple[int, int], s: np.ndarray,
                           t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear footprint of each sample: texel indices (N, 4) and weights (N, 4).

    Shares the clamping/center convention with sample_texture_bilinear so the
    analytic texture gradient is the exact transpose of the sampling.
    """
    ht, wt = texture_shape
    fc = np.clip(s * wt - 0.5, 0.0, wt - 1.0)
    fr = np.clip(t * ht - 0.5, 0.0, ht - 1.0)
    c0 = np.floor(fc).astype(np.int64)
    r0 = np.floor(fr).astype(np.int64)
    c1 = np.minimum(c0 + 1, wt - 1)
    r1 = np.minimum(r0 + 1, ht - 1)
    fx = fc - c0
    fy = fr - r0
    idx = np.stack([r0 * wt + c0, r0 * wt + c1, r1 * wt + c0, r1 * wt + c1], axis=-1)
    w = np.stack(
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        axis=-1,
    )
    return idx, w


def _vehicle_local_coords(wx: np.ndarray, wy: np.ndarray, cx: float, cy: float,
                          heading: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(heading), math.sin(heading)
    dx = wx - cx
    dy = wy - cy
    return c * dx + s * dy, -s * dx + c * dy  # (local x fwd, local y left)


def patch_pixel_samples(world: WorldState, agent_index: int,
                        rect: tuple[float, float, float, float],
                        cam: CameraConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask and normalized patch coords (s, t) for the patch rectangle.

    rect = (cx, cy, w, h) in the host vehicle frame (x forward, y left).
    s runs along the vehicle x axis, t along the vehicle y axis.
    """
    agent = world.agents[agent_index]
    wx, wy = _pixel_world_coords(world, cam)
    lx, ly = _vehicle_local_coords(
        wx, wy, agent.state.position.x, agent.state.position.y, agent.state.heading
    )
    cx, cy, w, h = rect
    s = (lx - (cx - 0.5 * w)) / w
    t = (ly - (cy - 0.5 * h)) / h
    mask = (s >= 0.0) & (s <= 1.0) & (t >= 0.0) & (t <= 1.0)
    return mask, s, t


def rasterize(world: WorldState, cam: CameraConfig,
              patch_texture: np.ndarray | None = None,
              patch_agent: int | None = None,
              patch_rect: tuple[float, float, float, float] | None = None,
              textures: dict[str, np.ndarray] | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Pre-weather raster plus the patch mask (all-False when no patch given)."""
    wx, wy = _pixel_world_coords(world, cam)
    img = np.empty((cam.height, cam.width, 3), dtype=np.float64)
    img[:] = GROUND_COLOR

    if world.map is not None:
        for lane in world.map.lanes:
            img[_lane_mask(wx, wy, lane.centerline, lane.width)] = LANE_COLOR
        for box in world.map.static_obstacles:
            m = _box_mask(wx, wy, box.center.x, box.center.y, box.heading,
                          box.length, box.width)
            img[m] = OBSTACLE_COLOR

    for agent in world.agents:
        st = agent.state
        m = _box_mask(wx, wy, st.position.x, st.position.y, st.heading,
                      st.length, st.width)
        tex = None if textures is None else textures.get(st.texture_ref or "")
        if tex is not None and m.any():
            lx, ly = _vehicle_local_coords(wx, wy, st.position.x, st.position.y,
                                           st.heading)
            s = (lx + 0.5 * st.length) / st.length
            t = (ly + 0.5 * st.width) / st.width
            img[m] = sample_texture_bilinear(tex, s[m], t[m])
        else:
            img[m] = CLASS_COLORS.get(st.class_id, CLASS_COLORS["car"])

    ego = world.ego
    m = _box_mask(wx, wy, ego.position.x, ego.position.y, ego.heading,
                  ego.length, ego.width)
    img[m] = EGO_COLOR

    mask = np.zeros((cam.height, cam.width), dtype=bool)
    if patch_texture is not None:
        if patch_agent is None or patch_rect is None:
            raise ValueError("patch_texture requires patch_agent and patch_rect")
        mask, s, t = patch_pixel_samples(world, patch_agent, patch_rect, cam)
        if mask.any():
            img[mask] = sample_texture_bilinear(patch_texture, s[mask], t[mask])
    return img, mask


def fog_attenuation(world: WorldState, cam: CameraConfig) -> np.ndarray:
    """exp(-fog_beta * d) per pixel, shape (H, W, 1)."""
    beta = world.weather.fog_beta
    if beta == 0.0:
        return np.ones((cam.height, cam.width, 1), dtype=np.float64)
    wx, wy = _pixel_world_coords(world, cam)
    d = np.hypot(wx - world.ego.position.x, wy - world.ego.position.y)
    return np.exp(-beta * d)[..., None]


def apply_weather(img: np.ndarray, world: WorldState, cam: CameraConfig) -> np.ndarray:
    att = fog_attenuation(world, cam)
    if world.weather.fog_beta != 0.0:
        img = img * att + FOG_COLOR * (1.0 - att)
    if world.weather.brightness != 1.0:
        img = img * world.weather.brightness
    return np.clip(img, 0.0, 1.0)


def render_sensor(world: WorldState, cam: CameraConfig = CameraConfig(),
                  textures: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """Deterministic ego-centric sensor frame, weather included."""
    img, _ = rasterize(world, cam, textures=textures)
    return apply_weather(img, world, cam)
