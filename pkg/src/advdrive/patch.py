"""Physical patch attack: dual-renderer fusion, analytic texture gradients,
and expectation-over-transformation optimization.

The fused frame is I = M * R_diff + (1 - M) * R_native computed before
weather, where R_diff bilinearly samples the patch texture under the
ego-relative placement of the patch rectangle and M is its pixel mask.
Outside M the output is bit-identical to the plain sensor render because
both run through the same rasterization path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import unit, wrap_angle
from .nn import Model, backward_input
from .ppmio import read_ppm, write_ppm
from .render import (
    CameraConfig,
    apply_weather,
    fog_attenuation,
    patch_pixel_samples,
    rasterize,
    texture_sample_weights,
)
from .rng import Rng
from .world import WorldState


@dataclass
class PatchSpec:
    """Adversarial texture attached to a rectangle on a vehicle footprint.

    rect = (cx, cy, w, h) in the host vehicle frame (x forward, y left),
    and must lie inside the footprint.
    """

    texture: np.ndarray  # (Ht, Wt, 3) float64 in [0, 1]
    agent_index: int
    rect: tuple[float, float, float, float]

    def __post_init__(self):
        self.texture = np.clip(np.asarray(self.texture, dtype=np.float64), 0.0, 1.0)
        if self.texture.ndim != 3 or self.texture.shape[2] != 3:
            raise ValueError("texture must be (H, W, 3)")
        cx, cy, w, h = self.rect
        if w <= 0.0 or h <= 0.0:
            raise ValueError("patch rect must have positive size")

    def validate_on(self, world: WorldState) -> None:
        if not (0 <= self.agent_index < len(world.agents)):
            raise ValueError(f"patch attachment agent {self.agent_index} missing")
        st = world.agents[self.agent_index].state
        cx, cy, w, h = self.rect
        if abs(cx) + 0.5 * w > 0.5 * st.length + 1e-9 or \
           abs(cy) + 0.5 * h > 0.5 * st.width + 1e-9:
            raise ValueError("patch rect extends outside the vehicle footprint")


@dataclass
class EotConfig:
    """Pose jitter for expectation-over-transformation optimization."""

    n_samples: int = 8
    d_distance: float = 2.0   # +- range, meters
    d_bearing: float = 0.15   # +- range, radians
    d_heading: float = 0.3    # +- range, radians
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def render_fused(world: WorldState, patch: PatchSpec,
                 cam: CameraConfig = CameraConfig()
                 ) -> tuple[np.ndarray, np.ndarray]:
    """(fused frame, mask). Weather compositing applies to the fused image."""
    patch.validate_on(world)
    img, mask = rasterize(world, cam, patch_texture=patch.texture,
                          patch_agent=patch.agent_index, patch_rect=patch.rect)
    return apply_weather(img, world, cam), mask


def patch_gradient(model: Model, world: WorldState, patch: PatchSpec, label: int,
                   cam: CameraConfig = CameraConfig(),
                   kind: str = "cross_entropy") -> np.ndarray:
    """dLoss/dTexel via the chain rule through fusion and weather.

    Texels whose bilinear support never lands inside the mask get exactly
    zero gradient; accumulation order is fixed (row-major masked pixels),
    so the result is bit-deterministic.
    """
    patch.validate_on(world)
    frame, mask = render_fused(world, patch, cam)
    tex_grad = np.zeros_like(patch.texture)
    if not mask.any():
        return tex_grad
    _, cache = model.forward(frame)
    dpixel = backward_input(model, cache, label, kind)
    # weather chain: out = brightness * (fused * att + fog * (1 - att))
    att = fog_attenuation(world, cam)[..., 0]
    dfused = dpixel * world.weather.brightness * att[..., None]

    _, s, t = patch_pixel_samples(world, patch.agent_index, patch.rect, cam)
    idx, wgt = texture_sample_weights(patch.texture.shape[:2], s[mask], t[mask])
    g = dfused[mask]  # (P, 3)
    ht, wt = patch.texture.shape[:2]
    flat = tex_grad.reshape(ht * wt, 3)
    for corner in range(4):
        np.add.at(flat, idx[:, corner], g * wgt[:, corner : corner + 1])
    return tex_grad


def checker_texture(ht: int, wt: int, cell: int = 4) -> np.ndarray:
    rows = (np.arange(ht)[:, None] // cell) % 2
    cols = (np.arange(wt)[None, :] // cell) % 2
    base = ((rows + cols) % 2).astype(np.float64)
    return np.stack([base, base, base], axis=-1)


def noise_texture(ht: int, wt: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(ht, wt, 3))


def eot_poses(world: WorldState, agent_index: int, eot: EotConfig,
              n: int | None = None) -> list[WorldState]:
    """Jittered copies of the world: the host agent is re-posed around its
    current ego-relative (distance, bearing, heading)."""
    from dataclasses import replace

    agent = world.agents[agent_index]
    rel = agent.state.position - world.ego.position
    base_dist = rel.norm()
    base_bearing = math.atan2(rel.y, rel.x)
    base_heading = agent.state.heading
    rng = Rng(eot.seed)
    out: list[WorldState] = []
    for _ in range(eot.n_samples if n is None else n):
        dist = max(1.0, base_dist + rng.uniform(-eot.d_distance, eot.d_distance))
        bearing = base_bearing + rng.uniform(-eot.d_bearing, eot.d_bearing)
        heading = wrap_angle(base_heading + rng.uniform(-eot.d_heading, eot.d_heading))
        pos = world.ego.position + unit(bearing) * dist
        new_state = replace(agent.state, position=pos, heading=heading)
        new_agent = replace(agent, state=new_state)
        agents = list(world.agents)
        agents[agent_index] = new_agent
        out.append(WorldState(ego=world.ego, agents=agents, weather=world.weather,
                              tick=world.tick, rng=world.rng.copy(), map=world.map))
    return out


@dataclass
class PatchOptResult:
    patch: PatchSpec
    loss_curve: list[float]  # mean EOT loss before each step, then final


def eot_mean_loss(model: Model, worlds: list[WorldState], patch: PatchSpec,
                  label: int, cam: CameraConfig) -> float:
    from .nn import loss as loss_fn

    total = 0.0
    for w in worlds:
        frame, _ = render_fused(w, patch, cam)
        out, _ = model.forward(frame)
        total += loss_fn(out, label, "cross_entropy")
    return total / len(worlds)


def optimize_patch(model: Model, world: WorldState, patch_init: PatchSpec,
                   label: int, eot: EotConfig, steps: int, lr: float,
                   cam: CameraConfig = CameraConfig()) -> PatchOptResult:
    """Projected gradient ascent on the mean loss over jittered poses.

    Deterministic in (eot.seed, inputs); pose samples are drawn fresh per
    step from one stream, and per-pose gradients are reduced in index order.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    patch = PatchSpec(texture=patch_init.texture.copy(),
                      agent_index=patch_init.agent_index, rect=patch_init.rect)
    patch.validate_on(world)
    curve: list[float] = []
    pose_rng = Rng(eot.seed)
    for _ in range(steps):
        step_eot = EotConfig(n_samples=eot.n_samples, d_distance=eot.d_distance,
                             d_bearing=eot.d_bearing, d_heading=eot.d_heading,
                             seed=pose_rng.next_u64())
        worlds = eot_poses(world, patch.agent_index, step_eot)
        curve.append(eot_mean_loss(model, worlds, patch, label, cam))
        grad = np.zeros_like(patch.texture)
        for w in worlds:  # fixed reduction order
            grad += patch_gradient(model, w, patch, label, cam)
        grad /= len(worlds)
        patch.texture = np.clip(patch.texture + lr * grad, 0.0, 1.0)
    eval_eot = EotConfig(n_samples=eot.n_samples, d_distance=eot.d_distance,
                         d_bearing=eot.d_bearing, d_heading=eot.d_heading,
                         seed=pose_rng.next_u64())
    curve.append(eot_mean_loss(model, eot_poses(world, patch.agent_index, eval_eot),
                               patch, label, cam))
    return PatchOptResult(patch=patch, loss_curve=curve)


def save_patch_texture(patch: PatchSpec, path) -> None:
    write_ppm(path, patch.texture)


def load_patch_texture(path) -> np.ndarray:
    return read_ppm(path)
