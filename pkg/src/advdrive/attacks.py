"""Digital adversarial attacks on sensor frames.

All methods are pure functions of (model, frame, label, config, seed) and
guarantee two properties, verified by the soundness suite:

* budget:   ||x_adv - x||_inf <= epsilon (+1e-9 measurement slack)
* validity: every output pixel stays in [0, 1]

Frames are promoted to float64 on entry; with epsilon = 0 every method
returns the input bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Model, backward_input

METHODS = ("fgsm", "bim", "pgd", "mi_fgsm", "random")

_L1_FLOOR = 1e-12  # below this, normalized momentum is defined as zero


@dataclass
class AttackConfig:
    method: str = "pgd"
    epsilon: float = 0.03      # L-inf budget in pixel units
    alpha: float = 0.01        # per-step size (iterative methods)
    steps: int = 10
    mu: float = 0.0            # momentum decay (mi_fgsm)
    random_start: bool = False
    targeted: bool = False
    target_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must be in [0, 1]")
        if self.method != "fgsm" and self.method != "random" and self.alpha <= 0.0:
            raise ValueError("alpha must be > 0 for iterative methods")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        if self.targeted and self.target_class is None:
            raise ValueError("targeted attack needs target_class")

    def to_dict(self) -> dict:
        return {
            "method": self.method, "epsilon": self.epsilon, "alpha": self.alpha,
            "steps": self.steps, "mu": self.mu, "random_start": self.random_start,
            "targeted": self.targeted, "target_class": self.target_class,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        return cls(**d)


def _signed(g: np.ndarray) -> np.ndarray:
    """sign(g), with the whole step zeroed when ||g||_1 < 1e-12.

    The same guard is applied to every gradient method so the documented
    reductions (pgd -> fgsm, mi_fgsm(mu=0) -> bim) hold bit-exactly and the
    zero-gradient fixed point is exact.
    """
    if np.abs(g).sum() < _L1_FLOOR:
        return np.zeros_like(g)
    return np.sign(g)


def _grad_sign_direction(model: Model, x: np.ndarray, label: int,
                         targeted: bool, target_class: int | None) -> np.ndarray:
    """sign(dL/dx) toward higher loss (untargeted) or lower target loss."""
    use_label = target_class if targeted else label
    _, cache = model.forward(x)
    g = backward_input(model, cache, use_label, "cross_entropy")
    s = _signed(g)
    return -s if targeted else s


def fgsm(model: Model, frame: np.ndarray, label: int, epsilon: float,
         targeted: bool = False, target_class: int | None = None) -> np.ndarray:
    """Single signed-gradient step: clip_[0,1](x + eps * sign(grad))."""
    x = np.asarray(frame, dtype=np.float64)
    if epsilon == 0.0:
        return x.copy()
    step = _grad_sign_direction(model, x, label, targeted, target_class)
    return np.clip(x + epsilon * step, 0.0, 1.0)


def _iterative(model: Model, frame: np.ndarray, label: int, cfg: AttackConfig,
               momentum: bool) -> np.ndarray:
    x0 = np.asarray(frame, dtype=np.float64)
    if cfg.epsilon == 0.0:
        return x0.copy()
    lo = np.clip(x0 - cfg.epsilon, 0.0, 1.0)
    hi = np.clip(x0 + cfg.epsilon, 0.0, 1.0)
    x = x0
    if cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        x = np.clip(x0 + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape),
                    lo, hi)
    g_acc = np.zeros_like(x0)
    use_label = cfg.target_class if cfg.targeted else label
    for _ in range(cfg.steps):
        _, cache = model.forward(x)
        g = backward_input(model, cache, use_label, "cross_entropy")
        if momentum:
            l1 = np.abs(g).sum()
            if cfg.mu == 0.0:
                direction = _signed(g)  # exact bim reduction
            else:
                g_acc = cfg.mu * g_acc + (g / l1 if l1 >= _L1_FLOOR else 0.0)
                direction = np.sign(g_acc)
        else:
            direction = _signed(g)
        if cfg.targeted:
            direction = -direction
        x = np.clip(x + cfg.alpha * direction, lo, hi)
    return x


def pgd(model: Model, frame: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    """Iterated signed steps projected into the eps-ball and [0, 1]; with
    steps=1, alpha=eps and no random start this reduces exactly to fgsm."""
    return _iterative(model, frame, label, cfg, momentum=False)


def bim(model: Model, frame: np.ndarray, label: int, cfg: AttackConfig) -> np.ndarray:
    """pgd without the random start."""
    cfg = AttackConfig(**{**cfg.to_dict(), "method": "bim", "random_start": False})
    return _iterative(model, frame, label, cfg, momentum=False)


def mi_fgsm(model: Model, frame: np.ndarray, label: int,
            cfg: AttackConfig) -> np.ndarray:
    """bim plus L1-normalized gradient momentum g <- mu*g + grad/||grad||_1."""
    cfg = AttackConfig(**{**cfg.to_dict(), "method": "mi_fgsm", "random_start": False})
    return _iterative(model, frame, label, cfg, momentum=True)


def random_noise(frame: np.ndarray, epsilon: float, seed: int = 0) -> np.ndarray:
    """Uniform per-pixel noise in [-eps, eps]; the gradient-free baseline."""
    x = np.asarray(frame, dtype=np.float64)
    if epsilon == 0.0:
        return x.copy()
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-epsilon, epsilon, size=x.shape)
    return np.clip(np.clip(x + noise, x - epsilon, x + epsilon), 0.0, 1.0)


def run_attack(model: Model, frame: np.ndarray, label: int,
               cfg: AttackConfig) -> np.ndarray:
    """Dispatch a configured attack (the single registration point)."""
    if cfg.method == "fgsm":
        return fgsm(model, frame, label, cfg.epsilon, cfg.targeted, cfg.target_class)
    if cfg.method == "pgd":
        return pgd(model, frame, label, cfg)
    if cfg.method == "bim":
        return bim(model, frame, label, cfg)
    if cfg.method == "mi_fgsm":
        return mi_fgsm(model, frame, label, cfg)
    if cfg.method == "random":
        return random_noise(frame, cfg.epsilon, cfg.seed)
    raise ValueError(f"unknown attack method {cfg.method!r}")


def attack_success_rate(model: Model, triples: list[tuple[np.ndarray, np.ndarray, int]],
                        targeted: bool = False,
                        target_class: int | None = None) -> float:
    """Fraction of clean-correct samples the attack flips.

    Untargeted success: clean correctly classified AND adversarial
    misclassified. Targeted success: adversarial classified as target_class.
    Returns 0.0 when no sample is clean-correct.
    """
    successes = 0
    clean_correct = 0
    for clean, adv, label in triples:
        p_clean, _ = model.forward(clean)
        if int(np.argmax(p_clean)) != int(label):
            continue
        clean_correct += 1
        p_adv, _ = model.forward(adv)
        pred_adv = int(np.argmax(p_adv))
        if targeted:
            if pred_adv == int(target_class):
                successes += 1
        elif pred_adv != int(label):
            successes += 1
    return successes / clean_correct if clean_correct else 0.0
