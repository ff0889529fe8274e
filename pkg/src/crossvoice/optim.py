"""Adam with bias correction and a geometric learning-rate decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OptimizerError, ShapeError


@dataclass(frozen=True)
class AdamConfig:
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    decay_steps: int = 50_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.lr_end <= self.lr_start):
            raise ConfigError(f"need 0 < lr_end <= lr_start, got {self.lr_end}/{self.lr_start}")
        if self.decay_steps <= 0:
            raise ConfigError(f"decay_steps must be positive, got {self.decay_steps}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must be in [0, 1), got {self.beta1}/{self.beta2}")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")


def learning_rate(config: AdamConfig, step: int) -> float:
    """Geometric interpolation from lr_start to lr_end over decay_steps,
    constant lr_end afterwards. lr(0) == lr_start, lr(decay_steps) == lr_end."""
    frac = min(max(step, 0), config.decay_steps) / config.decay_steps
    return config.lr_start * (config.lr_end / config.lr_start) ** frac


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def as_arrays(self) -> dict:
        out = {}
        for name, arr in self.m.items():
            out[f"adam.m/{name}"] = arr
        for name, arr in self.v.items():
            out[f"adam.v/{name}"] = arr
        return out

    @staticmethod
    def from_arrays(entries: dict) -> "AdamState":
        state = AdamState()
        for key, arr in entries.items():
            if key.startswith("adam.m/"):
                state.m[key[len("adam.m/"):]] = np.asarray(arr, dtype=np.float64)
            elif key.startswith("adam.v/"):
                state.v[key[len("adam.v/"):]] = np.asarray(arr, dtype=np.float64)
        return state


def adam_step(params: dict, grads: dict, state: AdamState, config: AdamConfig,
              step: int) -> tuple[dict, AdamState]:
    """One Adam update, in place on the parameter arrays.

    `step` is 0-based: the bias-correction exponent is step + 1 and the
    learning rate is learning_rate(config, step).
    """
    lr = learning_rate(config, step)
    t = step + 1
    correction1 = 1.0 - config.beta1 ** t
    correction2 = 1.0 - config.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} != param {p.shape} "
                             f"for '{name}'")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter '{name}'")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        p -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state
