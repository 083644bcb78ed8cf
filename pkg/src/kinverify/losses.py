"""Binary cross-entropy and focal loss on sigmoid probabilities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import _EPS_CLAMP, bce_terms, focal_terms
from .exceptions import ConfigError

DEFAULT_FOCAL_ALPHA = 0.25
DEFAULT_FOCAL_GAMMA = 2.0


@dataclass(frozen=True)
class LossKind:
    tag: str = "bce"
    alpha: float = DEFAULT_FOCAL_ALPHA
    gamma: float = DEFAULT_FOCAL_GAMMA

    def __post_init__(self):
        if self.tag not in ("bce", "focal"):
            raise ConfigError(f"unknown loss {self.tag!r}; expected 'bce' or 'focal'")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"focal alpha must lie in (0, 1), got {self.alpha}")
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ConfigError(f"focal gamma must be >= 0, got {self.gamma}")

    def __str__(self) -> str:
        return self.tag

    def per_sample(self, p, y) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.tag == "bce":
            return bce_terms(p, y)[0]
        return focal_terms(p, y, self.alpha, self.gamma)[0]

    def __call__(self, p, y) -> float:
        """Mean loss over the batch."""
        return float(np.mean(self.per_sample(p, y)))


def clamp_probability(p: float) -> float:
    return min(max(p, _EPS_CLAMP), 1.0 - _EPS_CLAMP)


def bce(p: float, y: int) -> float:
    p = clamp_probability(p)
    return -y * math.log(p) - (1 - y) * math.log(1.0 - p)


def focal(p: float, y: int, a: float = DEFAULT_FOCAL_ALPHA, gamma: float = DEFAULT_FOCAL_GAMMA) -> float:
    p = clamp_probability(p)
    p_t = p if y == 1 else 1.0 - p
    a_t = a if y == 1 else 1.0 - a
    return -a_t * (1.0 - p_t) ** gamma * math.log(p_t)
