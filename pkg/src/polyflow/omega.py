"""Bottleneck state space: configuration constants and points.

The state space glues three regions along an interval J = [tau1, tau2]:
outside J a point carries coordinates (tau, x, y) with x in R^n and
y in R^m; on J the m transverse coordinates are pinned to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OmegaConfig:
    """Constants of the bottleneck space and the data embedding.

    tau0 is the onset of the compressing dynamics, [tau1, tau2] the
    pinned interval, tau_x / tau_y the embedding coordinates of inputs
    and targets.  The depth speed C = tau_y - tau_x is derived.
    """

    n: int
    m: int
    tau0: float
    tau1: float
    tau2: float
    tau_x: float
    tau_y: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be >= 1")
        if not (self.tau_x < self.tau0 < self.tau1 < self.tau2 < self.tau_y):
            raise ValueError(
                "require tau_x < tau0 < tau1 < tau2 < tau_y, got "
                f"{self.tau_x}, {self.tau0}, {self.tau1}, {self.tau2}, {self.tau_y}"
            )

    @property
    def C(self) -> float:
        """Constant speed in the tau direction."""
        return self.tau_y - self.tau_x

    @property
    def dim(self) -> int:
        """Ambient chart dimension 1 + n + m."""
        return 1 + self.n + self.m

    def in_pinned_interval(self, tau: float) -> bool:
        return self.tau1 <= tau <= self.tau2

    def region(self, tau: float) -> str:
        """Region label for a depth coordinate.

        Half-open conventions: 'pre' tau < tau0, 'compress' [tau0, tau1),
        'pinned' [tau1, tau2], 'post' tau > tau2.
        """
        if tau < self.tau0:
            return "pre"
        if tau < self.tau1:
            return "compress"
        if tau <= self.tau2:
            return "pinned"
        return "post"


@dataclass
class StatePoint:
    """A point (tau, x, y) of the bottleneck space.

    On the pinned interval membership requires y = 0 exactly.
    """

    tau: float
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))

    def validate(self, cfg: OmegaConfig):
        if self.x.shape != (cfg.n,) or self.y.shape != (cfg.m,):
            raise ValueError(f"expected x of length {cfg.n} and y of length {cfg.m}")
        if cfg.in_pinned_interval(self.tau) and np.any(self.y != 0.0):
            raise ValueError(
                f"y must vanish on [{cfg.tau1}, {cfg.tau2}]; got y={self.y} at tau={self.tau}"
            )
        return self

    def as_vector(self) -> np.ndarray:
        return np.concatenate(([self.tau], self.x, self.y))

    @staticmethod
    def from_vector(v: np.ndarray, cfg: OmegaConfig) -> "StatePoint":
        v = np.asarray(v, dtype=float)
        if v.shape != (cfg.dim,):
            raise ValueError(f"expected a vector of length {cfg.dim}")
        return StatePoint(v[0], v[1 : 1 + cfg.n], v[1 + cfg.n :])


def spiral_config() -> OmegaConfig:
    """Default space for the spiral reconstruction task (n=1, m=2)."""
    return OmegaConfig(n=1, m=2, tau0=-3.0, tau1=0.0, tau2=1.0, tau_x=-7.0, tau_y=8.0)


def sphere_config() -> OmegaConfig:
    """Default space for the sphere reconstruction task (n=2, m=1)."""
    return OmegaConfig(n=2, m=1, tau0=-3.0, tau1=0.0, tau2=3.0, tau_x=-7.0, tau_y=10.0)
