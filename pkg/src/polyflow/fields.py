"""Vector fields in chart coordinates.

Three families: the regularized compressing components that drive the
transverse coordinates to zero in finite time, the region-composed
autoencoder field (learned outside [tau0, tau2], compressing inside
[tau0, tau1), frozen on the pinned interval), and the classifier field
with target-point attractors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mlp import Mlp
from .omega import OmegaConfig, StatePoint


@dataclass(frozen=True)
class CompressionSpec:
    """Rates, exponent and cutoff band of the compressing components."""

    rates: np.ndarray  # length m, all > 0
    a: float = 0.5
    b: float = 1e-7
    c: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "rates", np.atleast_1d(np.asarray(self.rates, dtype=float)))
        if np.any(self.rates <= 0):
            raise ValueError("rates must be positive")
        if not (0.0 < self.a < 1.0):
            raise ValueError("exponent a must lie in (0, 1)")
        if not (0.0 <= self.b < self.c):
            raise ValueError("need 0 <= b < c")

    @staticmethod
    def default(m: int, rate: float = 25.0) -> "CompressionSpec":
        return CompressionSpec(np.full(m, rate))


def compress_forward(p: StatePoint, j: int, spec: CompressionSpec) -> float:
    """Compressing velocity of transverse coordinate j at point p."""
    y = np.asarray([[p.y[j]]])
    return float(kernels.compress_forward(y, spec.rates[j : j + 1], spec.a, spec.b, spec.c)[0, 0])


def compress_backward(p: StatePoint, j: int, spec: CompressionSpec, cotangent: float = 1.0):
    """Cotangent pulled back through the compressing component.

    Returns (d_yj, d_rate): the derivative wrt the coordinate itself and
    wrt the rate constant.  The rate term is the hook for smoothly
    parametrized rates; with constant rates its upstream gradient is the
    caller's chain rule with grad k = 0.
    """
    y = np.asarray([[p.y[j]]])
    dy = float(kernels.compress_grad(y, spec.rates[j : j + 1], spec.a, spec.b, spec.c)[0, 0])
    f = float(kernels.compress_forward(y, np.ones(1), spec.a, spec.b, spec.c)[0, 0])
    return cotangent * dy, cotangent * f


@dataclass
class AutoencoderFieldParams:
    net_pre: Mlp
    net_post: Mlp
    compression: CompressionSpec
    cfg: OmegaConfig

    def __post_init__(self):
        d = self.cfg.dim
        for name, net in (("net_pre", self.net_pre), ("net_post", self.net_post)):
            if net.in_dim != d or net.out_dim != d - 1:
                raise ValueError(f"{name} must map {d} -> {d - 1}")


class AutoencoderField:
    """Region-composed field with constant depth speed.

    Component 0 is identically C.  For tau < tau0 the remaining n+m
    components come from net_pre, on [tau0, tau1) the parallel block is
    frozen and the transverse block compresses, on [tau1, tau2]
    everything but tau is frozen, and for tau > tau2 net_post takes
    over.  Batched states may straddle regions; rows are dispatched by
    their own tau.
    """

    def __init__(self, params: AutoencoderFieldParams):
        self.params = params
        self.cfg = params.cfg
        # advertised to the integrator: component 0 moves at exactly
        # this rate, so its updates can be taken off the schedule
        self.const_speed = params.cfg.C
        # transverse slots get the zero-crossing clamp inside the
        # compression region
        self.clamp_compression = True

    def _masks(self, tau_col):
        cfg = self.cfg
        pre = tau_col < cfg.tau0
        comp = (tau_col >= cfg.tau0) & (tau_col < cfg.tau1)
        post = tau_col > cfg.tau2
        return pre, comp, post

    def __call__(self, t, states):
        states = np.atleast_2d(states)
        cfg, sp = self.cfg, self.params.compression
        out = np.zeros_like(states)
        out[:, 0] = cfg.C
        pre, comp, post = self._masks(states[:, 0])
        if pre.any():
            out[pre, 1:] = self.params.net_pre.forward(states[pre])[0]
        if comp.any():
            ys = states[comp][:, 1 + cfg.n :]
            out[comp, 1 + cfg.n :] = kernels.compress_forward(ys, sp.rates, sp.a, sp.b, sp.c)
        if post.any():
            out[post, 1:] = self.params.net_post.forward(states[post])[0]
        return out

    def at_point(self, p: StatePoint) -> np.ndarray:
        """Velocity (1 + n + m reals) at a single point."""
        return self(0.0, p.as_vector()[None, :])[0]

    def clamp_mask(self, states):
        """Rows/slots subject to the zero-crossing clamp (compression region)."""
        states = np.atleast_2d(states)
        _, comp, _ = self._masks(states[:, 0])
        mask = np.zeros(states.shape, dtype=bool)
        mask[comp, 1 + self.cfg.n :] = True
        return mask

    def clamp_pattern(self, t, states, h):
        """Entries the forward Euler step snapped to zero (cheap recompute)."""
        states = np.atleast_2d(states)
        cfg, sp = self.cfg, self.params.compression
        pattern = np.zeros(states.shape, dtype=bool)
        _, comp, _ = self._masks(states[:, 0])
        if comp.any():
            ys = states[comp][:, 1 + cfg.n :]
            y_next = ys + h * kernels.compress_forward(ys, sp.rates, sp.a, sp.b, sp.c)
            pattern[comp, 1 + cfg.n :] = (np.sign(y_next) != np.sign(ys)) & (ys != 0.0)
        return pattern

    def vjp(self, t, states, cot):
        """Pull a cotangent on the field value back to states and params.

        Returns (d_states, (grad_pre_flat, grad_post_flat)).  Forward
        caches are recomputed here; states in the pinned interval
        contribute nothing (the field is constant there).
        """
        states = np.atleast_2d(states)
        cot = np.atleast_2d(cot)
        cfg, sp = self.cfg, self.params.compression
        d_states = np.zeros_like(states)
        g_pre = np.zeros(self.params.net_pre.num_params())
        g_post = np.zeros(self.params.net_post.num_params())
        pre, comp, post = self._masks(states[:, 0])
        for mask, net, acc in ((pre, self.params.net_pre, "pre"), (post, self.params.net_post, "post")):
            if not mask.any():
                continue
            _, cache = net.forward(states[mask])
            d_in, grads = net.vjp(cache, cot[mask][:, 1:])
            d_states[mask] += d_in
            flat = net.flatten_grads(grads)
            if acc == "pre":
                g_pre += flat
            else:
                g_post += flat
        if comp.any():
            ys = states[comp][:, 1 + cfg.n :]
            dy = kernels.compress_grad(ys, sp.rates, sp.a, sp.b, sp.c)
            block = np.zeros((int(comp.sum()), states.shape[1]))
            block[:, 1 + cfg.n :] = cot[comp][:, 1 + cfg.n :] * dy
            d_states[comp] += block
        return d_states, (g_pre, g_post)


def autoencoder_field(p: StatePoint, params: AutoencoderFieldParams) -> np.ndarray:
    """Single-point evaluation of the region-composed field."""
    return AutoencoderField(params).at_point(p)


class PureCompressionField:
    """The bare compressing dynamics on all state columns.

    Used to verify the finite-time convergence law against its closed
    form; every column is transverse and clamps at zero crossings.
    """

    def __init__(self, spec: CompressionSpec):
        self.spec = spec
        self.const_speed = None
        self.clamp_compression = True

    def __call__(self, t, states):
        sp = self.spec
        return kernels.compress_forward(np.atleast_2d(states), sp.rates, sp.a, sp.b, sp.c)

    def clamp_mask(self, states):
        return np.ones(np.atleast_2d(states).shape, dtype=bool)

    def clamp_pattern(self, t, states, h):
        states = np.atleast_2d(states)
        nxt = states + h * self(t, states)
        return (np.sign(nxt) != np.sign(states)) & (states != 0.0)

    def vjp(self, t, states, cot):
        sp = self.spec
        states = np.atleast_2d(states)
        dy = kernels.compress_grad(states, sp.rates, sp.a, sp.b, sp.c)
        return np.atleast_2d(cot) * dy, np.zeros(0)


@dataclass
class ClassifierFieldParams:
    net: Mlp  # input (x, t) in R^4, output R^3
    targets: np.ndarray  # (3, 3)
    c_att: float = 50.0
    k_att: float = 64.0 / np.sqrt(2.0)

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.shape[1] != 3:
            raise ValueError("targets must be points in R^3")
        if len(np.unique(self.targets, axis=0)) != len(self.targets):
            raise ValueError("targets must be pairwise distinct")
        if self.c_att <= 0 or self.k_att <= 0:
            raise ValueError("attractor constants must be positive")
        if self.net.in_dim != 4 or self.net.out_dim != 3:
            raise ValueError("classifier net must map R^4 -> R^3")


SINGULARITY_GUARD = 1e-9


class ClassifierField:
    """Learned field plus Gaussian attractors toward the target points.

    Within SINGULARITY_GUARD of a target the unit vector is undefined
    and that attractor term is dropped.
    """

    def __init__(self, params: ClassifierFieldParams):
        self.params = params
        self.const_speed = None

    def _attractor(self, states):
        p = self.params
        out = np.zeros_like(states)
        for tgt in p.targets:
            u = tgt[None, :] - states
            r = np.linalg.norm(u, axis=1)
            safe = r > SINGULARITY_GUARD
            w = np.zeros_like(r)
            w[safe] = p.c_att * np.exp(-p.k_att * r[safe] ** 2) / r[safe]
            out += u * w[:, None]
        return out

    def __call__(self, t, states):
        states = np.atleast_2d(states)
        inp = np.concatenate([states, np.full((len(states), 1), t)], axis=1)
        net_out, _ = self.params.net.forward(inp)
        return net_out + self._attractor(states)

    def vjp(self, t, states, cot):
        states = np.atleast_2d(states)
        cot = np.atleast_2d(cot)
        p = self.params
        inp = np.concatenate([states, np.full((len(states), 1), t)], axis=1)
        _, cache = p.net.forward(inp)
        d_in, grads = p.net.vjp(cache, cot)
        d_states = d_in[:, :3].copy()
        # attractor Jacobian: d/dx [u/r e^{-k r^2}] with u = y - x is
        # -e^{-k r^2} (I/r - u u^T / r^3 - 2k u u^T / r); symmetric.
        for tgt in p.targets:
            u = tgt[None, :] - states
            r = np.linalg.norm(u, axis=1)
            safe = r > SINGULARITY_GUARD
            if not safe.any():
                continue
            us, rs, cs = u[safe], r[safe], cot[safe]
            e = p.c_att * np.exp(-p.k_att * rs**2)
            udotc = np.einsum("ij,ij->i", us, cs)
            term = (
                -e[:, None] / rs[:, None] * cs
                + (e * udotc / rs**3)[:, None] * us
                + (2.0 * p.k_att * e * udotc / rs)[:, None] * us
            )
            d_states[safe] += term
        return d_states, p.net.flatten_grads(grads)


def classifier_field(x: np.ndarray, t: float, params: ClassifierFieldParams) -> np.ndarray:
    """Single-point evaluation of the classification field."""
    return ClassifierField(params)(t, np.atleast_2d(x))[0]
