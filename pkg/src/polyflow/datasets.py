"""Spiral and sphere sample generation, embeddings, labels, pairings.

The spiral is sampled equidistantly in arclength (closed-form
antiderivative, inverted by bisection); the sphere on a uniform grid in
its angle domain.  Embeddings place inputs strictly below the
compression onset and targets strictly above the pinned interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .omega import OmegaConfig


@dataclass(frozen=True)
class SpiralSpec:
    """Planar spiral (1 + 0.5 s)(cos vs, sin vs, 0) + 6 e2, s in [0, 2pi]."""

    v: float = 1.0  # angular speed; equals the number of turns
    offset: float = 6.0
    growth: float = 0.5
    base_radius: float = 1.0

    def __post_init__(self):
        if self.v <= 0:
            raise ValueError("v must be positive")


S_MAX = 2.0 * math.pi


def spiral_point(s, spec: SpiralSpec) -> np.ndarray:
    """Point(s) on the spiral; raises off the parameter interval."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > S_MAX):
        raise ValueError("s out of [0, 2pi]")
    r = spec.base_radius + spec.growth * s_arr
    pts = np.stack(
        [r * np.cos(spec.v * s_arr), spec.offset + r * np.sin(spec.v * s_arr), np.zeros_like(s_arr)],
        axis=-1,
    )
    return pts


def spiral_speed(s, spec: SpiralSpec) -> np.ndarray:
    return np.sqrt(spec.growth**2 + spec.v**2 * (spec.base_radius + spec.growth * s) ** 2)


def _speed_antiderivative(w: np.ndarray, g: float) -> np.ndarray:
    # int sqrt(w^2 + g^2) dw = w sqrt(w^2+g^2)/2 + g^2/2 asinh(w/g)
    return w * np.sqrt(w * w + g * g) / 2.0 + g * g / 2.0 * np.arcsinh(w / g)


def spiral_arclength(s, spec: SpiralSpec) -> np.ndarray:
    """Arclength from 0 to s via the closed antiderivative.

    With w = v (1 + 0.5 u) the speed integrand becomes sqrt(w^2 + 0.25)
    (for growth 0.5) and integrates in closed form.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > S_MAX + 1e-12):
        raise ValueError("s out of [0, 2pi]")
    v, g = spec.v, spec.growth
    w0 = v * spec.base_radius
    w1 = v * (spec.base_radius + g * s_arr)
    return (_speed_antiderivative(w1, g) - _speed_antiderivative(w0, g)) / (v * g)


def spiral_total_length(spec: SpiralSpec) -> float:
    return float(spiral_arclength(S_MAX, spec))


def spiral_distance(s1, s2, spec: SpiralSpec):
    """Intrinsic distance |arclength(s1) - arclength(s2)|."""
    return np.abs(spiral_arclength(s1, spec) - spiral_arclength(s2, spec))


def arclength_inverse(target: float, spec: SpiralSpec, tol: float = 1e-10) -> float:
    """Solve arclength(s) = target by bisection on [0, 2pi]."""
    lo, hi = 0.0, S_MAX
    total = spiral_total_length(spec)
    if not (0.0 <= target <= total):
        raise ValueError("target arclength out of range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(spiral_arclength(mid, spec)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


SAMPLE_CAP = 5000
SAMPLES_PER_UNIT_LENGTH = 20
VALIDATION_FRACTION = 0.3


def sample_spiral(spec: SpiralSpec, seed: int = 0, cap: int = SAMPLE_CAP):
    """Equidistant-in-arclength training s values plus random validation.

    Training count is 20 per unit length rounded down, capped; the i-th
    sample solves arclength(s) = i * L / (count - 1).  Validation draws
    round(0.3 * count) values uniformly on (0, 2pi).
    """
    L = spiral_total_length(spec)
    count = min(int(math.floor(SAMPLES_PER_UNIT_LENGTH * L)), cap)
    targets = np.linspace(0.0, L, count)
    s_train = np.array([arclength_inverse(t, spec) for t in targets])
    s_train[0], s_train[-1] = 0.0, S_MAX
    rng = np.random.Generator(np.random.PCG64(seed))
    n_val = int(round(VALIDATION_FRACTION * count))
    s_val = rng.uniform(0.0, S_MAX, size=n_val)
    return s_train, s_val


# Slot order mapping spiral coordinates into the chart (tau, x, y1, y2):
# the offset axis (second spiral coordinate) is the coordinate parallel
# to the latent line, the other two are compressed.
SPIRAL_SLOT_ORDER = (1, 0, 2)
IDENTITY_SLOT_ORDER = (0, 1, 2)


def embed_spiral(z: np.ndarray, cfg: OmegaConfig, slot_order=SPIRAL_SLOT_ORDER):
    """Embed spiral points as (input, target) chart vectors.

    Inputs sit at tau_x, targets at tau_y, both carrying z permuted by
    slot_order into the (x, y1, y2) slots.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    perm = z[:, list(slot_order)]
    inputs = np.concatenate([np.full((len(z), 1), cfg.tau_x), perm], axis=1)
    targets = np.concatenate([np.full((len(z), 1), cfg.tau_y), perm], axis=1)
    return inputs, targets


@dataclass
class SpiralDataset:
    spec: SpiralSpec
    cfg: OmegaConfig
    s_train: np.ndarray
    s_val: np.ndarray
    z_train: np.ndarray
    z_val: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    val_inputs: np.ndarray
    val_targets: np.ndarray
    slot_order: tuple

    @property
    def intrinsic_diameter(self) -> float:
        return spiral_total_length(self.spec)

    @property
    def extrinsic_diameter(self) -> float:
        z = self.z_train
        d2 = ((z[:, None, :] - z[None, :, :]) ** 2).sum(-1)
        return float(np.sqrt(d2.max()))


def make_spiral_dataset(spec: SpiralSpec, cfg: OmegaConfig, seed: int = 0,
                        cap: int = SAMPLE_CAP, slot_order=SPIRAL_SLOT_ORDER) -> SpiralDataset:
    s_train, s_val = sample_spiral(spec, seed, cap)
    z_train, z_val = spiral_point(s_train, spec), spiral_point(s_val, spec)
    inp, tgt = embed_spiral(z_train, cfg, slot_order)
    vin, vtg = embed_spiral(z_val, cfg, slot_order)
    assert np.all(inp[:, 0] < cfg.tau0) and np.all(tgt[:, 0] > cfg.tau2)
    return SpiralDataset(spec, cfg, s_train, s_val, z_train, z_val, inp, tgt, vin, vtg, tuple(slot_order))


@dataclass(frozen=True)
class SphereSpec:
    """Unit sphere around (0, 0, 3) sampled on an angle grid."""

    center: tuple = (0.0, 0.0, 3.0)
    radius: float = 1.0
    grid_u: int = 100
    grid_v: int = 60

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


def sphere_points(us: np.ndarray, ws: np.ndarray, spec: SphereSpec) -> np.ndarray:
    """Map angles (u, w) in (0,2pi) x (-pi,pi) onto the sphere (one cover)."""
    c = np.asarray(spec.center)
    half = ws / 2.0
    z = np.stack(
        [np.cos(us) * np.cos(half), np.sin(us) * np.cos(half), np.sin(half)], axis=-1
    )
    return c + spec.radius * z


def embed_sphere(z: np.ndarray, cfg: OmegaConfig, tau_shift: float):
    """Shift the first coordinate by tau_shift: chart (z1+shift, z2, 0, z3).

    The first sphere coordinate rides the depth slot (the embedding that
    eases visualization), the height is the compressed slot, and the
    third chart slot starts at zero.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.zeros((len(z), 4))
    out[:, 0] = z[:, 0] + tau_shift
    out[:, 1] = z[:, 1]
    out[:, 3] = z[:, 2]
    return out


@dataclass
class SphereDataset:
    spec: SphereSpec
    cfg: OmegaConfig
    z_train: np.ndarray
    z_val: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    val_inputs: np.ndarray
    val_targets: np.ndarray

    @property
    def extrinsic_diameter(self) -> float:
        return 2.0 * self.spec.radius


def sample_sphere(spec: SphereSpec, cfg: OmegaConfig, seed: int = 0) -> SphereDataset:
    """Grid-sampled training set plus random validation angles, embedded."""
    nu, nw = spec.grid_u, spec.grid_v
    us = 2.0 * math.pi * (np.arange(nu) + 0.5) / nu
    ws = -math.pi + 2.0 * math.pi * (np.arange(nw) + 0.5) / nw
    uu, ww = np.meshgrid(us, ws, indexing="ij")
    z_train = sphere_points(uu.ravel(), ww.ravel(), spec)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_val = int(round(VALIDATION_FRACTION * nu * nw))
    z_val = sphere_points(
        rng.uniform(0.0, 2.0 * math.pi, n_val), rng.uniform(-math.pi, math.pi, n_val), spec
    )
    ds = SphereDataset(
        spec, cfg, z_train, z_val,
        embed_sphere(z_train, cfg, cfg.tau_x), embed_sphere(z_train, cfg, cfg.tau_y),
        embed_sphere(z_val, cfg, cfg.tau_x), embed_sphere(z_val, cfg, cfg.tau_y),
    )
    assert np.all(ds.inputs[:, 0] < cfg.tau0) and np.all(ds.targets[:, 0] > cfg.tau2)
    return ds


# --- classification labels ----------------------------------------------


def radial_labels(s: np.ndarray, spec: SpiralSpec) -> np.ndarray:
    """Thirds of [0, R_max) by spiral radius; the endpoint joins the top bin."""
    r = spec.base_radius + spec.growth * np.asarray(s, dtype=float)
    r_max = spec.base_radius + spec.growth * S_MAX
    return np.minimum((3.0 * r / r_max).astype(int), 2)


def angular_labels(s: np.ndarray, spec: SpiralSpec) -> np.ndarray:
    """Thirds of [0, 2pi) by winding angle v*s mod 2pi."""
    ang = np.mod(spec.v * np.asarray(s, dtype=float), 2.0 * math.pi)
    return np.minimum((3.0 * ang / (2.0 * math.pi)).astype(int), 2)


def assign_labels(s: np.ndarray, mode: str, spec: SpiralSpec) -> np.ndarray:
    if mode == "radial":
        return radial_labels(s, spec)
    if mode == "angular":
        return angular_labels(s, spec)
    raise ValueError(f"unknown label mode {mode!r}")


@dataclass
class LabeledLatentSet:
    """Latent states at the bottleneck with their task labels."""

    s: np.ndarray
    latent: np.ndarray  # latent x-slot values, one per sample
    radial: np.ndarray
    angular: np.ndarray


def export_csv(path, inputs, targets, cfg: OmegaConfig, params=None):
    """Write an embedded dataset as CSV with chart-slot column names.

    params is an optional per-sample parameter column (the spiral's s).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape != targets.shape or inputs.shape[1] != cfg.dim:
        raise ValueError("inputs/targets must both match the chart dimension")
    slots = ["tau"] + [f"x_{i+1}" for i in range(cfg.n)] + [f"y_{j+1}" for j in range(cfg.m)]
    header = ["sample_id"] + (["s"] if params is not None else [])
    header += slots + [f"target_{c}" for c in slots]
    lines = [",".join(header)]
    for i in range(len(inputs)):
        row = [str(i)]
        if params is not None:
            row.append(repr(float(params[i])))
        row += [repr(float(v)) for v in inputs[i]] + [repr(float(v)) for v in targets[i]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_csv(path, cfg: OmegaConfig):
    """Read a dataset written by export_csv; returns (inputs, targets, params)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    slots = ["tau"] + [f"x_{i+1}" for i in range(cfg.n)] + [f"y_{j+1}" for j in range(cfg.m)]
    expected = ["sample_id"] + (["s"] if "s" in header else [])
    expected += slots + [f"target_{c}" for c in slots]
    if header != expected:
        raise ValueError(f"unexpected columns {header}; expected {expected}")
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    has_s = "s" in header
    off = 1 if has_s else 0
    params = data[:, 0] if has_s else None
    inputs = data[:, off : off + cfg.dim]
    targets = data[:, off + cfg.dim :]
    return inputs, targets, params


def derangement_pairing(n: int, seed: int = 0) -> np.ndarray:
    """A fixed-point-free permutation of range(n), by rejection sampling."""
    if n < 2:
        raise ValueError("need at least 2 points to pair")
    rng = np.random.Generator(np.random.PCG64(seed))
    while True:
        q = rng.permutation(n)
        if not np.any(q == np.arange(n)):
            return q
