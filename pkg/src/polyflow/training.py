"""Losses, optimizers, scheduler and the experiment training loops.

Reconstruction trains full-batch with RMSprop (momentum 0.3) on the
two-stage flow; classification trains minibatch with Adam and a
reduce-on-plateau schedule.  All loops are deterministic given their
seeds: randomness enters only through initialization, data sampling,
pairing and batch shuffling, each with an explicit generator.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as metrics_mod
from .datasets import (LabeledLatentSet, SpiralDataset, SphereDataset,
                       derangement_pairing, spiral_distance)
from .fields import (AutoencoderField, AutoencoderFieldParams, ClassifierField,
                     ClassifierFieldParams, CompressionSpec)
from .flow import IntegratorConfig, TwoStageResult, integrate, two_stage_flow, discrete_adjoint
from .mlp import Mlp, mlp_init
from .omega import OmegaConfig


# --- losses ---------------------------------------------------------------


@dataclass(frozen=True)
class SpiralLossConfig:
    lam: float = 20.0
    t0: float = 0.25
    c_d: float = 1.0  # square root of the intrinsic diameter
    pairing_seed: int = 7

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not (0.0 < self.t0 < 0.5):
            raise ValueError("t0 must lie in (0, 1/2)")


def loss_mse(finals, targets):
    """Mean squared Euclidean error and its cotangent."""
    finals = np.atleast_2d(np.asarray(finals, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if finals.shape != targets.shape:
        raise ValueError("finals/targets shape mismatch")
    diff = finals - targets
    value = float((diff**2).sum(axis=1).mean())
    return value, 2.0 * diff / len(finals)


def loss_spiral(result: TwoStageResult, targets, dists, pairing, cfg: SpiralLossConfig,
                n: int = 1):
    """Three-term spiral loss with analytic cotangents.

    Returns (total, parts, cot_final, cot_t0) where parts is a dict of
    the three terms, cot_final attaches at t = 1 and cot_t0 at the
    interior time t0.  dists[i] is the intrinsic distance between
    sample i and its partner pairing[i].
    """
    finals = result.final
    B = len(finals)
    if len(pairing) != B or len(dists) != B:
        raise ValueError("pairing does not match the batch")
    idx_t0 = int(round(cfg.t0 / result.stage1.h))
    states_t0 = result.stage1.at_index(idx_t0)

    l1, cot_final = loss_mse(finals, targets)

    y_t0 = states_t0[:, 1 + n :]
    dev = y_t0 - 1.0
    l2 = float((dev**2).sum(axis=1).mean())
    cot_t0 = np.zeros_like(states_t0)
    cot_t0[:, 1 + n :] = cfg.lam * 2.0 * dev / B

    x_t0 = states_t0[:, 1]
    dx = x_t0 - x_t0[pairing]
    resid = dists - cfg.c_d * np.abs(dx)
    l3 = float(np.abs(resid).mean())
    g = -np.sign(resid) * cfg.c_d * np.sign(dx) * cfg.lam / B
    np.add.at(cot_t0[:, 1], np.arange(B), g)
    np.add.at(cot_t0[:, 1], pairing, -g)

    total = l1 + cfg.lam * (l2 + l3)
    parts = {"L1": l1, "L2": l2, "L3": l3}
    return total, parts, cot_final, {idx_t0: cot_t0}


# --- optimizers -----------------------------------------------------------


@dataclass
class RmspropState:
    lr: float = 1e-3
    alpha: float = 0.99
    momentum: float = 0.3
    eps: float = 1e-8
    square_avg: np.ndarray | None = None
    buf: np.ndarray | None = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if params.shape != grads.shape:
            raise ValueError("parameter/gradient shape mismatch")
        if self.square_avg is None:
            self.square_avg = np.zeros_like(params)
            self.buf = np.zeros_like(params)
        self.square_avg = self.alpha * self.square_avg + (1.0 - self.alpha) * grads**2
        self.buf = self.momentum * self.buf + grads / np.sqrt(self.square_avg + self.eps)
        return params - self.lr * self.buf

    def to_dict(self):
        return {
            "kind": "rmsprop", "lr": self.lr, "alpha": self.alpha,
            "momentum": self.momentum, "eps": self.eps,
            "square_avg": None if self.square_avg is None else self.square_avg.tolist(),
            "buf": None if self.buf is None else self.buf.tolist(),
        }

    @staticmethod
    def from_dict(d):
        st = RmspropState(d["lr"], d["alpha"], d["momentum"], d["eps"])
        if d["square_avg"] is not None:
            st.square_avg = np.array(d["square_avg"], dtype=float)
            st.buf = np.array(d["buf"], dtype=float)
        return st


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if params.shape != grads.shape:
            raise ValueError("parameter/gradient shape mismatch")
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads**2
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def to_dict(self):
        return {
            "kind": "adam", "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
            "eps": self.eps, "t": self.t,
            "m": None if self.m is None else self.m.tolist(),
            "v": None if self.v is None else self.v.tolist(),
        }

    @staticmethod
    def from_dict(d):
        st = AdamState(d["lr"], d["beta1"], d["beta2"], d["eps"], d["t"])
        if d["m"] is not None:
            st.m = np.array(d["m"], dtype=float)
            st.v = np.array(d["v"], dtype=float)
        return st


@dataclass
class PlateauScheduler:
    """Reduce the learning rate when the loss stops improving.

    The rate shrinks by `factor` at the 21st consecutive epoch without a
    new best (patience 20); an improvement or a reduction resets the
    stale counter.
    """

    patience: int = 20
    factor: float = 0.8
    best: float = math.inf
    stale: int = 0

    def __post_init__(self):
        if not (0.0 < self.factor < 1.0) or self.patience < 1:
            raise ValueError("need factor in (0,1) and patience >= 1")

    def update(self, lr: float, epoch_loss: float) -> float:
        if epoch_loss < self.best:
            self.best = epoch_loss
            self.stale = 0
            return lr
        self.stale += 1
        if self.stale >= self.patience:
            self.stale = 0
            return lr * self.factor
        return lr


# --- training loops -------------------------------------------------------


@dataclass
class RunArtifacts:
    metrics: list
    timings: list
    checkpoints: list
    final_state: dict
    extra: dict = field(default_factory=dict)


@dataclass
class AutoencoderTrainConfig:
    width: int = 200
    seed: int = 42
    init_sigma: float = 0.05
    lr: float = 1e-3
    alpha: float = 0.99
    momentum: float = 0.3
    eps: float = 1e-8
    epochs: int = 1000
    steps_per_stage: int = 250
    lam: float = 20.0
    t0: float = 0.25
    pairing_seed: int = 7
    rate: float = 25.0
    a: float = 0.5
    b: float = 1e-7
    c: float = 1e-6
    checkpoint_every: int = 0
    stop_monotonicity: float | None = None
    stop_recon: float | None = None


def build_autoencoder_field(cfg: OmegaConfig, train_cfg: AutoencoderTrainConfig) -> AutoencoderField:
    d = cfg.dim
    dims = [d, train_cfg.width, train_cfg.width, train_cfg.width, d - 1]
    net_pre = mlp_init(dims, train_cfg.seed, "tanh", "normal", train_cfg.init_sigma)
    net_post = mlp_init(dims, train_cfg.seed + 1, "tanh", "normal", train_cfg.init_sigma)
    comp = CompressionSpec(np.full(cfg.m, train_cfg.rate), train_cfg.a, train_cfg.b, train_cfg.c)
    return AutoencoderField(AutoencoderFieldParams(net_pre, net_post, comp, cfg))


def _set_params(field_obj: AutoencoderField, flat_pre, flat_post):
    field_obj.params.net_pre.unflatten(flat_pre)
    field_obj.params.net_post.unflatten(flat_post)


class DivergedError(RuntimeError):
    pass


def train_autoencoder(task: str, dataset, train_cfg: AutoencoderTrainConfig,
                      field_obj: AutoencoderField | None = None,
                      opt_state: RmspropState | None = None,
                      start_epoch: int = 0,
                      on_epoch=None) -> RunArtifacts:
    """Full-batch reconstruction training.

    task 'spiral' uses the three-term loss; 'sphere' plain MSE.  Metrics
    are logged per epoch; on_epoch(epoch, row, field) runs after each
    (checkpoint cadence, early stopping hooks).
    """
    if task not in ("spiral", "sphere"):
        raise ValueError(f"unknown task {task!r}")
    cfg = dataset.cfg
    if field_obj is None:
        field_obj = build_autoencoder_field(cfg, train_cfg)
    icfg = IntegratorConfig("euler", train_cfg.steps_per_stage)
    if opt_state is None:
        opt_state = RmspropState(train_cfg.lr, train_cfg.alpha, train_cfg.momentum, train_cfg.eps)

    if task == "spiral":
        pairing = derangement_pairing(len(dataset.inputs), train_cfg.pairing_seed)
        dists = spiral_distance(dataset.s_train, dataset.s_train[pairing], dataset.spec)
        loss_cfg = SpiralLossConfig(
            train_cfg.lam, train_cfg.t0, math.sqrt(dataset.intrinsic_diameter),
            train_cfg.pairing_seed,
        )
    diameter = dataset.extrinsic_diameter

    flat_pre = field_obj.params.net_pre.flatten()
    flat_post = field_obj.params.net_post.flatten()
    n_pre = len(flat_pre)
    rows, timings, checkpoints = [], [], []

    # Each epoch measures the current parameters first (training loss,
    # validation, alignment), logs, and only then takes the optimizer
    # step; stopping on a met target therefore leaves exactly the
    # measured parameters in place.
    for epoch in range(start_epoch, train_cfg.epochs):
        tic = time.perf_counter()
        result = two_stage_flow(field_obj, dataset.inputs, icfg)
        if task == "spiral":
            total, parts, cot_final, extras = loss_spiral(
                result, dataset.targets, dists, pairing, loss_cfg, cfg.n)
        else:
            total, cot_final = loss_mse(result.final, dataset.targets)
            parts, extras = {"L1": total, "L2": 0.0, "L3": 0.0}, None
        if not np.isfinite(total):
            raise DivergedError(f"non-finite loss at epoch {epoch}")

        val_result = two_stage_flow(field_obj, dataset.val_inputs, icfg)
        val_loss, _ = loss_mse(val_result.final, dataset.val_targets)
        if task == "spiral":
            order = np.argsort(dataset.s_train)
            mono = metrics_mod.monotonicity_error(result.latent[order, 1])
        else:
            mono = 0.0
        recon = metrics_mod.relative_reconstruction_error(
            val_result.final, dataset.val_targets, diameter)
        row = {
            "epoch": epoch, "train_loss": total, "val_loss": val_loss,
            "L1": parts["L1"], "L2": parts["L2"], "L3": parts["L3"],
            "monotonicity_error": mono, "recon_error": recon, "lr": opt_state.lr,
        }
        rows.append(row)
        if on_epoch is not None:
            on_epoch(epoch, row, field_obj, opt_state)
        if (train_cfg.stop_monotonicity is not None and train_cfg.stop_recon is not None
                and mono <= train_cfg.stop_monotonicity and recon <= train_cfg.stop_recon):
            timings.append({"epoch": epoch, "wall_time": time.perf_counter() - tic})
            break

        grads, _ = discrete_adjoint(field_obj, result, cot_final, extras)
        g_pre, g_post = grads
        joint = opt_state.step(np.concatenate([flat_pre, flat_post]),
                               np.concatenate([g_pre, g_post]))
        flat_pre, flat_post = joint[:n_pre], joint[n_pre:]
        _set_params(field_obj, flat_pre, flat_post)
        timings.append({"epoch": epoch, "wall_time": time.perf_counter() - tic})

    return RunArtifacts(rows, timings, checkpoints, {
        "net_pre": field_obj.params.net_pre,
        "net_post": field_obj.params.net_post,
        "optimizer": opt_state,
        "epoch": rows[-1]["epoch"] if rows else start_epoch - 1,
    })


@dataclass
class ClassifierTrainConfig:
    width: int = 512
    seed: int = 42
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    steps: int = 100
    horizon: float = 1.0
    c_att: float = 50.0
    k_att: float = 64.0 / math.sqrt(2.0)
    targets: tuple = ((-3.0, 4.0, 0.0), (0.0, 5.0, 0.0), (3.0, 4.0, 0.0))
    patience: int = 20
    factor: float = 0.8
    rescale_inputs: bool = True
    rescale_range: tuple = (-3.0, 3.0)
    stop_accuracy: float | None = None


def build_classifier_field(train_cfg: ClassifierTrainConfig) -> ClassifierField:
    w = train_cfg.width
    net = mlp_init(
        [4, w, w, w, 3], train_cfg.seed, activation="relu", init="xavier-uniform",
        bias_pattern=[True, True, True, True], skips=((1, 2),),
    )
    return ClassifierField(ClassifierFieldParams(
        net, np.asarray(train_cfg.targets), train_cfg.c_att, train_cfg.k_att))


def classifier_inputs(latent: np.ndarray, train_cfg: ClassifierTrainConfig) -> np.ndarray:
    """Augment latent line values to R^3 starts (l, 0, 0), optionally rescaled."""
    l = np.asarray(latent, dtype=float)
    if train_cfg.rescale_inputs:
        lo, hi = float(l.min()), float(l.max())
        a, b = train_cfg.rescale_range
        l = a + (l - lo) * (b - a) / (hi - lo) if hi > lo else np.full_like(l, 0.5 * (a + b))
    out = np.zeros((len(l), 3))
    out[:, 0] = l
    return out


def train_classifier(latent_set: LabeledLatentSet, mode: str,
                     train_cfg: ClassifierTrainConfig, on_epoch=None) -> RunArtifacts:
    """Minibatch Adam training of the classification flow."""
    if mode not in ("radial", "angular"):
        raise ValueError(f"unknown mode {mode!r}")
    labels = latent_set.radial if mode == "radial" else latent_set.angular
    starts = classifier_inputs(latent_set.latent, train_cfg)
    targets = np.asarray(train_cfg.targets)
    point_targets = targets[labels]

    field_obj = build_classifier_field(train_cfg)
    flat = field_obj.params.net.flatten()
    opt = AdamState(train_cfg.lr)
    sched = PlateauScheduler(train_cfg.patience, train_cfg.factor)
    icfg = IntegratorConfig("euler", train_cfg.steps)
    rng = np.random.Generator(np.random.PCG64(train_cfg.seed + 1))
    B = len(starts)
    rows, timings = [], []

    for epoch in range(train_cfg.epochs):
        tic = time.perf_counter()
        perm = rng.permutation(B)
        epoch_loss = 0.0
        for lo in range(0, B, train_cfg.batch_size):
            sel = perm[lo : lo + train_cfg.batch_size]
            traj = integrate(field_obj, starts[sel], 0.0, train_cfg.horizon, icfg)
            loss, cot = loss_mse(traj.final(), point_targets[sel])
            if not np.isfinite(loss):
                raise DivergedError(f"non-finite loss at epoch {epoch}")
            grads, _ = discrete_adjoint(field_obj, traj, cot)
            flat = opt.step(flat, grads)
            field_obj.params.net.unflatten(flat)
            epoch_loss += loss * len(sel)
        epoch_loss /= B
        opt.lr = sched.update(opt.lr, epoch_loss)

        final_states = integrate(field_obj, starts, 0.0, train_cfg.horizon, icfg).final()
        acc = metrics_mod.classification_accuracy(final_states, labels, targets)
        row = {"epoch": epoch, "train_loss": epoch_loss, "accuracy": acc, "lr": opt.lr}
        rows.append(row)
        timings.append({"epoch": epoch, "wall_time": time.perf_counter() - tic})
        if on_epoch is not None:
            on_epoch(epoch, row, field_obj, opt)
        if train_cfg.stop_accuracy is not None and acc >= train_cfg.stop_accuracy:
            break

    return RunArtifacts(rows, timings, [], {
        "net": field_obj.params.net, "optimizer": opt,
        "epoch": rows[-1]["epoch"] if rows else -1,
    }, extra={"starts": starts, "labels": labels, "mode": mode})
