"""Run artifacts: configs, manifests, CSV logs, checkpoints.

All file writes are atomic (temp file + rename), so interrupted runs
never leave truncated artifacts.  Floats are serialized with Python's
repr, which round-trips IEEE doubles exactly; identical runs therefore
produce byte-identical logs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time

import numpy as np

from . import __version__
from .mlp import mlp_from_dict, mlp_to_dict
from .omega import OmegaConfig
from .training import AdamState, RmspropState


def atomic_write_text(path, text: str):
    path = str(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json_atomic(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True))


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# --- configuration schema -------------------------------------------------
#
# Every constant of the experiment recipes appears here with its
# stock default; user configs override by deep merge.

SPIRAL_DEFAULTS = {
    "task": "spiral",
    "space": {"n": 1, "m": 2, "tau0": -3.0, "tau1": 0.0, "tau2": 1.0,
              "tau_x": -7.0, "tau_y": 8.0},
    "data": {"v": 1.0, "cap": 5000, "seed": 0, "slot_order": [1, 0, 2]},
    "compression": {"rate": 25.0, "a": 0.5, "b": 1e-7, "c": 1e-6},
    "net": {"width": 200, "init": "normal", "sigma": 0.05, "seed": 42},
    "integrator": {"scheme": "euler", "steps_per_stage": 250},
    "loss": {"lambda": 20.0, "t0": 0.25, "pairing_seed": 7},
    "optimizer": {"kind": "rmsprop", "lr": 1e-3, "alpha": 0.99,
                  "momentum": 0.3, "eps": 1e-8},
    "training": {"epochs": 27000, "checkpoint_every": 0, "export_trajectories": 64,
                 "stop_monotonicity": None, "stop_recon": None},
}

SPHERE_DEFAULTS = {
    "task": "sphere",
    "space": {"n": 2, "m": 1, "tau0": -3.0, "tau1": 0.0, "tau2": 3.0,
              "tau_x": -7.0, "tau_y": 10.0},
    "data": {"grid_u": 100, "grid_v": 60, "seed": 0},
    "compression": {"rate": 25.0, "a": 0.5, "b": 1e-7, "c": 1e-6},
    "net": {"width": 200, "init": "normal", "sigma": 0.05, "seed": 42},
    "integrator": {"scheme": "euler", "steps_per_stage": 250},
    "optimizer": {"kind": "rmsprop", "lr": 1e-3, "alpha": 0.99,
                  "momentum": 0.3, "eps": 1e-8},
    "training": {"epochs": 10000, "checkpoint_every": 0, "export_trajectories": 64,
                 "stop_monotonicity": None, "stop_recon": None},
}

CLASSIFY_DEFAULTS = {
    "task": "classify-radial",
    "net": {"width": 512, "seed": 42},
    "integrator": {"steps": 100, "horizon": 1.0},
    "attractors": {"c": 50.0, "k": 64.0 / math.sqrt(2.0),
                   "targets": [[-3.0, 4.0, 0.0], [0.0, 5.0, 0.0], [3.0, 4.0, 0.0]]},
    "optimizer": {"kind": "adam", "lr": 1e-3},
    "scheduler": {"patience": 20, "factor": 0.8},
    "inputs": {"rescale": True, "range": [-3.0, 3.0]},
    "training": {"epochs": 300, "batch_size": 32, "export_trajectories": 64,
                 "stop_accuracy": None},
}

GEOMETRY_DEFAULTS = {
    "m": 2, "tau1": 0.0, "tau2": 1.0,
    "grid": {"lo": -40.0, "hi": 10.0, "h": 0.01},
    "seed": 7, "profile_scale": 1.0, "kmax": 5,
}


def default_config(task: str) -> dict:
    if task == "spiral":
        return json.loads(json.dumps(SPIRAL_DEFAULTS))
    if task == "sphere":
        return json.loads(json.dumps(SPHERE_DEFAULTS))
    if task in ("classify-radial", "classify-angular"):
        cfg = json.loads(json.dumps(CLASSIFY_DEFAULTS))
        cfg["task"] = task
        return cfg
    if task == "geometry":
        return json.loads(json.dumps(GEOMETRY_DEFAULTS))
    raise ValueError(f"unknown task {task!r}")


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, task: str | None = None) -> dict:
    with open(path) as fh:
        user = json.load(fh)
    if "config" in user and "config_hash" in user:
        user = user["config"]  # a run manifest reproduces its own run
    t = task or user.get("task")
    if t is None:
        raise ValueError("config missing 'task'")
    if task is not None and "task" in user and user["task"] != task:
        raise ValueError(f"config is for task {user['task']!r}, requested {task!r}")
    return deep_merge(default_config(t), user)


def space_from_config(cfg: dict) -> OmegaConfig:
    s = cfg["space"]
    return OmegaConfig(int(s["n"]), int(s["m"]), float(s["tau0"]), float(s["tau1"]),
                       float(s["tau2"]), float(s["tau_x"]), float(s["tau_y"]))


# --- CSV helpers ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(rows, columns) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def write_metrics_csv(path, rows, columns):
    atomic_write_text(path, rows_to_csv(rows, columns))


def write_trajectories_csv(path, times, states, slot_names, limit=64):
    """Long-format export: sample_id, t, one column per state slot."""
    n_samples = min(states.shape[1], limit)
    lines = ["sample_id,t," + ",".join(slot_names)]
    for i in range(n_samples):
        for k in range(states.shape[0]):
            vals = ",".join(repr(float(v)) for v in states[k, i])
            lines.append(f"{i},{float(times[k])!r},{vals}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_latent_csv(path, s_values, latent, radial, angular):
    lines = ["sample_id,s,latent,radial_label,angular_label"]
    for i, (s, l, r, a) in enumerate(zip(s_values, latent, radial, angular)):
        lines.append(f"{i},{float(s)!r},{float(l)!r},{int(r)},{int(a)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_latent_csv(path):
    rows = np.genfromtxt(path, delimiter=",", names=True)
    return (np.atleast_1d(rows["s"]), np.atleast_1d(rows["latent"]),
            np.atleast_1d(rows["radial_label"]).astype(int),
            np.atleast_1d(rows["angular_label"]).astype(int))


# --- manifests and checkpoints ----------------------------------------------


def write_manifest(out_dir, cfg: dict, outputs: list):
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "code_version": __version__,
        "created_unix": time.time(),
        "outputs": outputs,
    }
    write_json_atomic(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def autoencoder_checkpoint(epoch, field_obj, opt_state, cfg_hash) -> dict:
    return {
        "epoch": int(epoch),
        "net_pre": mlp_to_dict(field_obj.params.net_pre),
        "net_post": mlp_to_dict(field_obj.params.net_post),
        "optimizer": opt_state.to_dict(),
        "config_hash": cfg_hash,
    }


def load_autoencoder_checkpoint(path):
    with open(path) as fh:
        d = json.load(fh)
    net_pre = mlp_from_dict(d["net_pre"])
    net_post = mlp_from_dict(d["net_post"])
    opt = RmspropState.from_dict(d["optimizer"])
    return d["epoch"], net_pre, net_post, opt, d.get("config_hash")


def classifier_checkpoint(epoch, field_obj, opt_state, cfg_hash) -> dict:
    return {
        "epoch": int(epoch),
        "net": mlp_to_dict(field_obj.params.net),
        "optimizer": opt_state.to_dict(),
        "config_hash": cfg_hash,
    }
