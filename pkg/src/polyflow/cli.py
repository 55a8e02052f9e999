"""Command line entry point.

    polyflow run <spiral|sphere|classify-radial|classify-angular> [flags]
    polyflow verify-geometry [--config geo.json]
    polyflow export-latent --checkpoint ckpt.json --config run.json --out latent.csv

Exit codes: 0 success, 1 configuration error, 2 runtime divergence.
Heavy imports happen after thread environment setup so --threads (or
POLYFLOW_THREADS) can still influence the numeric backends.
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _set_threads(value: str | None):
    threads = value or os.environ.get("POLYFLOW_THREADS")
    if threads:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))


def _build_parser():
    p = argparse.ArgumentParser(prog="polyflow",
                                description="bottleneck-flow experiment runner")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train an experiment")
    run.add_argument("task", choices=["spiral", "sphere", "classify-radial", "classify-angular"])
    run.add_argument("--config", help="JSON config; omitted fields take the stock defaults")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override the network seed")
    run.add_argument("--epochs", type=int, help="override the epoch budget")
    run.add_argument("--latent", help="latent CSV (classification tasks)")
    run.add_argument("--threads", help="thread cap for numeric backends")

    ver = sub.add_parser("verify-geometry", help="run the geometry invariant suite")
    ver.add_argument("--config", help="JSON overrides for the verification setup")
    ver.add_argument("--threads", help="thread cap for numeric backends")

    exp = sub.add_parser("export-latent", help="export latent codes with labels")
    exp.add_argument("--checkpoint", required=True)
    exp.add_argument("--config", help="run config the checkpoint belongs to")
    exp.add_argument("--out", required=True)
    exp.add_argument("--threads", help="thread cap for numeric backends")
    return p


def _load_config(args, task=None):
    from . import artifacts
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"config not found: {args.config}")
        return artifacts.load_config(args.config, task)
    if task is None:
        raise ValueError("a config file is required")
    return artifacts.default_config(task)


def _spiral_dataset(cfg, space):
    from .datasets import SpiralSpec, make_spiral_dataset
    d = cfg["data"]
    return make_spiral_dataset(SpiralSpec(float(d["v"])), space, seed=int(d["seed"]),
                               cap=int(d["cap"]), slot_order=tuple(d["slot_order"]))


def _sphere_dataset(cfg, space):
    from .datasets import SphereSpec, sample_sphere
    d = cfg["data"]
    return sample_sphere(SphereSpec(grid_u=int(d["grid_u"]), grid_v=int(d["grid_v"])),
                         space, seed=int(d["seed"]))


def _train_config(cfg):
    from .training import AutoencoderTrainConfig
    net, opt, tr, comp = cfg["net"], cfg["optimizer"], cfg["training"], cfg["compression"]
    loss = cfg.get("loss", {})
    return AutoencoderTrainConfig(
        width=int(net["width"]), seed=int(net["seed"]), init_sigma=float(net["sigma"]),
        lr=float(opt["lr"]), alpha=float(opt["alpha"]), momentum=float(opt["momentum"]),
        eps=float(opt["eps"]), epochs=int(tr["epochs"]),
        steps_per_stage=int(cfg["integrator"]["steps_per_stage"]),
        lam=float(loss.get("lambda", 20.0)), t0=float(loss.get("t0", 0.25)),
        pairing_seed=int(loss.get("pairing_seed", 7)),
        rate=float(comp["rate"]), a=float(comp["a"]), b=float(comp["b"]), c=float(comp["c"]),
        checkpoint_every=int(tr["checkpoint_every"]),
        stop_monotonicity=tr["stop_monotonicity"], stop_recon=tr["stop_recon"],
    )


AUTOENCODER_COLUMNS = ["epoch", "train_loss", "val_loss", "L1", "L2", "L3",
                       "monotonicity_error", "recon_error", "lr"]
CLASSIFIER_COLUMNS = ["epoch", "train_loss", "accuracy", "lr"]
TIMING_COLUMNS = ["epoch", "wall_time"]


def _run_autoencoder(task, cfg, out_dir):
    import numpy as np

    from . import artifacts
    from .datasets import angular_labels, radial_labels
    from .flow import IntegratorConfig, two_stage_flow
    from .training import train_autoencoder

    space = artifacts.space_from_config(cfg)
    dataset = _spiral_dataset(cfg, space) if task == "spiral" else _sphere_dataset(cfg, space)
    tc = _train_config(cfg)
    cfg_hash = artifacts.config_hash(cfg)
    artifacts.write_manifest(out_dir, cfg, [
        "metrics.csv", "timings.csv", "checkpoint_final.json", "trajectories.csv"])

    checkpoints = []

    def on_epoch(epoch, row, field, opt):
        if tc.checkpoint_every and epoch % tc.checkpoint_every == 0:
            path = os.path.join(out_dir, f"checkpoint_{epoch:06d}.json")
            artifacts.write_json_atomic(
                path, artifacts.autoencoder_checkpoint(epoch, field, opt, cfg_hash))
            checkpoints.append(path)

    art = train_autoencoder(task, dataset, tc, on_epoch=on_epoch)

    artifacts.write_metrics_csv(os.path.join(out_dir, "metrics.csv"),
                                art.metrics, AUTOENCODER_COLUMNS)
    artifacts.write_metrics_csv(os.path.join(out_dir, "timings.csv"),
                                art.timings, TIMING_COLUMNS)

    from .fields import AutoencoderField, AutoencoderFieldParams, CompressionSpec
    field = AutoencoderField(AutoencoderFieldParams(
        art.final_state["net_pre"], art.final_state["net_post"],
        CompressionSpec(np.full(space.m, tc.rate), tc.a, tc.b, tc.c), space))
    artifacts.write_json_atomic(
        os.path.join(out_dir, "checkpoint_final.json"),
        artifacts.autoencoder_checkpoint(art.final_state["epoch"], field,
                                         art.final_state["optimizer"], cfg_hash))

    icfg = IntegratorConfig("euler", tc.steps_per_stage)
    limit = int(cfg["training"]["export_trajectories"])
    res = two_stage_flow(field, dataset.inputs[:limit], icfg)
    times = np.concatenate([res.stage1.times, res.stage2.times])
    states = np.concatenate([res.stage1.states, res.stage2.states])
    slots = (["tau"] + [f"x_{i+1}" for i in range(space.n)]
             + [f"y_{j+1}" for j in range(space.m)])
    artifacts.write_trajectories_csv(os.path.join(out_dir, "trajectories.csv"),
                                     times, states, slots, limit=limit)

    if task == "spiral":
        full = two_stage_flow(field, dataset.inputs, icfg)
        artifacts.write_latent_csv(
            os.path.join(out_dir, "latent.csv"), dataset.s_train, full.latent[:, 1],
            radial_labels(dataset.s_train, dataset.spec),
            angular_labels(dataset.s_train, dataset.spec))

    final = dict(art.metrics[-1])
    final["epochs_run"] = len(art.metrics)
    artifacts.write_json_atomic(os.path.join(out_dir, "report.json"), final)
    return 0


def _run_classifier(task, cfg, out_dir, latent_path):
    import numpy as np

    from . import artifacts
    from .datasets import LabeledLatentSet
    from .flow import IntegratorConfig, integrate
    from .training import ClassifierTrainConfig, train_classifier

    if latent_path is None:
        latent_path = cfg.get("latent")
    if latent_path is None or not os.path.exists(latent_path):
        raise FileNotFoundError("classification needs --latent pointing at an exported latent CSV")
    s, latent, radial, angular = artifacts.read_latent_csv(latent_path)
    latent_set = LabeledLatentSet(s, latent, radial, angular)

    net, opt, tr, att = cfg["net"], cfg["optimizer"], cfg["training"], cfg["attractors"]
    tc = ClassifierTrainConfig(
        width=int(net["width"]), seed=int(net["seed"]), lr=float(opt["lr"]),
        epochs=int(tr["epochs"]), batch_size=int(tr["batch_size"]),
        steps=int(cfg["integrator"]["steps"]), horizon=float(cfg["integrator"]["horizon"]),
        c_att=float(att["c"]), k_att=float(att["k"]),
        targets=tuple(tuple(t) for t in att["targets"]),
        patience=int(cfg["scheduler"]["patience"]), factor=float(cfg["scheduler"]["factor"]),
        rescale_inputs=bool(cfg["inputs"]["rescale"]),
        rescale_range=tuple(cfg["inputs"]["range"]),
        stop_accuracy=tr.get("stop_accuracy"),
    )
    cfg_hash = artifacts.config_hash(cfg)
    artifacts.write_manifest(out_dir, cfg, ["metrics.csv", "timings.csv",
                                            "checkpoint_final.json", "trajectories.csv"])
    mode = "radial" if task.endswith("radial") else "angular"
    art = train_classifier(latent_set, mode, tc)

    artifacts.write_metrics_csv(os.path.join(out_dir, "metrics.csv"),
                                art.metrics, CLASSIFIER_COLUMNS)
    artifacts.write_metrics_csv(os.path.join(out_dir, "timings.csv"),
                                art.timings, TIMING_COLUMNS)

    from .fields import ClassifierField, ClassifierFieldParams
    field = ClassifierField(ClassifierFieldParams(
        art.final_state["net"], np.asarray(tc.targets), tc.c_att, tc.k_att))
    artifacts.write_json_atomic(
        os.path.join(out_dir, "checkpoint_final.json"),
        artifacts.classifier_checkpoint(art.final_state["epoch"], field,
                                        art.final_state["optimizer"], cfg_hash))
    limit = int(tr["export_trajectories"])
    starts = art.extra["starts"][:limit]
    traj = integrate(field, starts, 0.0, tc.horizon, IntegratorConfig("euler", tc.steps))
    artifacts.write_trajectories_csv(os.path.join(out_dir, "trajectories.csv"),
                                     traj.times, traj.states, ["x", "y", "z"], limit=limit)
    labels = art.extra["labels"][:limit]
    lines = ["sample_id,label"] + [f"{i},{int(l)}" for i, l in enumerate(labels)]
    artifacts.atomic_write_text(os.path.join(out_dir, "trajectory_labels.csv"),
                                "\n".join(lines) + "\n")
    targets_lines = ["label,x,y,z"] + [
        f"{i},{t[0]!r},{t[1]!r},{t[2]!r}" for i, t in enumerate(tc.targets)]
    artifacts.atomic_write_text(os.path.join(out_dir, "targets.csv"),
                                "\n".join(targets_lines) + "\n")

    final = dict(art.metrics[-1])
    final["epochs_run"] = len(art.metrics)
    final["best_accuracy"] = max(r["accuracy"] for r in art.metrics)
    artifacts.write_json_atomic(os.path.join(out_dir, "report.json"), final)
    return 0


def cmd_run(args) -> int:
    from .flow import DivergenceError
    from .training import DivergedError
    try:
        cfg = _load_config(args, args.task)
        if args.seed is not None:
            cfg["net"]["seed"] = args.seed
        if args.epochs is not None:
            cfg["training"]["epochs"] = args.epochs
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    try:
        if args.task in ("spiral", "sphere"):
            return _run_autoencoder(args.task, cfg, out_dir)
        return _run_classifier(args.task, cfg, out_dir, args.latent)
    except (DivergedError, DivergenceError) as e:
        print(f"runtime divergence: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


def cmd_verify_geometry(args) -> int:
    from .verify import format_report, run_geometry_checks
    try:
        cfg = {}
        if args.config:
            if not os.path.exists(args.config):
                raise FileNotFoundError(f"config not found: {args.config}")
            with open(args.config) as fh:
                cfg = json.load(fh)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    results = run_geometry_checks(cfg)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 3


def cmd_export_latent(args) -> int:
    import numpy as np

    from . import artifacts
    from .datasets import angular_labels, radial_labels
    from .fields import AutoencoderField, AutoencoderFieldParams, CompressionSpec
    from .flow import IntegratorConfig, two_stage_flow
    try:
        cfg = _load_config(args, "spiral")
        space = artifacts.space_from_config(cfg)
        _, net_pre, net_post, _, _ = artifacts.load_autoencoder_checkpoint(args.checkpoint)
        dataset = _spiral_dataset(cfg, space)
        comp = cfg["compression"]
        field = AutoencoderField(AutoencoderFieldParams(
            net_pre, net_post,
            CompressionSpec(np.full(space.m, float(comp["rate"])), float(comp["a"]),
                            float(comp["b"]), float(comp["c"])), space))
        res = two_stage_flow(field, dataset.inputs,
                             IntegratorConfig("euler", int(cfg["integrator"]["steps_per_stage"])))
        artifacts.write_latent_csv(args.out, dataset.s_train, res.latent[:, 1],
                                   radial_labels(dataset.s_train, dataset.spec),
                                   angular_labels(dataset.s_train, dataset.spec))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _set_threads(getattr(args, "threads", None))
    if args.command == "run":
        return cmd_run(args)
    if args.command == "verify-geometry":
        return cmd_verify_geometry(args)
    if args.command == "export-latent":
        return cmd_export_latent(args)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
