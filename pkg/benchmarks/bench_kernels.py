"""Compare the jitted and pure-numpy paths of the hot kernels.

Run as:  python benchmarks/bench_kernels.py [--batch 330] [--width 64]

Informs the per-kernel defaults in polyflow.kernels: the elementwise
compress kernels win under numba, the matmul+tanh network kernels win
under numpy (vectorized tanh).  The end-to-end epoch rows are the
authoritative comparison; the isolated network-kernel timings are
sensitive to argument layout and BLAS threading and can flatter either
side, which is exactly why the defaults were chosen from the epoch
timing.
"""

import argparse
import os
import time

# single-threaded BLAS: the kernels operate on small matrices where
# thread synchronization dominates and makes timings unstable
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np


def bench(fn, repeat=200):
    fn()  # warm (jit compile, caches)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=330)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=3, help="epochs for the end-to-end timing")
    args = ap.parse_args()

    import polyflow.kernels as K

    if not K.HAVE_NUMBA:
        print("numba unavailable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    B, w = args.batch, args.width
    X = rng.normal(size=(B, 4))
    W0, b0 = rng.normal(size=(w, 4)) * 0.05, np.zeros(w)
    W1, b1 = rng.normal(size=(w, w)) * 0.05, np.zeros(w)
    W2, b2 = rng.normal(size=(w, w)) * 0.05, np.zeros(w)
    W3 = rng.normal(size=(3, w)) * 0.05
    cot = rng.normal(size=(B, 3))
    y = rng.normal(size=(B, 2)) * 2.0
    rates = np.array([25.0, 25.0])
    out = np.empty_like(y)

    H = K._mlp4_tanh_forward_nb(X, W0, b0, W1, b1, W2, b2, W3)

    rows = [
        ("compress forward", lambda: K._compress_forward_nb(y, rates, 0.5, 1e-7, 1e-6, out),
         lambda: K._compress_forward_np(y, rates, 0.5, 1e-7, 1e-6)),
        ("compress grad", lambda: K._compress_grad_nb(y, rates, 0.5, 1e-7, 1e-6, out),
         lambda: K._compress_grad_np(y, rates, 0.5, 1e-7, 1e-6)),
        ("mlp4 forward", lambda: K._mlp4_tanh_forward_nb(X, W0, b0, W1, b1, W2, b2, W3),
         lambda: K._mlp4_tanh_forward_np(X, W0, b0, W1, b1, W2, b2, W3)),
        ("mlp4 vjp", lambda: K._mlp4_tanh_vjp_nb(X, H[0], H[1], H[2], W0, W1, W2, W3, cot),
         lambda: K._mlp4_tanh_vjp_np(X, H[0], H[1], H[2], W0, W1, W2, W3, cot)),
    ]
    print(f"batch={B} width={w}")
    print(f"{'kernel':<18} {'numba':>12} {'numpy':>12}  winner")
    for name, nb, np_ in rows:
        t_nb, t_np = bench(nb), bench(np_)
        winner = "numba" if t_nb < t_np else "numpy"
        print(f"{name:<18} {t_nb * 1e6:>10.1f}us {t_np * 1e6:>10.1f}us  {winner}")

    # end-to-end: a few desk-scale training epochs under each forced mode
    from polyflow.datasets import SpiralSpec, make_spiral_dataset
    from polyflow.omega import spiral_config
    from polyflow.training import AutoencoderTrainConfig, train_autoencoder

    ds = make_spiral_dataset(SpiralSpec(1.0), spiral_config(), seed=0)
    cfg = AutoencoderTrainConfig(width=w, seed=0, epochs=args.epochs)
    print(f"\nend-to-end spiral epoch (batch {len(ds.inputs)}, width {w}):")
    for mode, flags in (("numba", (True, True)), ("numpy", (False, False)),
                        ("auto", (True, False))):
        K.NUMBA_COMPRESS, K.NUMBA_MLP = flags
        train_autoencoder("spiral", ds, AutoencoderTrainConfig(width=w, seed=0, epochs=1))
        t0 = time.perf_counter()
        train_autoencoder("spiral", ds, cfg)
        dt = (time.perf_counter() - t0) / args.epochs
        print(f"  {mode:<6} {dt:.3f} s/epoch")


if __name__ == "__main__":
    main()
