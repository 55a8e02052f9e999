"""Fully connected networks with hand-derived vector-Jacobian products.

The layer vocabulary is fixed: affine layers, tanh or relu between them
(never after the last), optional identity skip connections adding the
post-activation output of an earlier layer to a later one.  Gradients
are exact VJPs of this composition; no autodiff tape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    bias: bool = True


class Mlp:
    """Weights, biases and the forward/VJP pair for one network.

    skips is a tuple of (src, dst) layer indices: the output of layer
    src (post-activation) is added to the output of layer dst.
    """

    def __init__(self, layers, weights, biases, activation="tanh", skips=()):
        self.layers = tuple(layers)
        self.weights = list(weights)
        self.biases = list(biases)
        self.activation = activation
        self.skips = tuple(tuple(p) for p in skips)
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        for i, spec in enumerate(self.layers):
            if self.weights[i].shape != (spec.out_dim, spec.in_dim):
                raise ValueError(f"layer {i}: weight shape mismatch")
            if spec.bias and self.biases[i].shape != (spec.out_dim,):
                raise ValueError(f"layer {i}: bias shape mismatch")
            if i > 0 and spec.in_dim != self.layers[i - 1].out_dim:
                raise ValueError(f"layer {i}: incompatible with layer {i - 1}")
        for src, dst in self.skips:
            if not (0 <= src < dst < len(self.layers)):
                raise ValueError(f"bad skip pair ({src}, {dst})")
            if self.layers[src].out_dim != self.layers[dst].out_dim:
                raise ValueError(f"skip ({src}, {dst}) joins incompatible widths")
        if not all(np.all(np.isfinite(w)) for w in self.weights):
            raise ValueError("non-finite weights")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    # The reconstruction nets are always depth 4, tanh, bias on the
    # first three layers and none on the last; that shape dispatches to
    # the fused kernel.
    @property
    def _is_fused4(self) -> bool:
        return (
            len(self.layers) == 4
            and self.activation == "tanh"
            and not self.skips
            and tuple(s.bias for s in self.layers) == (True, True, True, False)
        )

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def forward(self, X):
        """Batched forward pass.

        Returns (out, cache); cache holds the input and every layer's
        pre-skip post-activation output, which is what the VJP needs.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {X.shape[1]}")
        if self._is_fused4:
            W, b = self.weights, self.biases
            H0, H1, H2, out = kernels.mlp4_tanh_forward(
                X, W[0], b[0], W[1], b[1], W[2], b[2], W[3]
            )
            return out, (X, [H0, H1, H2, out], [H0, H1, H2, out])
        h = X
        acts, outs = [], []
        for i, spec in enumerate(self.layers):
            z = h @ self.weights[i].T
            if spec.bias:
                z = z + self.biases[i]
            a = self._act(z) if i < len(self.layers) - 1 else z
            o = a
            for src, dst in self.skips:
                if dst == i:
                    o = o + outs[src]
            acts.append(a)
            outs.append(o)
            h = o
        return h, (X, acts, outs)

    def vjp(self, cache, cotangent):
        """Pull a cotangent on the output back to (d_input, grads).

        grads mirrors (weights, biases) with None for absent biases.
        """
        X, acts, outs = cache
        cot = np.atleast_2d(np.asarray(cotangent, dtype=float))
        if self._is_fused4:
            W = self.weights
            dX, dW0, db0, dW1, db1, dW2, db2, dW3 = kernels.mlp4_tanh_vjp(
                X, acts[0], acts[1], acts[2], W[0], W[1], W[2], W[3], cot
            )
            return dX, ([dW0, dW1, dW2, dW3], [db0, db1, db2, None])
        n_layers = len(self.layers)
        d_out = [np.zeros_like(o) for o in outs]
        d_out[-1] = cot
        dW = [None] * n_layers
        db = [None] * n_layers
        for i in reversed(range(n_layers)):
            da = d_out[i]
            for src, dst in self.skips:
                if dst == i:
                    d_out[src] = d_out[src] + da
            if i < n_layers - 1:
                if self.activation == "tanh":
                    dz = (1.0 - acts[i] * acts[i]) * da
                else:
                    dz = np.where(acts[i] > 0.0, da, 0.0)
            else:
                dz = da
            h_in = X if i == 0 else outs[i - 1]
            dW[i] = dz.T @ h_in
            db[i] = dz.sum(axis=0) if self.layers[i].bias else None
            if i > 0:
                d_out[i - 1] = d_out[i - 1] + dz @ self.weights[i]
            else:
                d_in = dz @ self.weights[i]
        return d_in, (dW, db)

    # --- parameter plumbing -------------------------------------------

    def param_arrays(self):
        out = []
        for i, spec in enumerate(self.layers):
            out.append(self.weights[i])
            if spec.bias:
                out.append(self.biases[i])
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays()])

    def unflatten(self, vec: np.ndarray):
        """Write a flat vector back into the weight/bias arrays."""
        pos = 0
        for i, spec in enumerate(self.layers):
            n = self.weights[i].size
            self.weights[i] = vec[pos : pos + n].reshape(self.weights[i].shape).copy()
            pos += n
            if spec.bias:
                n = self.biases[i].size
                self.biases[i] = vec[pos : pos + n].copy()
                pos += n
        if pos != len(vec):
            raise ValueError("flat vector length mismatch")

    def flatten_grads(self, grads) -> np.ndarray:
        dW, db = grads
        out = []
        for i, spec in enumerate(self.layers):
            out.append(dW[i].ravel())
            if spec.bias:
                out.append(db[i].ravel())
        return np.concatenate(out)

    def num_params(self) -> int:
        return sum(a.size for a in self.param_arrays())

    def copy(self) -> "Mlp":
        return Mlp(
            self.layers,
            [w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            self.activation,
            self.skips,
        )


def mlp_init(layer_dims, seed, activation="tanh", init="normal", sigma=0.05,
             bias_pattern=None, skips=()) -> Mlp:
    """Deterministically initialize a network.

    init 'normal' draws weights N(0, sigma^2); 'xavier-uniform' draws
    U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).  Biases start at 0.
    bias_pattern defaults to bias on every layer but the last.
    """
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ValueError("need at least one layer")
    n_layers = len(dims) - 1
    if bias_pattern is None:
        bias_pattern = [True] * (n_layers - 1) + [False]
    if len(bias_pattern) != n_layers:
        raise ValueError("bias_pattern length mismatch")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers, weights, biases = [], [], []
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        if init == "normal":
            W = rng.normal(0.0, sigma, size=(fan_out, fan_in))
        elif init == "xavier-uniform":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        else:
            raise ValueError(f"unknown init {init!r}")
        layers.append(LayerSpec(fan_in, fan_out, bool(bias_pattern[i])))
        weights.append(W)
        biases.append(np.zeros(fan_out) if bias_pattern[i] else None)
    net = Mlp(layers, weights, biases, activation, skips)
    net.init_meta = {"seed": int(seed), "init": init, "sigma": float(sigma)}
    return net


# --- checkpoint serialization ------------------------------------------
#
# JSON with plain decimal floats: Python's float repr round-trips IEEE
# doubles exactly, so write/read is bit-exact.


def mlp_to_dict(net: Mlp) -> dict:
    meta = getattr(net, "init_meta", {})
    return {
        "layers": [[s.in_dim, s.out_dim, s.bias] for s in net.layers],
        "activation": net.activation,
        "skips": [list(p) for p in net.skips],
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [None if b is None else b.tolist() for b in net.biases],
        "seed": meta.get("seed"),
        "init": meta.get("init"),
        "sigma": meta.get("sigma"),
    }


def mlp_from_dict(d: dict) -> Mlp:
    layers = [LayerSpec(a, b, c) for a, b, c in d["layers"]]
    weights = [
        np.array(w, dtype=float).reshape(s.out_dim, s.in_dim)
        for w, s in zip(d["weights"], layers)
    ]
    biases = [None if b is None else np.array(b, dtype=float) for b in d["biases"]]
    net = Mlp(layers, weights, biases, d["activation"], [tuple(p) for p in d["skips"]])
    net.init_meta = {"seed": d.get("seed"), "init": d.get("init"), "sigma": d.get("sigma")}
    return net


def save_mlp(net: Mlp, path):
    with open(path, "w") as fh:
        json.dump(mlp_to_dict(net), fh)


def load_mlp(path) -> Mlp:
    with open(path) as fh:
        return mlp_from_dict(json.load(fh))
