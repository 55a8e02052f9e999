"""Hot numeric kernels: numba-jitted and pure-numpy twins.

Kernels cover the two inner loops that dominate training time: the
compressing field (elementwise, evaluated every solver step) and the
four-layer tanh network used by the reconstruction fields (forward and
vector-Jacobian product over a batch).

Path selection via POLYFLOW_NUMBA: "0" forces numpy everywhere, "1"
forces the jitted path everywhere, unset picks per-kernel defaults from
benchmarks/bench_kernels.py: numba for the branchy elementwise
compress kernels, numpy for the matmul+tanh network kernels (numpy's
vectorized tanh beats numba's scalar libm calls there by ~3x).  Both
paths are exercised by the test suite.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_mode() -> str:
    v = os.environ.get("POLYFLOW_NUMBA", "").strip().lower()
    if v in ("0", "false", "off", "no") or not HAVE_NUMBA:
        return "numpy"
    if v in ("1", "true", "on", "yes"):
        return "numba"
    return "auto"


_MODE = _env_mode()
NUMBA_COMPRESS = _MODE in ("numba", "auto")
NUMBA_MLP = _MODE == "numba"
NUMBA_ENABLED = _MODE != "numpy"  # true if any jitted kernel is active


def use_numba() -> bool:
    return NUMBA_ENABLED


# --- compressing field -------------------------------------------------
#
# F(y) = -k * sign(y) * |y|^a * phi((|y| - b) / (c - b))
# with the cubic ramp phi(x) = (3 - 2x) x^2 on [0, 1], 0 below, 1 above.
# dF/dy = -k a |y|^(a-1) phi - k |y|^a phi' / (c - b), finite at y = 0.


def _compress_forward_np(y, rates, a, b, c):
    ay = np.abs(y)
    x = (ay - b) / (c - b)
    phi = np.where(x < 0.0, 0.0, np.where(x > 1.0, 1.0, (3.0 - 2.0 * x) * x * x))
    return -rates * np.sign(y) * ay**a * phi


def _compress_grad_np(y, rates, a, b, c):
    ay = np.abs(y)
    x = (ay - b) / (c - b)
    phi = np.where(x < 0.0, 0.0, np.where(x > 1.0, 1.0, (3.0 - 2.0 * x) * x * x))
    dphi = np.where((x < 0.0) | (x > 1.0), 0.0, 6.0 * (1.0 - x) * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        power_term = np.where(ay > 0.0, a * ay ** (a - 1.0) * phi, 0.0)
    return -rates * (power_term + ay**a * dphi / (c - b))


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _compress_forward_nb(y, rates, a, b, c, out):
        B, m = y.shape
        for i in range(B):
            for j in range(m):
                v = y[i, j]
                av = abs(v)
                x = (av - b) / (c - b)
                if x < 0.0:
                    out[i, j] = 0.0
                    continue
                phi = 1.0 if x > 1.0 else (3.0 - 2.0 * x) * x * x
                s = 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)
                out[i, j] = -rates[j] * s * av**a * phi

    @numba.njit(cache=True)
    def _compress_grad_nb(y, rates, a, b, c, out):
        B, m = y.shape
        for i in range(B):
            for j in range(m):
                av = abs(y[i, j])
                x = (av - b) / (c - b)
                if x < 0.0 or av == 0.0:
                    out[i, j] = 0.0
                    continue
                if x > 1.0:
                    phi, dphi = 1.0, 0.0
                else:
                    phi = (3.0 - 2.0 * x) * x * x
                    dphi = 6.0 * (1.0 - x) * x
                out[i, j] = -rates[j] * (a * av ** (a - 1.0) * phi + av**a * dphi / (c - b))


def compress_forward(y, rates, a, b, c):
    """Compressing field values; y (..., m), rates (m,)."""
    y = np.asarray(y, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if NUMBA_COMPRESS and y.ndim == 2:
        out = np.empty_like(y)
        _compress_forward_nb(np.ascontiguousarray(y), rates, a, b, c, out)
        return out
    return _compress_forward_np(y, rates, a, b, c)


def compress_grad(y, rates, a, b, c):
    """Elementwise derivative of the compressing field wrt y."""
    y = np.asarray(y, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if NUMBA_COMPRESS and y.ndim == 2:
        out = np.empty_like(y)
        _compress_grad_nb(np.ascontiguousarray(y), rates, a, b, c, out)
        return out
    return _compress_grad_np(y, rates, a, b, c)


# --- four-layer tanh network (bias on the first three layers) ----------
#
# The reconstruction fields always use this architecture, so it gets a
# dedicated fused kernel.  Returns post-activation caches for the VJP.


def _mlp4_tanh_forward_np(X, W0, b0, W1, b1, W2, b2, W3):
    H0 = X @ W0.T
    H0 += b0
    np.tanh(H0, out=H0)
    H1 = H0 @ W1.T
    H1 += b1
    np.tanh(H1, out=H1)
    H2 = H1 @ W2.T
    H2 += b2
    np.tanh(H2, out=H2)
    return H0, H1, H2, H2 @ W3.T


def _mlp4_tanh_vjp_np(X, H0, H1, H2, W0, W1, W2, W3, dOut):
    dW3 = dOut.T @ H2
    dH2 = dOut @ W3
    dZ2 = (1.0 - H2 * H2) * dH2
    dW2, db2 = dZ2.T @ H1, dZ2.sum(axis=0)
    dH1 = dZ2 @ W2
    dZ1 = (1.0 - H1 * H1) * dH1
    dW1, db1 = dZ1.T @ H0, dZ1.sum(axis=0)
    dH0 = dZ1 @ W1
    dZ0 = (1.0 - H0 * H0) * dH0
    dW0, db0 = dZ0.T @ X, dZ0.sum(axis=0)
    dX = dZ0 @ W0
    return dX, dW0, db0, dW1, db1, dW2, db2, dW3


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _affine_tanh_nb(X, W, b):
        Z = np.dot(X, W.T)
        B, d = Z.shape
        for i in range(B):
            for j in range(d):
                Z[i, j] = np.tanh(Z[i, j] + b[j])
        return Z

    @numba.njit(cache=True)
    def _mlp4_tanh_forward_nb(X, W0, b0, W1, b1, W2, b2, W3):
        H0 = _affine_tanh_nb(X, W0, b0)
        H1 = _affine_tanh_nb(H0, W1, b1)
        H2 = _affine_tanh_nb(H1, W2, b2)
        return H0, H1, H2, np.dot(H2, W3.T)

    @numba.njit(cache=True)
    def _tanh_back_nb(H, dH):
        B, d = H.shape
        out = np.empty_like(H)
        for i in range(B):
            for j in range(d):
                out[i, j] = (1.0 - H[i, j] * H[i, j]) * dH[i, j]
        return out

    @numba.njit(cache=True)
    def _mlp4_tanh_vjp_nb(X, H0, H1, H2, W0, W1, W2, W3, dOut):
        dOut = np.ascontiguousarray(dOut)
        dW3 = np.dot(np.ascontiguousarray(dOut.T), H2)
        dZ2 = _tanh_back_nb(H2, np.dot(dOut, W3))
        dW2, db2 = np.dot(np.ascontiguousarray(dZ2.T), H1), dZ2.sum(axis=0)
        dZ1 = _tanh_back_nb(H1, np.dot(dZ2, W2))
        dW1, db1 = np.dot(np.ascontiguousarray(dZ1.T), H0), dZ1.sum(axis=0)
        dZ0 = _tanh_back_nb(H0, np.dot(dZ1, W1))
        dW0, db0 = np.dot(np.ascontiguousarray(dZ0.T), X), dZ0.sum(axis=0)
        dX = np.dot(dZ0, W0)
        return dX, dW0, db0, dW1, db1, dW2, db2, dW3


def mlp4_tanh_forward(X, W0, b0, W1, b1, W2, b2, W3):
    if NUMBA_MLP:
        return _mlp4_tanh_forward_nb(X, W0, b0, W1, b1, W2, b2, W3)
    return _mlp4_tanh_forward_np(X, W0, b0, W1, b1, W2, b2, W3)


def mlp4_tanh_vjp(X, H0, H1, H2, W0, W1, W2, W3, dOut):
    if NUMBA_MLP:
        return _mlp4_tanh_vjp_nb(X, H0, H1, H2, W0, W1, W2, W3, dOut)
    return _mlp4_tanh_vjp_np(X, H0, H1, H2, W0, W1, W2, W3, dOut)
