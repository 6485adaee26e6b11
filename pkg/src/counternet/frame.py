"""Frame-based integer forward pass.

This is the reference semantics: the event runtime must reproduce these
outputs bit-exactly at quiescence. Layer k computes the integer net input
x = W·y_prev and the output y = binary_step(x - theta) or
drelu(x, theta, lambda).

Internally the big matmuls run in float64 (BLAS) because numpy integer
matmul is slow; every product and sum here stays far below 2^53 so the
float path is exact, and debug mode verifies integrality before the cast
back. No fractional value can survive into an output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (LayerSpec, NetworkSpec, OpLedger, QuantizedParams,
                    check_integer_array, debug_enabled, fanout_counts)


def binary_step(x):
    """Hard step: 1 iff x > 0 (strictly), else 0. Vectorized."""
    return (np.asarray(x) > 0).astype(np.int64)


def drelu(x, theta, lam: int):
    """Discretized ReLU: how many whole steps of size lam the net input
    clears above threshold. max(0, (x - theta) // lam) with mathematical
    floor division; for integer arguments this absorbs the tie-breaking
    epsilon of the real-valued form for any eps in (0, 1).
    """
    if lam < 1:
        raise ValueError("lam must be >= 1")
    x = np.asarray(x, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.int64)
    return np.maximum(0, (x - theta) // lam)


def drelu_real(x, theta, lam: int, eps: float = 1e-6):
    """Real-valued form max(0, floor((x - theta + eps) / lam)), for
    cross-checks against the integer version. eps breaks the boundary tie
    the same way the integer floor division does.
    """
    if lam < 1:
        raise ValueError("lam must be >= 1")
    return np.maximum(0, np.floor((np.asarray(x, dtype=np.float64) - theta + eps) / lam))


def conv2d_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid (no padding), stride-1 2-D convolution.

    x: (batch, c_in, h, w); kernel: (c_out, c_in, k, k);
    returns (batch, c_out, h-k+1, w-k+1). Integer inputs come back int64
    (computed exactly through float64), float inputs stay float64.
    """
    was_int = np.issubdtype(x.dtype, np.integer) and np.issubdtype(kernel.dtype, np.integer)
    xf = np.ascontiguousarray(x, dtype=np.float64)
    kf = np.ascontiguousarray(kernel, dtype=np.float64)
    k = kernel.shape[-1]
    win = np.lib.stride_tricks.sliding_window_view(xf, (k, k), axis=(2, 3))
    # win: (batch, c_in, h_o, w_o, k, k); contract over (c_in, k, k)
    out = np.tensordot(win, kf, axes=([1, 4, 5], [1, 2, 3]))
    out = np.moveaxis(out, 3, 1)
    if was_int:
        if debug_enabled() and not np.array_equal(out, np.floor(out)):
            raise AssertionError("integer convolution produced a fractional value")
        return out.astype(np.int64)
    return np.ascontiguousarray(out)


def _net_input(layer: LayerSpec, w: np.ndarray, y_prev: np.ndarray) -> np.ndarray:
    """x = W·y_prev for a batch (batch, in_size) -> (batch, out_size)."""
    if layer.kind == "dense":
        out = y_prev.astype(np.float64) @ w.astype(np.float64).T
        if debug_enabled() and not np.array_equal(out, np.floor(out)):
            raise AssertionError("integer matmul produced a fractional value")
        return out.astype(np.int64)
    b = y_prev.shape[0]
    img = y_prev.reshape((b,) + layer.in_shape)
    return conv2d_valid(img, w).reshape(b, layer.out_size)


def _activate(layer: LayerSpec, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    act = layer.activation
    if act.is_binary:
        return binary_step(x - theta)
    return drelu(x, theta, act.lambda_step)


@dataclass
class ActivationRecord:
    """Per layer: integer net input x = W·y_prev and output y.

    Arrays are (batch, layer_size); single-input calls use batch 1 and
    squeeze on access.
    """
    net_inputs: list
    outputs: list

    def final_x(self) -> np.ndarray:
        return self.net_inputs[-1]

    def final_y(self) -> np.ndarray:
        return self.outputs[-1]


def forward_batch(spec: NetworkSpec, params: QuantizedParams,
                  inputs: np.ndarray) -> ActivationRecord:
    """Run the integer forward pass over a batch (batch, input_size)."""
    y = np.asarray(inputs)
    if y.ndim != 2 or y.shape[1] != spec.input_size:
        raise ValueError(f"inputs must be (batch, {spec.input_size}), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise InvariantError(f"frame input must be integer-typed, got {y.dtype}")
    check_integer_array(y, "frame input")
    y = y.astype(np.int64)
    xs, ys = [], []
    for layer, w, t in zip(spec.layers, params.weights, params.thetas):
        x = _net_input(layer, w, y)
        check_integer_array(x, "frame net input")
        y = _activate(layer, x, t.astype(np.int64))
        xs.append(x)
        ys.append(y)
    return ActivationRecord(xs, ys)


def forward(spec: NetworkSpec, params: QuantizedParams, input_vec,
            ledger: OpLedger | None = None) -> ActivationRecord:
    """Single-input forward pass. If a ledger is given, charge the event
    cost model: each input unit to layer k with value v delivers its weight
    to every fan-out target, v additions per target, regardless of how the
    host arithmetic actually evaluates W·y.
    """
    v = np.asarray(input_vec)
    if v.ndim != 1:
        raise ValueError("input must be a vector")
    rec = forward_batch(spec, params, v[None, :])
    if ledger is not None:
        y_prev = v.astype(np.int64)
        for k, layer in enumerate(spec.layers):
            fans = fanout_counts(layer)
            ledger.count_additions(k + 1, int(np.dot(y_prev, fans)))
            y_prev = rec.outputs[k][0]
    return rec


def _predict_from(final_x: np.ndarray, final_y: np.ndarray,
                  binary_out: bool) -> np.ndarray:
    """Vectorized class decision. Binary output layers: argmax of net input
    (y is 0/1 and often saturates). Step-counting layers: argmax of y,
    ties broken by net input, then by lowest index (numpy argmax picks the
    first maximum, which supplies the lowest-index rule).
    """
    if binary_out:
        return np.argmax(final_x, axis=1)
    best = final_y.max(axis=1, keepdims=True)
    on_max = final_y == best
    # rank by net input among the argmax set only
    keyed = np.where(on_max, final_x, np.iinfo(np.int64).min)
    return np.argmax(keyed, axis=1)


def predict_batch(spec: NetworkSpec, params: QuantizedParams,
                  inputs: np.ndarray) -> np.ndarray:
    rec = forward_batch(spec, params, inputs)
    binary_out = spec.layers[-1].activation.is_binary
    return _predict_from(rec.final_x(), rec.final_y(), binary_out)


def predict(spec: NetworkSpec, params: QuantizedParams, input_vec) -> int:
    return int(predict_batch(spec, params, np.asarray(input_vec)[None, :])[0])


def error_rate(spec: NetworkSpec, params: QuantizedParams,
               inputs: np.ndarray, labels: np.ndarray,
               batch_size: int = 1000) -> float:
    """Fraction of inputs whose predicted class differs from the label."""
    n = inputs.shape[0]
    wrong = 0
    for lo in range(0, n, batch_size):
        pred = predict_batch(spec, params, inputs[lo:lo + batch_size])
        wrong += int(np.sum(pred != labels[lo:lo + batch_size]))
    return wrong / n
