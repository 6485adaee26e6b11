"""Surrogate-gradient training of integer networks.

The forward pass is the real thing: quantized integer parameters and
discrete activations, exactly what inference will run. The backward pass
recomputes each layer's net input from real-valued shadow parameters
(and the discrete layer inputs), then differentiates a smooth surrogate
in place of the discrete activation: a steep logistic for the binary
step, a shifted/scaled ReLU for the step-counting activation. Adam
updates the shadows; re-quantization keeps forward params equal to
quantize(shadow) after every step.

A fully-surrogate "testing mode" (continuous activations feeding forward
as well) makes the whole loss differentiable so analytic gradients can be
checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import frame
from .model import (LayerSpec, NetworkSpec, QuantizedParams,
                    _activation_from_json, _activation_to_json,
                    quantize_thetas, quantize_weights, stream_rng)

CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    """Knobs for fit/train_step.

    learning_rate defaults to the dense-network value; convolutional runs
    conventionally use 0.01. sigmoid_steepness is the slope of the logistic
    surrogate for binary activations; integer net inputs are large, so
    useful values are well below 1.
    """
    learning_rate: float = 0.005
    batch_size: int = 200
    epochs: int = 40
    target_val_error: float | None = None
    sigmoid_steepness: float = 1.0
    bias_penalty_weight: float = 1.0
    patience: int | None = None     # epochs without val improvement before giving up
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.sigmoid_steepness <= 0:
            raise ValueError("sigmoid_steepness must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


# ---------------------------------------------------------------------------
# surrogate activations
# ---------------------------------------------------------------------------

def surrogate_sigmoid(x, steepness: float):
    """Logistic stand-in for the binary step: 1 / (1 + exp(-steepness*x))."""
    t = np.asarray(x, dtype=np.float64) * steepness
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def surrogate_sigmoid_grad(x, steepness: float):
    s = surrogate_sigmoid(x, steepness)
    return steepness * s * (1.0 - s)


def surrogate_drelu(x, lam: int):
    """Shifted/scaled ReLU stand-in for the step count: max(0, x/lam - 1/2)."""
    if lam < 1:
        raise ValueError("lam must be >= 1")
    return np.maximum(0.0, np.asarray(x, dtype=np.float64) / lam - 0.5)


def surrogate_drelu_grad(x, lam: int):
    if lam < 1:
        raise ValueError("lam must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    return (x / lam - 0.5 > 0).astype(np.float64) / lam


def _surrogate_value(layer: LayerSpec, x, steepness: float):
    act = layer.activation
    if act.is_binary:
        return surrogate_sigmoid(x, steepness)
    return surrogate_drelu(x, act.lambda_step)


def _surrogate_grad(layer: LayerSpec, x, steepness: float):
    act = layer.activation
    if act.is_binary:
        return surrogate_sigmoid_grad(x, steepness)
    return surrogate_drelu_grad(x, act.lambda_step)


def _logits_from(layer: LayerSpec, x_tilde, steepness: float):
    """Class scores from the output layer's real net input: the surrogate's
    pre-clamp argument, left unclamped so gradients flow on both sides."""
    act = layer.activation
    if act.is_binary:
        return steepness * x_tilde
    return x_tilde / act.lambda_step - 0.5


def _logits_grad_factor(layer: LayerSpec, steepness: float) -> float:
    act = layer.activation
    if act.is_binary:
        return steepness
    return 1.0 / act.lambda_step


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient wrt logits ((softmax - onehot)/n)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    logprob = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -logprob[np.arange(n), labels].mean()
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def bias_penalty(shadow_thetas, weight: float):
    """Hinge on negative shadow thresholds: weight * sum(max(0, -theta))."""
    total = 0.0
    for t in shadow_thetas:
        total += np.maximum(0.0, -t).sum()
    return weight * total


# ---------------------------------------------------------------------------
# checkpoint
# ---------------------------------------------------------------------------

@dataclass
class TrainerCheckpoint:
    """Shadow parameters, Adam moments, step count, and the quantized
    forward parameters (always equal to quantize(shadow))."""
    spec: NetworkSpec
    shadow_weights: list
    shadow_thetas: list
    m_w: list
    v_w: list
    m_t: list
    v_t: list
    step: int = 0
    last_loss: float = 0.0
    params: QuantizedParams = field(init=False)

    def __post_init__(self):
        self.requantize()

    def requantize(self) -> None:
        self.params = QuantizedParams(
            [quantize_weights(w) for w in self.shadow_weights],
            [quantize_thetas(t) for t in self.shadow_thetas],
            [w.copy() for w in self.shadow_weights],
            [t.copy() for t in self.shadow_thetas],
        )


def _fan_in(layer: LayerSpec) -> int:
    if layer.kind == "dense":
        return layer.in_size
    return layer.in_shape[0] * layer.kernel_size * layer.kernel_size


def init_checkpoint(spec: NetworkSpec, seed: int) -> TrainerCheckpoint:
    """Uniform integer-scale weight init: shadow ~ U(-a, a), a = 128/sqrt(fan_in);
    thresholds start at 0 (equal within every conv feature map)."""
    sw, st = [], []
    for k, layer in enumerate(spec.layers):
        rng = stream_rng(seed, f"init-layer{k}")
        a = 128.0 / np.sqrt(_fan_in(layer))
        sw.append(rng.uniform(-a, a, size=layer.weight_shape))
        st.append(np.zeros(layer.out_size, dtype=np.float64))
    zeros_w = [np.zeros_like(w) for w in sw]
    zeros_t = [np.zeros_like(t) for t in st]
    return TrainerCheckpoint(spec, sw, st,
                             [z.copy() for z in zeros_w], [z.copy() for z in zeros_w],
                             [z.copy() for z in zeros_t], [z.copy() for z in zeros_t])


def save_checkpoint(ckpt: TrainerCheckpoint, path) -> None:
    arch = []
    for layer in ckpt.spec.layers:
        entry = {"kind": layer.kind, "in_shape": list(layer.in_shape),
                 "out_shape": list(layer.out_shape),
                 "activation": _activation_to_json(layer.activation)}
        if layer.kind == "conv2d":
            entry["kernel_size"] = layer.kernel_size
            entry["channels"] = layer.channels
        arch.append(entry)
    arrays = {}
    for k in range(len(ckpt.spec.layers)):
        arrays[f"shadow_w{k}"] = ckpt.shadow_weights[k]
        arrays[f"shadow_t{k}"] = ckpt.shadow_thetas[k]
        arrays[f"m_w{k}"] = ckpt.m_w[k]
        arrays[f"v_w{k}"] = ckpt.v_w[k]
        arrays[f"m_t{k}"] = ckpt.m_t[k]
        arrays[f"v_t{k}"] = ckpt.v_t[k]
    np.savez(path, version=CHECKPOINT_VERSION, step=ckpt.step,
             arch=json.dumps(arch), **arrays)


def load_checkpoint(path) -> TrainerCheckpoint:
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data['version']}")
        arch = json.loads(str(data["arch"]))
        layers = []
        for entry in arch:
            layers.append(LayerSpec(entry["kind"], tuple(entry["in_shape"]),
                                    tuple(entry["out_shape"]),
                                    _activation_from_json(entry["activation"]),
                                    kernel_size=entry.get("kernel_size"),
                                    channels=entry.get("channels")))
        spec = NetworkSpec(tuple(layers), num_classes=layers[-1].out_size)
        n = len(layers)
        ckpt = TrainerCheckpoint(
            spec,
            [data[f"shadow_w{k}"] for k in range(n)],
            [data[f"shadow_t{k}"] for k in range(n)],
            [data[f"m_w{k}"] for k in range(n)],
            [data[f"v_w{k}"] for k in range(n)],
            [data[f"m_t{k}"] for k in range(n)],
            [data[f"v_t{k}"] for k in range(n)],
            step=int(data["step"]),
        )
    return ckpt


# ---------------------------------------------------------------------------
# forward/backward
# ---------------------------------------------------------------------------

def _shadow_net_input(layer: LayerSpec, w: np.ndarray, theta: np.ndarray,
                      y_prev: np.ndarray) -> np.ndarray:
    """Real net input x_tilde = W_shadow . y_prev - theta_shadow."""
    if layer.kind == "dense":
        return y_prev @ w.T - theta
    b = y_prev.shape[0]
    img = y_prev.reshape((b,) + layer.in_shape)
    out = frame.conv2d_valid(img, w).reshape(b, layer.out_size)
    return out - theta


def _conv_weight_grad(layer: LayerSpec, y_prev: np.ndarray,
                      dx: np.ndarray) -> np.ndarray:
    b = y_prev.shape[0]
    k = layer.kernel_size
    img = y_prev.reshape((b,) + layer.in_shape)
    win = np.lib.stride_tricks.sliding_window_view(img, (k, k), axis=(2, 3))
    # win: (b, cin, ho, wo, k, k); dx: (b, cout, ho, wo)
    dxi = dx.reshape((b,) + layer.out_shape)
    return np.tensordot(dxi, win, axes=([0, 2, 3], [0, 2, 3]))


def _conv_input_grad(layer: LayerSpec, w: np.ndarray, dx: np.ndarray) -> np.ndarray:
    b = dx.shape[0]
    k = layer.kernel_size
    dxi = dx.reshape((b,) + layer.out_shape)
    pad = k - 1
    padded = np.pad(dxi, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    flipped = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    out = frame.conv2d_valid(padded, np.ascontiguousarray(flipped))
    return out.reshape(b, layer.in_size)


def _map_average(layer: LayerSpec, g_theta: np.ndarray) -> np.ndarray:
    """Average per-unit threshold gradients within each conv feature map so
    the per-unit thresholds behave like a shared per-map bias."""
    if layer.kind != "conv2d":
        return g_theta
    per_map = g_theta.reshape(layer.out_shape[0], -1)
    return np.repeat(per_map.mean(axis=1), per_map.shape[1])


def loss_and_grads(ckpt: TrainerCheckpoint, inputs: np.ndarray,
                   labels: np.ndarray, cfg: TrainConfig,
                   testing_mode: bool = False):
    """Loss and shadow-parameter gradients on one batch.

    Training mode: discrete integer forward defines each layer's inputs;
    the surrogate contributes only the activation derivative at the shadow
    net input. Testing mode: surrogate activations feed forward too, making
    the loss an ordinary differentiable function of the shadows (this is
    what finite differences are checked against).
    """
    spec = ckpt.spec
    layers = spec.layers
    steep = cfg.sigmoid_steepness
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)

    # layer inputs y_0 .. y_{L-1}, then net inputs per layer
    if testing_mode:
        ys = [inputs]
        xts = []
        y = inputs
        for k, layer in enumerate(layers):
            xt = _shadow_net_input(layer, ckpt.shadow_weights[k],
                                   ckpt.shadow_thetas[k], y)
            xts.append(xt)
            y = _surrogate_value(layer, xt, steep)
            ys.append(y)
    else:
        rec = frame.forward_batch(spec, ckpt.params, inputs.astype(np.int64))
        ys = [inputs] + [y.astype(np.float64) for y in rec.outputs]
        xts = [_shadow_net_input(layer, ckpt.shadow_weights[k],
                                 ckpt.shadow_thetas[k], ys[k])
               for k, layer in enumerate(layers)]

    logits = _logits_from(layers[-1], xts[-1], steep)
    loss, g_logits = softmax_cross_entropy(logits, labels)
    loss += bias_penalty(ckpt.shadow_thetas, cfg.bias_penalty_weight)

    g_w = [None] * len(layers)
    g_t = [None] * len(layers)
    dx = g_logits * _logits_grad_factor(layers[-1], steep)
    for k in range(len(layers) - 1, -1, -1):
        layer = layers[k]
        y_prev = ys[k]
        if layer.kind == "dense":
            g_w[k] = dx.T @ y_prev
        else:
            g_w[k] = _conv_weight_grad(layer, y_prev, dx)
        g_t[k] = _map_average(layer, -dx.sum(axis=0))
        g_t[k] = g_t[k] - cfg.bias_penalty_weight * (ckpt.shadow_thetas[k] < 0)
        if k > 0:
            if layer.kind == "dense":
                gy = dx @ ckpt.shadow_weights[k]
            else:
                gy = _conv_input_grad(layer, ckpt.shadow_weights[k], dx)
            dx = gy * _surrogate_grad(layers[k - 1], xts[k - 1], steep)
    return loss, g_w, g_t


def train_step(ckpt: TrainerCheckpoint, inputs: np.ndarray, labels: np.ndarray,
               cfg: TrainConfig) -> TrainerCheckpoint:
    """One Adam step on the shadows, then re-quantize the forward params."""
    loss, g_w, g_t = loss_and_grads(ckpt, inputs, labels, cfg)
    ckpt.step += 1
    t = ckpt.step
    lr = cfg.learning_rate
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for k in range(len(ckpt.spec.layers)):
        for shadow, g, m, v in ((ckpt.shadow_weights[k], g_w[k], ckpt.m_w[k], ckpt.v_w[k]),
                                (ckpt.shadow_thetas[k], g_t[k], ckpt.m_t[k], ckpt.v_t[k])):
            m += (1.0 - ADAM_BETA1) * (g - m)
            v += (1.0 - ADAM_BETA2) * (g * g - v)
            shadow -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    ckpt.requantize()
    ckpt.last_loss = loss
    return ckpt


# ---------------------------------------------------------------------------
# fit loop
# ---------------------------------------------------------------------------

def fit(spec: NetworkSpec, cfg: TrainConfig, train_data, val_data,
        model_out=None, checkpoint_out=None, log=None):
    """Seeded epoch loop with per-epoch validation.

    train_data/val_data are (inputs, labels) with integer encoded inputs.
    Keeps the best-validation quantized parameters; writes them as a model
    file (and the final checkpoint) when paths are given. Returns
    (best_params, history); history records per-epoch loss and errors and
    flags divergence when validation stopped improving for `patience`
    epochs.
    """
    x_train, y_train = train_data
    x_val, y_val = val_data
    ckpt = init_checkpoint(spec, cfg.seed)
    history = {"epochs": [], "diverged": False, "stopped_early": False,
               "best_val_error": None, "best_epoch": None}

    best_params = ckpt.params
    best_err = frame.error_rate(spec, ckpt.params, x_val, y_val)
    history["best_val_error"] = best_err
    history["best_epoch"] = 0
    if log:
        log(f"epoch 0 (init) val_error={best_err:.4f}")

    n = x_train.shape[0]
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        order = stream_rng(cfg.seed, f"shuffle-epoch{epoch}").permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            train_step(ckpt, x_train[sel], y_train[sel], cfg)
            losses.append(ckpt.last_loss)
        val_err = frame.error_rate(spec, ckpt.params, x_val, y_val)
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                 "val_error": val_err}
        history["epochs"].append(entry)
        if log:
            log(f"epoch {epoch} train_loss={entry['train_loss']:.4f} "
                f"val_error={val_err:.4f}")
        if val_err < best_err:
            best_err = val_err
            best_params = ckpt.params
            history["best_val_error"] = best_err
            history["best_epoch"] = epoch
            since_best = 0
        else:
            since_best += 1
        if cfg.target_val_error is not None and best_err <= cfg.target_val_error:
            history["stopped_early"] = True
            break
        if cfg.patience is not None and since_best >= cfg.patience:
            history["diverged"] = True
            if log:
                log(f"validation stalled for {since_best} epochs; stopping "
                    f"(best {best_err:.4f} at epoch {history['best_epoch']})")
            break

    if model_out is not None:
        from .model import save_model
        save_model(spec, best_params, model_out)
    if checkpoint_out is not None:
        save_checkpoint(ckpt, checkpoint_out)
    return best_params, history
