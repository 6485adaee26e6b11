"""Shared domain types, the portable model file format, and integer helpers.

Everything the forward path touches is an integer. Weights and thresholds
are 8-bit-ranged (values in [-128, 127], thresholds additionally >= 0);
counters and accumulators are 32-bit signed. Real-valued shadow copies of
the parameters exist only for the training backward pass and are never
serialized into an inference model file.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

MODEL_FORMAT_VERSION = 1

WEIGHT_MIN = -128
WEIGHT_MAX = 127
THETA_MIN = 0
THETA_MAX = 127

# Headroom bound for 32-bit counters, checked in debug mode.
COUNTER_LIMIT = 2**31 - 1


class InvariantError(ValueError):
    """A domain type invariant was violated (bad range, bad shape, bad value)."""


class ModelFormatError(ValueError):
    """A model file could not be parsed or has the wrong schema version."""


# ---------------------------------------------------------------------------
# debug assertion mode
# ---------------------------------------------------------------------------

_debug = False


def set_debug(enabled: bool) -> None:
    """Toggle debug assertions (integer-closure and counter-headroom checks)."""
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


def check_integer_array(a: np.ndarray, what: str) -> None:
    """In debug mode, assert `a` is integer-typed and within 32-bit range."""
    if not _debug:
        return
    if not np.issubdtype(np.asarray(a).dtype, np.integer):
        raise InvariantError(f"{what}: non-integer value entered the integer path "
                             f"(dtype {np.asarray(a).dtype})")
    if a.size and int(np.abs(a).max()) > COUNTER_LIMIT:
        raise InvariantError(f"{what}: 32-bit accumulator overflow")


# ---------------------------------------------------------------------------
# integer helpers
# ---------------------------------------------------------------------------

def round_half_away_from_zero(x):
    """Round to nearest integer, ties away from zero (0.5 -> 1, -0.5 -> -1).

    np.round rounds ties to even, which is the wrong rule here.
    """
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def quantize_weights(shadow) -> np.ndarray:
    """Quantize shadow weights to 8-bit-ranged integers."""
    return np.clip(round_half_away_from_zero(shadow), WEIGHT_MIN, WEIGHT_MAX).astype(np.int32)


def quantize_thetas(shadow) -> np.ndarray:
    """Quantize shadow thresholds; thresholds are clamped to be non-negative."""
    return np.clip(round_half_away_from_zero(shadow), THETA_MIN, THETA_MAX).astype(np.int32)


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Named random stream: one root seed, independent generators per label.

    Keeps data shuffling, weight init and event ordering independently
    reproducible from a single --seed.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


# ---------------------------------------------------------------------------
# network description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Activation:
    """Activation of one layer: hard binary step or discretized ReLU.

    For the discretized ReLU, `lambda_step` is the integer step size: the
    unit's output counts how many whole steps its net input clears above
    threshold.
    """
    kind: str                 # "binary" | "drelu"
    lambda_step: int = 1

    def __post_init__(self):
        if self.kind not in ("binary", "drelu"):
            raise InvariantError(f"unknown activation kind {self.kind!r}")
        if self.kind == "binary" and self.lambda_step != 1:
            raise InvariantError("binary activation takes no step size")
        if self.kind == "drelu" and self.lambda_step < 1:
            raise InvariantError("drelu step size must be >= 1")

    @classmethod
    def binary(cls) -> "Activation":
        return cls("binary")

    @classmethod
    def drelu(cls, lambda_step: int) -> "Activation":
        return cls("drelu", int(lambda_step))

    @property
    def is_binary(self) -> bool:
        return self.kind == "binary"


@dataclass(frozen=True)
class LayerSpec:
    """One layer: dense or valid (no-padding, stride-1) 2-D convolution."""
    kind: str                        # "dense" | "conv2d"
    in_shape: tuple
    out_shape: tuple
    activation: Activation
    kernel_size: int | None = None   # conv2d only
    channels: int | None = None      # conv2d only: number of output feature maps

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(int(d) for d in self.in_shape))
        object.__setattr__(self, "out_shape", tuple(int(d) for d in self.out_shape))
        if any(d < 1 for d in self.in_shape + self.out_shape):
            raise InvariantError("layer shapes must be positive")
        if self.kind == "dense":
            if self.kernel_size is not None or self.channels is not None:
                raise InvariantError("dense layers take no kernel_size/channels")
        elif self.kind == "conv2d":
            if len(self.in_shape) != 3 or len(self.out_shape) != 3:
                raise InvariantError("conv2d shapes must be (channels, height, width)")
            k, m = self.kernel_size, self.channels
            if k is None or m is None or k < 1 or m < 1:
                raise InvariantError("conv2d needs kernel_size >= 1 and channels >= 1")
            cin, h, w = self.in_shape
            expect = (m, h - k + 1, w - k + 1)
            if h < k or w < k:
                raise InvariantError("conv2d kernel larger than input")
            if self.out_shape != expect:
                raise InvariantError(f"conv2d out_shape {self.out_shape} != {expect} "
                                     "(valid convolution, stride 1)")
        else:
            raise InvariantError(f"unknown layer kind {self.kind!r}")

    @property
    def in_size(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def out_size(self) -> int:
        return int(np.prod(self.out_shape))

    @property
    def weight_shape(self) -> tuple:
        if self.kind == "dense":
            return (self.out_size, self.in_size)
        return (self.channels, self.in_shape[0], self.kernel_size, self.kernel_size)


def dense_layer(n_in: int, n_out: int, activation: Activation) -> LayerSpec:
    return LayerSpec("dense", (n_in,), (n_out,), activation)


def conv_layer(in_shape, channels: int, kernel_size: int, activation: Activation) -> LayerSpec:
    cin, h, w = in_shape
    out_shape = (channels, h - kernel_size + 1, w - kernel_size + 1)
    return LayerSpec("conv2d", tuple(in_shape), out_shape, activation,
                     kernel_size=int(kernel_size), channels=int(channels))


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer stack. Unit indices flatten multi-dim shapes in C order."""
    layers: tuple
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvariantError("network needs at least one layer")
        for k in range(len(self.layers) - 1):
            a, b = self.layers[k], self.layers[k + 1]
            if a.out_size != b.in_size:
                raise InvariantError(f"layer {k} out size {a.out_size} != "
                                     f"layer {k + 1} in size {b.in_size}")
            if a.kind == "conv2d" and b.kind == "conv2d" and a.out_shape != b.in_shape:
                raise InvariantError(f"conv layer {k} out_shape {a.out_shape} != "
                                     f"layer {k + 1} in_shape {b.in_shape}")
        if self.layers[-1].out_size != self.num_classes:
            raise InvariantError("final layer size must equal num_classes")

    @property
    def input_size(self) -> int:
        return self.layers[0].in_size

    @property
    def input_shape(self) -> tuple:
        return self.layers[0].in_shape


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class QuantizedParams:
    """Integer forward-pass parameters plus real-valued shadow copies.

    The integer arrays are the single source of truth for inference; the
    shadows exist for the optimizer and always satisfy
    quantize(shadow) == forward params. Arrays are frozen read-only after
    construction; the trainer keeps its own mutable copies.
    """
    weights: list            # per layer, int32 in [-128, 127]
    thetas: list             # per layer, int32, >= 0
    shadow_weights: list | None = None
    shadow_thetas: list | None = None

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.int32) for w in self.weights]
        self.thetas = [np.asarray(t, dtype=np.int32) for t in self.thetas]
        if self.shadow_weights is None:
            self.shadow_weights = [w.astype(np.float64) for w in self.weights]
        if self.shadow_thetas is None:
            self.shadow_thetas = [t.astype(np.float64) for t in self.thetas]
        for arr in (*self.weights, *self.thetas,
                    *self.shadow_weights, *self.shadow_thetas):
            arr.flags.writeable = False

    def validate(self, spec: NetworkSpec) -> None:
        if len(self.weights) != len(spec.layers) or len(self.thetas) != len(spec.layers):
            raise InvariantError("parameter count does not match layer count")
        for k, layer in enumerate(spec.layers):
            w, t = self.weights[k], self.thetas[k]
            if w.shape != layer.weight_shape:
                raise InvariantError(f"layer {k}: weight shape {w.shape} != "
                                     f"{layer.weight_shape}")
            if t.shape != (layer.out_size,):
                raise InvariantError(f"layer {k}: theta shape {t.shape} != "
                                     f"({layer.out_size},)")
            if w.size and (w.min() < WEIGHT_MIN or w.max() > WEIGHT_MAX):
                raise InvariantError(f"layer {k}: weight outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
            if t.size and (t.min() < THETA_MIN or t.max() > THETA_MAX):
                raise InvariantError(f"layer {k}: theta outside [{THETA_MIN}, {THETA_MAX}]")
            if not np.array_equal(quantize_weights(self.shadow_weights[k]), w):
                raise InvariantError(f"layer {k}: quantize(shadow weights) != weights")
            if not np.array_equal(quantize_thetas(self.shadow_thetas[k]), t):
                raise InvariantError(f"layer {k}: quantize(shadow thetas) != thetas")


# ---------------------------------------------------------------------------
# operation accounting
# ---------------------------------------------------------------------------

@dataclass
class OpLedger:
    """Counts of additions, comparisons and events under the event cost model.

    One addition per weight delivered to a target, one per step-wrap of an
    extended counter; comparisons per threshold or loop test; zero
    multiplications in the event data path by construction.
    per_input_event_additions buckets additions by the external input event
    whose cascade triggered them (sums to `additions`).
    """
    num_layers: int = 0
    additions: int = 0
    comparisons: int = 0
    events_emitted: int = 0
    multiplications: int = 0
    per_input_event_additions: list = field(default_factory=list)
    per_layer_additions: list = field(default_factory=list)
    per_layer_events: list = field(default_factory=list)

    def __post_init__(self):
        if self.num_layers and not self.per_layer_additions:
            self.per_layer_additions = [0] * self.num_layers
            self.per_layer_events = [0] * self.num_layers

    def begin_input_event(self) -> None:
        self.per_input_event_additions.append(0)

    def count_additions(self, layer: int, n: int) -> None:
        self.additions += n
        if self.per_input_event_additions:
            self.per_input_event_additions[-1] += n
        if self.per_layer_additions:
            self.per_layer_additions[layer - 1] += n

    def count_weight_deliveries(self, layer: int, count: int, fanout: int) -> None:
        """Charge delivering `count` identical events across `fanout` weights:
        one addition per weight per event. The product here is bookkeeping;
        the data path realizes it with additions only."""
        self.count_additions(layer, count * fanout)

    def count_comparisons(self, n: int) -> None:
        self.comparisons += n

    def count_events(self, layer: int, n: int) -> None:
        self.events_emitted += n
        if self.per_layer_events:
            self.per_layer_events[layer - 1] += n


# ---------------------------------------------------------------------------
# conv lowering: explicit synapse table
# ---------------------------------------------------------------------------

@dataclass
class SynapseTable:
    """Per source unit: flat target indices and connecting weights.

    Makes the event runtime uniform over dense and conv layers and makes
    per-event fan-out cost explicit.
    """
    targets: list   # per source unit: np.ndarray of flat target indices
    weights: list   # per source unit: np.ndarray (int32) of weights

    @property
    def fanout_counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.targets], dtype=np.int64)


def build_synapse_table(layer: LayerSpec, weights: np.ndarray) -> SynapseTable:
    """Lower one layer's weights to the per-source fan-out representation."""
    w = np.asarray(weights)
    if layer.kind == "dense":
        all_targets = np.arange(layer.out_size, dtype=np.int64)
        return SynapseTable(
            targets=[all_targets] * layer.in_size,
            weights=[np.ascontiguousarray(w[:, j], dtype=np.int32) for j in range(layer.in_size)],
        )

    cin, h, wid = layer.in_shape
    m, ho, wo = layer.out_shape
    k = layer.kernel_size
    targets, wlists = [], []
    co = np.arange(m, dtype=np.int64)
    for ci in range(cin):
        for y in range(h):
            dys = [dy for dy in range(k) if 0 <= y - dy < ho]
            for x in range(wid):
                dxs = [dx for dx in range(k) if 0 <= x - dx < wo]
                if not dys or not dxs:
                    targets.append(np.empty(0, dtype=np.int64))
                    wlists.append(np.empty(0, dtype=np.int32))
                    continue
                oy = y - np.array(dys, dtype=np.int64)
                ox = x - np.array(dxs, dtype=np.int64)
                # broadcast over (co, dy, dx)
                t = (co[:, None, None] * (ho * wo)
                     + oy[None, :, None] * wo + ox[None, None, :])
                ws = w[:, ci][:, dys][:, :, dxs]
                targets.append(t.ravel())
                wlists.append(np.ascontiguousarray(ws.reshape(-1), dtype=np.int32))
    return SynapseTable(targets, wlists)


def fanout_counts(layer: LayerSpec) -> np.ndarray:
    """Fan-out size of each source unit (number of weights it delivers)."""
    if layer.kind == "dense":
        return np.full(layer.in_size, layer.out_size, dtype=np.int64)
    cin, h, wid = layer.in_shape
    m, ho, wo = layer.out_shape
    k = layer.kernel_size
    ny = np.array([len([dy for dy in range(k) if 0 <= y - dy < ho]) for y in range(h)])
    nx = np.array([len([dx for dx in range(k) if 0 <= x - dx < wo]) for x in range(wid)])
    per_pos = m * np.outer(ny, nx).ravel()
    return np.tile(per_pos, cin).astype(np.int64)


# ---------------------------------------------------------------------------
# model file format (schema version 1)
# ---------------------------------------------------------------------------
#
# UTF-8 JSON text. Top level: {"version": 1, "layers": [...]}. Each layer:
#   kind:       "dense" | "conv2d"
#   in_shape:   [ints]           out_shape: [ints]
#   activation: {"binary": {}} | {"drelu": {"lambda": <int>}}
#   weights:    flat integer array, row-major, target-major
#               (dense: weight[target][source]; conv2d: kernel
#               [out_map][in_channel][ky][kx])
#   theta:      integer array, one per output unit
#   kernel_size, channels: conv2d only
#
# Shadow parameters are never written here; the trainer has its own
# checkpoint format.

def _activation_to_json(act: Activation) -> dict:
    if act.is_binary:
        return {"binary": {}}
    return {"drelu": {"lambda": act.lambda_step}}

def _activation_from_json(obj) -> Activation:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ModelFormatError(f"bad activation entry: {obj!r}")
    if "binary" in obj:
        return Activation.binary()
    if "drelu" in obj:
        lam = obj["drelu"].get("lambda")
        if not isinstance(lam, int):
            raise ModelFormatError("drelu activation needs an integer lambda")
        if lam < 1:
            raise InvariantError("drelu step size must be >= 1")
        return Activation.drelu(lam)
    raise ModelFormatError(f"unknown activation: {obj!r}")


def save_model(spec: NetworkSpec, params: QuantizedParams, path) -> None:
    """Write the inference model file; round-trips bit-exactly with load_model."""
    params.validate(spec)
    lines = ["{", f' "version": {MODEL_FORMAT_VERSION},', ' "layers": [']
    for k, layer in enumerate(spec.layers):
        entry = {
            "kind": layer.kind,
            "in_shape": list(layer.in_shape),
            "out_shape": list(layer.out_shape),
            "activation": _activation_to_json(layer.activation),
        }
        if layer.kind == "conv2d":
            entry["kernel_size"] = layer.kernel_size
            entry["channels"] = layer.channels
        body = ",\n   ".join(f'"{key}": {json.dumps(val)}' for key, val in entry.items())
        # weights and theta on single lines keeps the file diffable per layer
        wline = json.dumps([int(v) for v in params.weights[k].ravel()])
        tline = json.dumps([int(v) for v in params.thetas[k]])
        sep = "," if k + 1 < len(spec.layers) else ""
        lines.append(f'  {{{body},\n   "weights": {wline},\n   "theta": {tline}}}{sep}')
    lines.append(" ]")
    lines.append("}")
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def load_model(path):
    """Read and validate a model file. Returns (NetworkSpec, QuantizedParams)."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model file does not parse: {e}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise ModelFormatError("model file has no version field")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {doc['version']!r}")
    layers_doc = doc.get("layers")
    if not isinstance(layers_doc, list) or not layers_doc:
        raise ModelFormatError("model file has no layers")

    layers, weights, thetas = [], [], []
    for k, entry in enumerate(layers_doc):
        try:
            kind = entry["kind"]
            in_shape = tuple(entry["in_shape"])
            out_shape = tuple(entry["out_shape"])
            act = _activation_from_json(entry["activation"])
            w_flat = entry["weights"]
            theta = entry["theta"]
        except (KeyError, TypeError) as e:
            raise ModelFormatError(f"layer {k}: missing or malformed field ({e})") from e
        layer = LayerSpec(kind, in_shape, out_shape, act,
                          kernel_size=entry.get("kernel_size"),
                          channels=entry.get("channels"))
        if any(not isinstance(v, int) for v in w_flat):
            raise InvariantError(f"layer {k}: non-integer weight")
        if any(not isinstance(v, int) for v in theta):
            raise InvariantError(f"layer {k}: non-integer theta")
        if len(w_flat) != int(np.prod(layer.weight_shape)):
            raise ModelFormatError(f"layer {k}: weight count {len(w_flat)} != "
                                   f"{int(np.prod(layer.weight_shape))}")
        layers.append(layer)
        weights.append(np.array(w_flat, dtype=np.int64).reshape(layer.weight_shape))
        thetas.append(np.array(theta, dtype=np.int64))

    spec = NetworkSpec(tuple(layers), num_classes=layers[-1].out_size)
    for k, (w, t) in enumerate(zip(weights, thetas)):
        # range-check before narrowing to int32 so huge values cannot wrap
        if w.size and (w.min() < WEIGHT_MIN or w.max() > WEIGHT_MAX):
            raise InvariantError(f"layer {k}: weight outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
        if t.size and (t.min() < THETA_MIN or t.max() > THETA_MAX):
            raise InvariantError(f"layer {k}: theta outside [{THETA_MIN}, {THETA_MAX}]")
    params = QuantizedParams([w.astype(np.int32) for w in weights],
                             [t.astype(np.int32) for t in thetas])
    params.validate(spec)
    return spec, params
