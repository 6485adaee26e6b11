"""Randomized differential testing: event runtime vs frame forward pass.

The core theorem under test: for any network, any input, and any event
ordering, the quiescent signed event sums equal the frame outputs exactly,
at every layer. Failures shrink (drop layers, then units, then input
events) to a small reproduction before being reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import frame
from .mnist import EventStream, stream_pixels
from .model import (Activation, NetworkSpec, QuantizedParams, conv_layer,
                    dense_layer, quantize_thetas, quantize_weights, stream_rng)
from .runtime import BASIC, EXTENDED, run_stream

LAMBDA_CHOICES = (1, 2, 4, 64)


@dataclass
class SizeLimits:
    max_layers: int = 4
    max_width: int = 32
    conv_fraction: float = 0.25   # fraction of generated cases using a conv stack
    max_input_value: int = 3

    def __post_init__(self):
        if self.max_layers > 4 or self.max_width > 32:
            raise ValueError("limits exceed the intended small-case regime")


@dataclass
class DiffCase:
    """One generated network + input, with results filled in by check_case."""
    seed: int
    spec: NetworkSpec
    params: QuantizedParams
    input_vec: np.ndarray
    model_kind: str
    ordering_seeds: list = field(default_factory=list)
    frame_outputs: list | None = None          # per-layer frame y
    event_sums: list | None = None             # per-layer signed event sums, per ordering
    passed: bool | None = None
    mismatch: str | None = None
    shrunk: "DiffCase | None" = None


def _random_params(rng: np.random.Generator, spec: NetworkSpec) -> QuantizedParams:
    weights, thetas = [], []
    for layer in spec.layers:
        weights.append(rng.integers(-128, 128, size=layer.weight_shape, dtype=np.int64))
        thetas.append(rng.integers(0, 33, size=layer.out_size, dtype=np.int64))
    return QuantizedParams([quantize_weights(w) for w in weights],
                           [quantize_thetas(t) for t in thetas])


def _random_dense_spec(rng: np.random.Generator, limits: SizeLimits,
                       act_of) -> NetworkSpec:
    n_layers = int(rng.integers(1, limits.max_layers + 1))
    widths = rng.integers(1, limits.max_width + 1, size=n_layers + 1)
    layers = [dense_layer(int(widths[i]), int(widths[i + 1]), act_of(rng))
              for i in range(n_layers)]
    return NetworkSpec(tuple(layers), num_classes=int(widths[-1]))


def _random_conv_spec(rng: np.random.Generator, limits: SizeLimits,
                      act_of) -> NetworkSpec:
    # small image, one or two conv layers, optional dense head
    h = int(rng.integers(5, 9))
    cin = int(rng.integers(1, 3))
    shape = (cin, h, h)
    layers = []
    for _ in range(int(rng.integers(1, 3))):
        k = int(rng.integers(2, min(4, shape[1]) + 1))
        maps = int(rng.integers(1, 4))
        layer = conv_layer(shape, maps, k, act_of(rng))
        layers.append(layer)
        shape = layer.out_shape
        if shape[1] < 2:
            break
    flat = int(np.prod(shape))
    out = int(rng.integers(1, limits.max_width + 1))
    layers.append(dense_layer(flat, out, act_of(rng)))
    return NetworkSpec(tuple(layers), num_classes=out)


# transient counter excursions are bounded by the L1 norm of what a layer
# can deliver; keep that comfortably inside the 32-bit counter range
HEADROOM_LIMIT = 2**28


def _within_headroom(spec: NetworkSpec, params: QuantizedParams,
                     input_vec: np.ndarray) -> bool:
    y = input_vec.astype(np.int64)
    for layer, w, t in zip(spec.layers, params.weights, params.thetas):
        if layer.kind == "dense":
            mag = np.abs(w.astype(np.int64)) @ y
        else:
            img = y.reshape((1,) + layer.in_shape)
            mag = frame.conv2d_valid(img, np.abs(w.astype(np.int64))).ravel()
        if mag.size and int(mag.max()) > HEADROOM_LIMIT:
            return False
        x = frame._net_input(layer, w, y[None, :])
        y = frame._activate(layer, x, t.astype(np.int64))[0]
    return True


def gen_random_case(seed: int, limits: SizeLimits | None = None,
                    model_kind: str | None = None) -> DiffCase:
    """Deterministic random case. Activation kind is uniform between the
    two neuron models unless forced; step sizes are drawn per layer from
    {1, 2, 4, 64}; weights uniform 8-bit; thresholds uniform in [0, 32];
    inputs binary or small non-negative integers.

    Cases whose layer inputs could push a 32-bit counter past its headroom
    (deep step-1 stacks amplify activations geometrically) are outside the
    runtime's declared numeric domain; those draws are rejected and the
    case is redrawn deterministically from the same seed.
    """
    limits = limits or SizeLimits()
    for attempt in range(64):
        rng = stream_rng(seed, f"diffcase-{attempt}")
        kind = model_kind or (BASIC if rng.random() < 0.5 else EXTENDED)
        if kind == BASIC:
            act_of = lambda r: Activation.binary()
        else:
            act_of = lambda r: Activation.drelu(int(r.choice(LAMBDA_CHOICES)))
        if rng.random() < limits.conv_fraction:
            spec = _random_conv_spec(rng, limits, act_of)
        else:
            spec = _random_dense_spec(rng, limits, act_of)
        params = _random_params(rng, spec)
        if rng.random() < 0.5:
            input_vec = rng.integers(0, 2, size=spec.input_size, dtype=np.int64)
        else:
            input_vec = rng.integers(0, limits.max_input_value + 1,
                                     size=spec.input_size, dtype=np.int64)
        if _within_headroom(spec, params, input_vec):
            return DiffCase(seed=seed, spec=spec, params=params,
                            input_vec=input_vec, model_kind=kind)
    raise RuntimeError(f"no in-domain case found for seed {seed}")


def _frame_layer_outputs(case: DiffCase) -> list:
    rec = frame.forward(case.spec, case.params, case.input_vec)
    return [y[0] for y in rec.outputs]


def check_case(case: DiffCase, n_orderings: int = 3,
               engine: str = "vector") -> DiffCase:
    """Fill in frame outputs and event sums; pass iff every ordering's
    per-layer signed event sums equal the frame outputs exactly."""
    case.frame_outputs = _frame_layer_outputs(case)
    case.ordering_seeds = [case.seed * 1000 + i for i in range(n_orderings)]
    case.event_sums = []
    case.passed = True
    case.mismatch = None
    for oseed in case.ordering_seeds:
        stream = stream_pixels(case.input_vec, oseed)
        out = run_stream(case.spec, case.params, stream, case.model_kind,
                         engine=engine)
        case.event_sums.append(out.layer_event_sums)
        for k, (got, want) in enumerate(zip(out.layer_event_sums,
                                            case.frame_outputs)):
            if not np.array_equal(got, want):
                case.passed = False
                case.mismatch = (f"ordering seed {oseed}, layer {k + 1}: "
                                 f"event sums {got.tolist()} != "
                                 f"frame {want.tolist()}")
                break
        if not case.passed:
            break
    return case


def _shrink(case: DiffCase, n_orderings: int) -> DiffCase:
    """Greedy minimization of a failing case: drop trailing layers, then
    zero input units (removing their events), re-checking at each step."""
    best = case

    def still_fails(spec, params, inp) -> "DiffCase | None":
        trial = DiffCase(seed=best.seed, spec=spec, params=params,
                         input_vec=inp, model_kind=best.model_kind)
        check_case(trial, n_orderings)
        return trial if trial.passed is False else None

    # drop trailing layers
    changed = True
    while changed and len(best.spec.layers) > 1:
        changed = False
        layers = best.spec.layers[:-1]
        spec = NetworkSpec(layers, num_classes=layers[-1].out_size)
        params = QuantizedParams(list(best.params.weights[:-1]),
                                 list(best.params.thetas[:-1]))
        trial = still_fails(spec, params, best.input_vec)
        if trial is not None:
            best = trial
            changed = True
    # zero out input units one at a time
    inp = best.input_vec.copy()
    for j in range(inp.size):
        if inp[j] == 0:
            continue
        saved = inp[j]
        inp[j] = 0
        trial = still_fails(best.spec, best.params, inp)
        if trial is not None:
            best = trial
        else:
            inp[j] = saved
    return best


def run_suite(n_cases: int, n_orderings: int = 3, seed: int = 0,
              limits: SizeLimits | None = None,
              model_kind: str | None = None, engine: str = "vector"):
    """Run the differential suite. Returns (passed_count, failures, elapsed).

    Each failure is a shrunk DiffCase; an empty failure list is the pass
    condition for the suite.
    """
    start = time.monotonic()
    failures = []
    passed = 0
    for i in range(n_cases):
        case = gen_random_case(seed + i, limits, model_kind)
        check_case(case, n_orderings, engine=engine)
        if case.passed:
            passed += 1
        else:
            case.shrunk = _shrink(case, n_orderings)
            failures.append(case)
    return passed, failures, time.monotonic() - start
