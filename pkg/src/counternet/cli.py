"""Command line front end.

Subcommands: train a model from MNIST, evaluate a model file, stream a
single test input through the event engine with an optional trace, run
the benchmark curves, run the frame/event differential suite, and
re-serialize model files.

Exit codes: 0 success, 1 usage error (bad flags, bad paths, bad
architecture strings), 2 check failure (equivalence mismatches, error
above a requested bound).
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys

import numpy as np

from . import bench, frame
from .equivalence import run_suite
from .mnist import (IdxFormatError, integer_encode_batch, load_mnist,
                    stream_pixels)
from .model import (Activation, InvariantError, ModelFormatError, NetworkSpec,
                    conv_layer, dense_layer, load_model, save_model)
from .runtime import BASIC, EXTENDED, EventNetwork, readout, write_trace_csv
from .training import TrainConfig, fit

OK_EXIT = 0
USAGE_EXIT = 1
CHECK_EXIT = 2

_CONV_TOKEN = re.compile(r"^(\d+)c(\d+)$")


class UsageError(Exception):
    """Bad flags or inputs; maps to exit code 1."""


def parse_arch(text: str, activation: Activation) -> NetworkSpec:
    """Build a network from a dash-separated size string.

    Plain integers are dense widths; NcK tokens are conv layers with N
    maps and a K by K kernel. The first token is the input size, the last
    must be a dense class count. Conv layers must come before any dense
    layer and need a square input.
    """
    tokens = text.split("-")
    if len(tokens) < 2:
        raise UsageError(f"architecture {text!r} needs an input size and at "
                         "least one layer")
    if not tokens[0].isdigit() or int(tokens[0]) <= 0:
        raise UsageError(f"bad input size {tokens[0]!r} in {text!r}")
    in_size = int(tokens[0])
    conv_shape = None        # (channels, h, w) while the conv prefix lasts
    seen_dense = False
    layers = []
    for token in tokens[1:]:
        conv = _CONV_TOKEN.match(token)
        if conv:
            maps, kernel = int(conv.group(1)), int(conv.group(2))
            if maps <= 0 or kernel <= 0:
                raise UsageError(f"bad conv token {token!r} in {text!r}")
            if seen_dense:
                raise UsageError(f"conv token {token!r} after a dense layer "
                                 f"in {text!r}")
            if conv_shape is None:
                side = int(np.sqrt(in_size))
                if side * side != in_size:
                    raise UsageError(f"conv input needs a square size, got "
                                     f"{in_size} in {text!r}")
                conv_shape = (1, side, side)
            if kernel > conv_shape[1] or kernel > conv_shape[2]:
                raise UsageError(f"kernel {kernel} exceeds input "
                                 f"{conv_shape[1]}x{conv_shape[2]} in {text!r}")
            layer = conv_layer(conv_shape, maps, kernel, activation)
            conv_shape = layer.out_shape
            in_size = layer.out_size
            layers.append(layer)
        elif token.isdigit() and int(token) > 0:
            width = int(token)
            layers.append(dense_layer(in_size, width, activation))
            in_size = width
            seen_dense = True
            conv_shape = None
        else:
            raise UsageError(f"bad architecture token {token!r} in {text!r}")
    if layers[-1].kind != "dense":
        raise UsageError(f"architecture {text!r} must end with a dense "
                         "class count")
    return NetworkSpec(tuple(layers), num_classes=layers[-1].out_size)


def _activation_from(args) -> Activation:
    if args.activation == "binary":
        if getattr(args, "lambda_step", None) is not None:
            raise UsageError("--lambda only applies to --activation drelu")
        return Activation.binary()
    lam = args.lambda_step if args.lambda_step is not None else 64
    if lam < 1:
        raise UsageError("--lambda must be a positive integer")
    return Activation.drelu(lam)


def _load_split(args, split: str):
    train, val, test = load_mnist(args.data)
    ds = {"train": train, "val": val, "test": test}[split]
    x = integer_encode_batch(ds.images, args.levels)
    return ds, x.astype(np.int64), ds.labels


def _check_input_size(spec: NetworkSpec, width: int) -> None:
    if spec.input_size != width:
        raise UsageError(f"model expects input size {spec.input_size}, "
                         f"data provides {width}")


def _load_model_file(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    activation = _activation_from(args)
    spec = parse_arch(args.arch, activation)
    cfg = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
        target_val_error=args.target_val_error,
        sigmoid_steepness=args.steepness,
        bias_penalty_weight=args.bias_penalty, patience=args.patience,
        seed=args.seed)
    train, val, test = load_mnist(args.data)
    x_train = integer_encode_batch(train.images, args.levels).astype(np.int64)
    x_val = integer_encode_batch(val.images, args.levels).astype(np.int64)
    _check_input_size(spec, x_train.shape[1])

    print(f"seed: {args.seed}")
    print(f"arch: {args.arch} activation={activation.kind} "
          f"lambda={activation.lambda_step} levels={args.levels}")
    params, history = fit(spec, cfg, (x_train, train.labels),
                          (x_val, val.labels), model_out=args.out,
                          checkpoint_out=args.checkpoint, log=print)
    print(f"best val_error={history['best_val_error']:.4f} "
          f"at epoch {history['best_epoch']}")
    x_test = integer_encode_batch(test.images, args.levels).astype(np.int64)
    test_err = frame.error_rate(spec, params, x_test, test.labels)
    print(f"test_error={test_err:.4f}")
    print(f"wrote model: {args.out}")
    if args.checkpoint:
        print(f"wrote checkpoint: {args.checkpoint}")
    if args.history:
        with open(args.history, "w") as fh:
            json.dump({"seed": args.seed, "history": history,
                       "test_error": test_err}, fh, indent=2)
            fh.write("\n")
    return OK_EXIT


def cmd_eval(args) -> int:
    spec, params = _load_model_file(args.model)
    _, x, labels = _load_split(args, args.split)
    _check_input_size(spec, x.shape[1])
    err = frame.error_rate(spec, params, x, labels)
    print(f"split={args.split} n={len(labels)} error={err:.4f}")
    if args.max_error is not None and err > args.max_error:
        print(f"FAIL: error {err:.4f} exceeds bound {args.max_error:.4f}")
        return CHECK_EXIT
    return OK_EXIT


def cmd_stream(args) -> int:
    spec, params = _load_model_file(args.model)
    ds, x, labels = _load_split(args, args.split)
    if not 0 <= args.index < len(ds):
        raise UsageError(f"index {args.index} out of range for "
                         f"{args.split} split of {len(ds)} images")
    pixels = x[args.index]
    _check_input_size(spec, pixels.size)
    label = int(labels[args.index])
    frame_final = frame.forward_batch(spec, params, pixels[None, :]).final_y()[0]
    frame_decision = readout(frame_final)

    stream = stream_pixels(pixels, args.seed)
    net = EventNetwork(spec, params, _kind_of(spec),
                       record_trace=args.trace is not None)
    decisions = [readout(net.accumulators)]
    for ev in stream:
        net.feed(ev.t, (ev.unit,), (ev.sign,))
        decisions.append(readout(net.accumulators))

    def settle(target):
        wrong = [k for k, d in enumerate(decisions) if d != target]
        return (wrong[-1] + 1) if wrong else 0

    settle_label = settle(label)
    settle_frame = settle(frame_decision)
    n = len(stream)
    final = decisions[-1]
    print(f"seed: {args.seed}")
    print(f"index={args.index} split={args.split} label={label} "
          f"stream_events={n}")
    print(f"frame_decision={_show(frame_decision)} "
          f"final_readout={_show(final)}")
    print(f"additions={net.ledger.additions} "
          f"events_emitted={net.ledger.events_emitted}")
    if settle_label <= n and decisions[-1] == label:
        print(f"readout correct and stable from event {settle_label} "
              f"of {n}")
    else:
        print("readout never settles on the true label")
    if settle_frame <= n and decisions[-1] == frame_decision:
        print(f"readout agrees with frame decision from event "
              f"{settle_frame} of {n}")
    if args.trace:
        write_trace_csv(net.trace, args.trace)
        print(f"wrote trace: {args.trace}")
    if args.readout_out:
        with open(args.readout_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "readout"])
            for k, d in enumerate(decisions):
                writer.writerow([k, _show(d)])
        print(f"wrote readout timeline: {args.readout_out}")
    return OK_EXIT


def _show(decision) -> str:
    return "none" if decision is None else str(decision)


def _kind_of(spec: NetworkSpec) -> str:
    return BASIC if spec.layers[0].activation.is_binary else EXTENDED


def cmd_bench(args) -> int:
    spec, params = _load_model_file(args.model)
    train, val, test = load_mnist(args.data)
    ds = {"train": train, "val": val, "test": test}[args.split]
    if not args.full:
        ds = bench.seeded_subset(ds, args.subset, args.seed)
    x = integer_encode_batch(ds.images, args.levels).astype(np.int64)
    labels = ds.labels
    _check_input_size(spec, x.shape[1])
    progress = None
    if args.progress:
        progress = lambda done, total: print(f"  {done}/{total}",
                                             file=sys.stderr)
    print(f"seed: {args.seed}")
    result = bench.curve_for_model(spec, params, x, labels,
                                   order_seed=args.seed, progress=progress)
    summary = bench.efficiency_summary(result.classification, result.ops,
                                       threshold=args.threshold)
    print(f"model_kind={result.model_kind} inputs={result.num_inputs} "
          f"max_events={result.max_events}")
    print(f"terminal_frame_match={result.terminal_fraction:.4f}")
    print(f"settled_before_end={result.settled_before_end_fraction:.4f} "
          f"readout_settled_before_end="
          f"{result.readout_settled_before_end_fraction:.4f}")
    if summary.reached:
        print(f"{args.threshold:.0%} frame match crossed at event "
              f"{summary.crossing_event:.1f} with mean cumulative "
              f"additions {summary.crossing_additions:.0f}")
    else:
        print(f"{args.threshold:.0%} frame match not reached; max fraction "
              f"{summary.max_fraction:.4f}")
    print(f"total_additions={result.total_additions}")
    if args.curves:
        bench.write_curves_csv(result, args.curves)
        print(f"wrote curves: {args.curves}")
    if args.summary:
        bench.write_summary_json(result, summary, args.summary)
        print(f"wrote summary: {args.summary}")
    return OK_EXIT


def cmd_equiv(args) -> int:
    kinds = [BASIC, EXTENDED] if args.kind == "both" else [args.kind]
    print(f"seed: {args.seed}")
    failed = False
    for kind in kinds:
        passed, failures, elapsed = run_suite(
            args.cases, args.orderings, seed=args.seed,
            model_kind=kind, engine=args.engine)
        print(f"kind={kind} passed={passed}/{args.cases} "
              f"orderings={args.orderings} elapsed={elapsed:.1f}s")
        for case in failures[:5]:
            shrunk = case.shrunk or case
            print(f"  FAIL seed={case.seed}: {case.mismatch}")
            print(f"    shrunk: layers={len(shrunk.spec.layers)} "
                  f"input={shrunk.input_vec.tolist()}")
        if failures:
            failed = True
    return CHECK_EXIT if failed else OK_EXIT


def cmd_export(args) -> int:
    spec, params = _load_model_file(args.model)
    save_model(spec, params, args.out)
    kind = "binary" if spec.layers[0].activation.is_binary else "drelu"
    print(f"wrote {args.out}: {len(spec.layers)} layers, activation={kind}, "
          f"input={spec.input_size}, classes={spec.num_classes}")
    return OK_EXIT


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_data_flags(p) -> None:
    p.add_argument("--data", default=None,
                   help="MNIST directory (default: COUNTERNET_DATA or "
                        "data/mnist)")
    p.add_argument("--levels", type=int, default=2,
                   help="pixel quantization levels; 2 means binarization")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="counternet",
                     description="integer-only counter-neuron networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on MNIST")
    p.add_argument("--arch", required=True,
                   help="e.g. 784-300-100-10 or 784-12c5-12c7-10")
    p.add_argument("--activation", choices=["binary", "drelu"],
                   default="drelu")
    p.add_argument("--lambda", dest="lambda_step", type=int, default=None,
                   help="drelu step size (default 64)")
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--steepness", type=float, default=1.0,
                   help="surrogate sigmoid steepness (binary activation)")
    p.add_argument("--bias-penalty", type=float, default=1.0)
    p.add_argument("--target-val-error", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--checkpoint", default=None, help="optimizer state path")
    p.add_argument("--history", default=None, help="training history JSON")
    _add_data_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="frame-based error of a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "val", "test"],
                   default="test")
    p.add_argument("--max-error", type=float, default=None,
                   help="exit 2 if the error exceeds this bound")
    _add_data_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stream", help="stream one input through the event "
                                      "engine")
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "val", "test"],
                   default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0,
                   help="pixel order seed")
    p.add_argument("--trace", default=None, help="event trace CSV path")
    p.add_argument("--readout-out", default=None,
                   help="per-event readout CSV path")
    _add_data_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("bench", help="classification and ops curves over a "
                                     "test subset")
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=["train", "val", "test"],
                   default="test")
    p.add_argument("--subset", type=int, default=1000)
    p.add_argument("--full", action="store_true",
                   help="use the whole split instead of --subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--curves", default=None, help="curve CSV path")
    p.add_argument("--summary", default=None, help="summary JSON path")
    p.add_argument("--progress", action="store_true")
    _add_data_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("equiv", help="frame vs event differential suite")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--orderings", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=["both", BASIC, EXTENDED],
                   default="both")
    p.add_argument("--engine", choices=["vector", "scalar"],
                   default="vector")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("export", help="re-serialize a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (FileNotFoundError, IdxFormatError, ModelFormatError,
            InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
