"""Measure what an answer costs: classification and ops curves.

Streams a seeded subset of MNIST test images through the event engine and
aggregates, per input-event index, the fraction of inputs whose output
accumulators already equal the frame-based result and the additions each
event triggered. Binary-activation networks front-load their work (every
early pixel flips neurons everywhere); step-counting networks ramp up
gradually and reach the frame answer cheaper overall. Uses the cached
acceptance models when present, otherwise trains one-epoch stand-ins.

Run: python demos/05_ops_benchmark.py [--subset 200]
"""

import argparse
import os

import numpy as np

from counternet import bench
from counternet.mnist import binarize_batch, load_mnist
from counternet.model import (Activation, NetworkSpec, dense_layer,
                              load_model)
from counternet.training import TrainConfig, fit


def get_model(name, activation, steepness, data_dir):
    cached = os.path.join("trained", f"{name}.json")
    if os.path.exists(cached):
        print(f"using cached model {cached}")
        return load_model(cached)
    print(f"no cached {name}; training a one-epoch 784-32-10 stand-in")
    train, val, _ = load_mnist(data_dir)
    spec = NetworkSpec((dense_layer(784, 32, activation),
                        dense_layer(32, 10, activation)), num_classes=10)
    cfg = TrainConfig(learning_rate=0.1, batch_size=200, epochs=1,
                      sigmoid_steepness=steepness, seed=0)
    params, _ = fit(spec, cfg,
                    (binarize_batch(train.images).astype(np.int64), train.labels),
                    (binarize_batch(val.images).astype(np.int64), val.labels))
    return spec, params


def describe(kind, res):
    q = bench.quartile_summary(res)
    s = bench.efficiency_summary(res.classification, res.ops)
    print(f"\n{kind} model over {res.num_inputs} inputs:")
    print(f"  terminal frame-match fraction: {res.terminal_fraction} "
          "(bit-exact by construction)")
    print(f"  readout stable before stream end: "
          f"{res.readout_settled_before_end_fraction:.1%} of inputs")
    print(f"  mean additions per event, by quarter of each stream: "
          f"{np.round(q, 1).tolist()}")
    shape = "front-loaded" if q[0] > q[3] else "ramping up"
    print(f"  activity shape: {shape}")
    if s.reached:
        print(f"  99% of inputs frame-matched after event "
              f"{s.crossing_event:.1f} at mean cumulative additions "
              f"{s.crossing_additions:.0f}")
    return s


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--subset", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data", default=None)
    ap.add_argument("--csv", default=None,
                    help="write the extended model's curves here")
    args = ap.parse_args()

    _, _, test = load_mnist(args.data)
    sub = bench.seeded_subset(test, args.subset, args.seed)
    images = binarize_batch(sub.images).astype(np.int64)
    print(f"benchmarking on {len(sub)} seeded test images")

    ext_spec, ext_params = get_model("fcn_drelu", Activation.drelu(64), 1.0,
                                     args.data)
    bas_spec, bas_params = get_model("fcn_binary", Activation.binary(), 0.02,
                                     args.data)

    ext = bench.curve_for_model(ext_spec, ext_params, images, sub.labels,
                                order_seed=args.seed)
    bas = bench.curve_for_model(bas_spec, bas_params, images, sub.labels,
                                order_seed=args.seed)
    s_ext = describe("extended (drelu)", ext)
    s_bas = describe("basic (binary)", bas)

    if s_ext.reached and s_bas.reached:
        ratio = s_bas.crossing_additions / s_ext.crossing_additions
        print(f"\nadditions to reach the 99% frame-match point: extended "
              f"needs {1 / ratio:.0%} of the basic model's budget "
              f"({s_ext.crossing_additions:.0f} vs "
              f"{s_bas.crossing_additions:.0f})")
    if args.csv:
        bench.write_curves_csv(ext, args.csv)
        print(f"extended-model curves written to {args.csv}")


if __name__ == "__main__":
    main()
