"""Watch a digit classify itself before the image finishes arriving.

Streams one MNIST test image pixel by pixel (random order) through the
event engine and prints the running class readout. The decision usually
locks in well before the last pixel: most late events change counters
without changing the answer. Uses the cached acceptance model when
trained/fcn_drelu.json exists, otherwise trains a small net for one epoch
first (about half a minute).

Run: python demos/04_event_stream_readout.py [--index 7] [--seed 0]
"""

import argparse
import os

import numpy as np

from counternet import frame
from counternet.mnist import binarize, binarize_batch, load_mnist, stream_pixels
from counternet.model import (Activation, NetworkSpec, dense_layer,
                              load_model)
from counternet.runtime import EXTENDED, EventNetwork, readout
from counternet.training import TrainConfig, fit

CACHED = os.path.join("trained", "fcn_drelu.json")


def get_model(data_dir):
    if os.path.exists(CACHED):
        print(f"using cached model {CACHED}")
        return load_model(CACHED)
    print("no cached model; training 784-32-10 for one epoch first")
    train, val, _ = load_mnist(data_dir)
    act = Activation.drelu(64)
    spec = NetworkSpec((dense_layer(784, 32, act), dense_layer(32, 10, act)),
                       num_classes=10)
    cfg = TrainConfig(learning_rate=0.1, batch_size=200, epochs=1, seed=0)
    params, _ = fit(spec, cfg,
                    (binarize_batch(train.images).astype(np.int64), train.labels),
                    (binarize_batch(val.images).astype(np.int64), val.labels))
    return spec, params


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--index", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data", default=None)
    args = ap.parse_args()

    spec, params = get_model(args.data)
    _, _, test = load_mnist(args.data)
    img = test[args.index]
    pixels = binarize(img)
    frame_decision = frame.predict(spec, params, pixels)
    print(f"image {args.index}: true label {img.label}, frame-based "
          f"prediction {frame_decision}")

    stream = stream_pixels(pixels, args.seed)
    n = len(stream)
    print(f"streaming {n} pixel events in seeded random order "
          f"(seed {args.seed})\n")
    net = EventNetwork(spec, params, EXTENDED)
    decisions = [readout(net.accumulators)]
    for ev in stream:
        net.feed(ev.t, (ev.unit,), (ev.sign,))
        decisions.append(readout(net.accumulators))

    checkpoints = sorted(set(list(range(0, n + 1, max(1, n // 12))) + [n]))
    print("events consumed -> readout")
    for k in checkpoints:
        frac = k / n
        shown = "undecided" if decisions[k] is None else decisions[k]
        print(f"  {k:4d} ({frac:4.0%})   {shown}")

    wrong = [k for k, d in enumerate(decisions) if d != img.label]
    if decisions[-1] == img.label:
        settle = (wrong[-1] + 1) if wrong else 0
        print(f"\nreadout correct and stable from event {settle} of {n} "
              f"({settle / n:.0%} of the stream)")
    else:
        print("\nthis image ends misclassified (the frame network gets it "
              "wrong too)" if frame_decision != img.label else
              "\nreadout did not settle on the label")
    print(f"total cost: {net.ledger.additions} additions, "
          f"{net.ledger.events_emitted} internal events")


if __name__ == "__main__":
    main()
