"""Efficiency measurements over streamed inputs.

Streams each test input pixel by pixel through an event network and
records, after every input event, whether the output accumulator vector
already equals the frame-based final output, whether the readout equals
the true label, and how many additions the event's cascade cost. The
aggregated curves answer "how much of the input does the network need"
and "what does an answer cost in additions".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import frame
from .mnist import stream_pixels
from .model import stream_rng
from .runtime import EventNetwork, _model_kind_of, readout


@dataclass(frozen=True)
class InputRecord:
    """One streamed input. settled_at: first event count after which the
    output accumulator vector matches the frame output for good.
    readout_settled_at: same, but for the class readout matching the frame
    network's readout (the weaker, decision-level agreement)."""
    stream_length: int
    settled_at: int
    readout_settled_at: int
    total_additions: int
    quartile_mean_additions: tuple

    @property
    def settled_before_end(self) -> bool:
        return self.settled_at < self.stream_length

    @property
    def readout_settled_before_end(self) -> bool:
        return self.readout_settled_at < self.stream_length


@dataclass(frozen=True)
class ClassificationCurve:
    """Per event index k (0 = before any input): fraction of inputs whose
    accumulator vector equals the frame final output, and fraction whose
    readout equals the true label. Finished inputs hold their final state."""
    frac_frame_match: np.ndarray
    frac_label_match: np.ndarray

    def __post_init__(self):
        for name in ("frac_frame_match", "frac_label_match"):
            arr = getattr(self, name)
            if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError(f"{name} outside [0, 1]")


@dataclass(frozen=True)
class OpsCurve:
    """Per event index k: mean additions triggered by input event k across
    the input set (0 at k=0 and for inputs already finished), plus the
    running mean cumulative total."""
    mean_additions: np.ndarray
    mean_cumulative: np.ndarray

    def __post_init__(self):
        if self.mean_additions.size and self.mean_additions.min() < 0:
            raise ValueError("negative additions")


@dataclass(frozen=True)
class BenchResult:
    model_kind: str
    order_seed: int
    num_inputs: int
    max_events: int
    classification: ClassificationCurve
    ops: OpsCurve
    records: list
    total_additions: int

    @property
    def terminal_fraction(self) -> float:
        return float(self.classification.frac_frame_match[-1])

    @property
    def settled_before_end_fraction(self) -> float:
        n = len(self.records)
        return sum(r.settled_before_end for r in self.records) / n if n else 0.0

    @property
    def readout_settled_before_end_fraction(self) -> float:
        n = len(self.records)
        return sum(r.readout_settled_before_end for r in self.records) / n if n else 0.0


@dataclass(frozen=True)
class EfficiencySummary:
    """Where the frame-match curve crosses `threshold`, by linear
    interpolation between the bracketing event indices, and the mean
    cumulative additions at that point."""
    threshold: float
    reached: bool
    crossing_event: float | None
    crossing_additions: float | None
    max_fraction: float
    terminal_additions: float

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "reached": self.reached,
            "crossing_event": self.crossing_event,
            "crossing_additions": self.crossing_additions,
            "max_fraction": self.max_fraction,
            "terminal_additions": self.terminal_additions,
        }


def _quartile_means(adds: np.ndarray) -> tuple:
    if adds.size == 0:
        return (0.0, 0.0, 0.0, 0.0)
    return tuple(float(part.mean()) if part.size else 0.0
                 for part in np.array_split(adds, 4))


def _settle_index(indicators: np.ndarray) -> int:
    """First k such that indicators[k:] are all True (len(indicators) if
    the final entry itself is False)."""
    false_at = np.flatnonzero(~indicators)
    return int(false_at[-1]) + 1 if false_at.size else 0


def seeded_subset(dataset, size: int, seed: int):
    """Deterministic test subset: `size` indices drawn without replacement."""
    if size >= len(dataset):
        return dataset
    rng = stream_rng(seed, "bench-subset")
    idx = np.sort(rng.choice(len(dataset), size=size, replace=False))
    return dataset.subset(idx)


def curve_for_model(spec, params, images: np.ndarray, labels: np.ndarray,
                    model_kind: str | None = None, order_seed: int = 0,
                    progress=None) -> BenchResult:
    """Stream every input in seeded random pixel order and aggregate the
    classification and ops curves. `images` must already be integer encoded
    (each pixel value v contributes v unit events)."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 2 or images.shape[0] != labels.shape[0]:
        raise ValueError("images must be (n, input_size) aligned with labels")
    kind = model_kind or _model_kind_of(spec)
    targets = frame.forward_batch(spec, params, images).final_y()

    n = images.shape[0]
    lengths = images.sum(axis=1).astype(np.int64)
    max_events = int(lengths.max()) if n else 0
    match_counts = np.zeros(max_events + 1, dtype=np.int64)
    label_counts = np.zeros(max_events + 1, dtype=np.int64)
    adds_sums = np.zeros(max_events + 1, dtype=np.int64)
    records = []
    total_additions = 0

    net = EventNetwork(spec, params, kind)
    for i in range(n):
        net.reset()
        stream = stream_pixels(images[i], order_seed, label=f"bench-{i}")
        target = targets[i]
        frame_readout = readout(target)
        m = len(stream)
        matched = np.empty(m + 1, dtype=bool)
        labeled = np.empty(m + 1, dtype=bool)
        agreed = np.empty(m + 1, dtype=bool)
        ro = readout(net.accumulators)
        matched[0] = np.array_equal(net.accumulators, target)
        labeled[0] = ro == labels[i]
        agreed[0] = ro == frame_readout
        for k, ev in enumerate(stream, start=1):
            net.feed(ev.t, (ev.unit,), (ev.sign,))
            ro = readout(net.accumulators)
            matched[k] = np.array_equal(net.accumulators, target)
            labeled[k] = ro == labels[i]
            agreed[k] = ro == frame_readout
        adds = np.asarray(net.ledger.per_input_event_additions, dtype=np.int64)
        if adds.size != m:
            raise RuntimeError(f"ledger recorded {adds.size} input events, "
                               f"stream had {m}")

        match_counts[:m + 1] += matched
        match_counts[m + 1:] += bool(matched[m])
        label_counts[:m + 1] += labeled
        label_counts[m + 1:] += bool(labeled[m])
        adds_sums[1:m + 1] += adds
        total_additions += int(net.ledger.additions)
        records.append(InputRecord(
            stream_length=m,
            settled_at=_settle_index(matched),
            readout_settled_at=_settle_index(agreed),
            total_additions=int(net.ledger.additions),
            quartile_mean_additions=_quartile_means(adds),
        ))
        if progress is not None and (i + 1) % 100 == 0:
            progress(i + 1, n)

    denom = max(n, 1)
    classification = ClassificationCurve(
        frac_frame_match=match_counts / denom,
        frac_label_match=label_counts / denom,
    )
    ops = OpsCurve(
        mean_additions=adds_sums / denom,
        mean_cumulative=np.cumsum(adds_sums) / denom,
    )
    return BenchResult(
        model_kind=kind, order_seed=order_seed, num_inputs=n,
        max_events=max_events, classification=classification, ops=ops,
        records=records, total_additions=total_additions,
    )


def quartile_summary(result: BenchResult) -> np.ndarray:
    """Mean over inputs of each input's per-quarter mean additions."""
    q = np.array([r.quartile_mean_additions for r in result.records],
                 dtype=np.float64)
    if q.size == 0:
        return np.zeros(4)
    return q.mean(axis=0)


def efficiency_summary(classification: ClassificationCurve, ops: OpsCurve,
                       threshold: float = 0.99) -> EfficiencySummary:
    """Invert the frame-match curve against mean cumulative additions and
    interpolate the threshold crossing."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    frac = classification.frac_frame_match
    cum = ops.mean_cumulative
    if frac.shape != cum.shape:
        raise ValueError("curve lengths differ")
    hits = np.flatnonzero(frac >= threshold)
    terminal = float(cum[-1]) if cum.size else 0.0
    if hits.size == 0:
        return EfficiencySummary(threshold, False, None, None,
                                 float(frac.max()) if frac.size else 0.0,
                                 terminal)
    k = int(hits[0])
    if k == 0:
        event, adds = 0.0, float(cum[0])
    else:
        t = (threshold - frac[k - 1]) / (frac[k] - frac[k - 1])
        event = (k - 1) + float(t)
        adds = float(cum[k - 1] + t * (cum[k] - cum[k - 1]))
    return EfficiencySummary(threshold, True, event, adds,
                             float(frac.max()), terminal)


def write_curves_csv(result: BenchResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "frac_frame_match", "frac_label_match",
                         "mean_adds_this_event", "mean_cum_adds"])
        cls, ops = result.classification, result.ops
        for k in range(result.max_events + 1):
            writer.writerow([
                k,
                f"{cls.frac_frame_match[k]:.6f}",
                f"{cls.frac_label_match[k]:.6f}",
                f"{ops.mean_additions[k]:.4f}",
                f"{ops.mean_cumulative[k]:.4f}",
            ])


def write_summary_json(result: BenchResult, summary: EfficiencySummary,
                       path) -> None:
    doc = {
        "model_kind": result.model_kind,
        "order_seed": result.order_seed,
        "num_inputs": result.num_inputs,
        "max_events": result.max_events,
        "total_additions": result.total_additions,
        "terminal_fraction": result.terminal_fraction,
        "settled_before_end_fraction": result.settled_before_end_fraction,
        "readout_settled_before_end_fraction":
            result.readout_settled_before_end_fraction,
        "quartile_mean_additions": [float(v) for v in quartile_summary(result)],
        "efficiency": summary.as_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
