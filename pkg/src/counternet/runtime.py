"""Event-driven execution of counter-neuron networks.

Two interchangeable engines:

* scalar updates (`basic_update`, `extended_update`) transcribe the
  per-neuron update rules literally, one neuron at a time; they are the
  contract everything else is checked against.
* `EventNetwork` vectorizes delivery over fan-outs. `ScalarEventNetwork`
  follows the identical schedule while mutating state only through the
  scalar updates; both engines produce bit-identical outputs, ledgers,
  and traces.

Scheduling. Each external input event (or group of simultaneous events)
cascades fully before the next one is consumed. Within a cascade,
propagation runs in layer waves: all events pending for a layer are
delivered together, summed per target, as one update per target — the
update rules define exactly this "sum of simultaneous inputs" case, and
the quiescent state is provably independent of such scheduling choices
(the equivalence suite exercises that independence). A unit emitting e
events in one update hands one (unit, sign, count=e) entry to the next
wave; all e events share the sign, so the entry is unambiguous.

Cost model: one addition per weight delivered per event (a count-k entry
delivers k events), one addition per step wrap, one comparison per
threshold or loop test. The data path itself uses additions, subtractions
and comparisons only — scaling by a count and step wrapping are binary
doubling and repeated subtraction, never multiplication or division.
tests assert that on the AST of the functions named in
DATA_PATH_FUNCTIONS and on the ledger's multiplication counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (COUNTER_LIMIT, InvariantError, NetworkSpec, OpLedger,
                    QuantizedParams, build_synapse_table, debug_enabled)

BASIC = "basic"
EXTENDED = "extended"

# functions whose compiled source must be free of multiplicative arithmetic;
# tests walk their AST
DATA_PATH_FUNCTIONS = (
    "basic_update",
    "extended_update",
    "scale_by_doubling",
    "wrap_down_amounts",
    "floordiv_by_subtraction",
    "EventNetwork.feed",
    "EventNetwork._cascade",
    "EventNetwork._gather",
    "EventNetwork._update_basic",
    "EventNetwork._update_extended",
    "ScalarEventNetwork.feed",
    "ScalarEventNetwork._cascade",
    "ScalarEventNetwork._gather",
    "ScalarEventNetwork._update",
)


@dataclass
class CounterState:
    """Basic counter population: c starts at -theta; a sign change of the
    strictly-positive predicate emits an event."""
    c: np.ndarray

    @classmethod
    def init(cls, thetas: np.ndarray) -> "CounterState":
        return cls(c=(-np.asarray(thetas)).astype(np.int32))


@dataclass
class ExtendedCounterState:
    """Step-counting population: c starts at -theta, z at 0; c wraps by the
    layer step lam, z tracks how many wraps are outstanding."""
    c: np.ndarray
    z: np.ndarray

    @classmethod
    def init(cls, thetas: np.ndarray) -> "ExtendedCounterState":
        t = np.asarray(thetas)
        return cls(c=(-t).astype(np.int32), z=np.zeros(t.shape, dtype=np.int32))


@dataclass(frozen=True)
class InternalEvent:
    """One emitted unit event (count copies of it, all the same sign)."""
    layer: int   # 1-based layer of the emitting unit
    unit: int
    sign: int
    count: int = 1


def basic_update(state: CounterState, neuron: int, inp: int,
                 ledger: OpLedger | None = None, layer: int = 1):
    """One basic-counter update. Returns +1, -1, or None.

    c += inp; emits +1 when c goes from <= 0 to > 0, -1 when it goes from
    > 0 to <= 0. Cost: 1 addition, 2 comparisons.
    """
    c = state.c
    prev = int(c[neuron])
    nxt = prev + inp
    if debug_enabled() and (nxt > COUNTER_LIMIT or nxt < -COUNTER_LIMIT):
        raise InvariantError("counter overflow")
    c[neuron] = nxt
    if ledger is not None:
        ledger.count_additions(layer, 1)
        ledger.count_comparisons(2)
    if prev <= 0 and nxt > 0:
        return 1
    if prev > 0 and nxt <= 0:
        return -1
    return None


def extended_update(state: ExtendedCounterState, neuron: int, lam: int, inp: int,
                    ledger: OpLedger | None = None, layer: int = 1):
    """One step-counting update. Returns the list of emitted signs.

    c += inp; while c >= lam: emit +1, c -= lam, z += 1;
    then while z > 0 and c < 0: emit -1, c += lam, z -= 1.
    Cost: 1 addition for the input, 1 addition per emission, 1 comparison
    per loop test.
    """
    if lam < 1:
        raise ValueError("lam must be >= 1")
    c = int(state.c[neuron]) + inp
    z = int(state.z[neuron])
    adds = 1
    comps = 0
    emitted = []
    while True:
        comps += 1
        if not c >= lam:
            break
        c -= lam
        z += 1
        adds += 1
        emitted.append(1)
    while True:
        comps += 1
        if not (z > 0 and c < 0):
            break
        c += lam
        z -= 1
        adds += 1
        emitted.append(-1)
    if debug_enabled():
        if c > COUNTER_LIMIT or c < -COUNTER_LIMIT:
            raise InvariantError("counter overflow")
        if z < 0:
            raise InvariantError("z went negative")
    state.c[neuron] = c
    state.z[neuron] = z
    if ledger is not None:
        ledger.count_additions(layer, adds)
        ledger.count_comparisons(comps)
    return emitted


# ---------------------------------------------------------------------------
# multiplication-free integer helpers (binary doubling)
# ---------------------------------------------------------------------------

def scale_by_doubling(values: np.ndarray, count: int) -> np.ndarray:
    """count * values using only additions (binary decomposition of count)."""
    acc = np.zeros_like(values)
    chunk = values
    m = 1
    ladder = []
    while m <= count:
        ladder.append((m, chunk))
        chunk = chunk + chunk
        m = m + m
    rest = count
    for m, chunk in reversed(ladder):
        if rest >= m:
            rest -= m
            acc = acc + chunk
    return acc


def floordiv_by_subtraction(a: np.ndarray, step: int):
    """(a // step, a % step) for non-negative a, via doubled subtraction.

    Long division: subtract the largest power-of-two multiple of step that
    fits, repeatedly. Only additions, subtractions, and comparisons.
    """
    a = np.asarray(a, dtype=np.int64).copy()
    q = np.zeros_like(a)
    chunks = []
    m = 1
    chunk = step
    while True:
        chunks.append((m, chunk))
        nxt = chunk + chunk
        if not (a >= nxt).any():
            break
        chunk = nxt
        m = m + m
    for m, chunk in reversed(chunks):
        mask = a >= chunk
        if mask.any():
            a[mask] -= chunk
            q[mask] += m
    return q, a


def wrap_down_amounts(counts: np.ndarray, step: int) -> np.ndarray:
    """counts * step, per element, using only additions."""
    out = np.zeros_like(counts)
    rest = counts.copy()
    chunks = []
    m = 1
    chunk = step
    while (rest >= m).any():
        chunks.append((m, chunk))
        chunk = chunk + chunk
        m = m + m
    for m, chunk in reversed(chunks):
        mask = rest >= m
        if mask.any():
            rest[mask] -= m
            out[mask] += chunk
    return out


@dataclass
class RuntimeOutput:
    """End-of-run view: per-class accumulators are the signed sums of
    output-layer emissions; layer_event_sums hold the same for every layer.
    counters/zs expose final c (and z) per layer for bookkeeping checks."""
    accumulators: np.ndarray
    layer_event_sums: list
    counters: list
    zs: list | None
    ledger: OpLedger
    trace: list | None
    model_kind: str


def readout(output) -> int | None:
    """Class decision from per-class accumulators: argmax, or None when the
    maximum is shared or no accumulator is positive."""
    acc = output.accumulators if isinstance(output, RuntimeOutput) else np.asarray(output)
    if acc.size == 0:
        return None
    best = int(acc.max())
    if best <= 0:
        return None
    winners = np.flatnonzero(acc == best)
    if winners.size > 1:
        return None
    return int(winners[0])


def _model_kind_of(spec: NetworkSpec) -> str:
    kinds = {layer.activation.kind for layer in spec.layers}
    if kinds == {"binary"}:
        return BASIC
    if kinds == {"drelu"}:
        return EXTENDED
    raise InvariantError("network mixes activation kinds; no single neuron model fits")


class _BaseEventNetwork:
    """State, scheduling, and bookkeeping shared by both engines."""

    def __init__(self, spec: NetworkSpec, params: QuantizedParams,
                 model_kind: str, record_trace: bool = False):
        if model_kind not in (BASIC, EXTENDED):
            raise ValueError(f"unknown model kind {model_kind!r}")
        if _model_kind_of(spec) != model_kind:
            raise InvariantError(f"model kind {model_kind!r} does not match "
                                 "the network's activations")
        params.validate(spec)
        self.spec = spec
        self.model_kind = model_kind
        self.num_layers = len(spec.layers)
        self.tables = [build_synapse_table(layer, w)
                       for layer, w in zip(spec.layers, params.weights)]
        self.lams = [layer.activation.lambda_step for layer in spec.layers]
        self._thetas = list(params.thetas)
        self._sizes = [layer.out_size for layer in spec.layers]
        self.record_trace = record_trace
        self.reset()

    def reset(self) -> None:
        if self.model_kind == BASIC:
            self.states = [CounterState.init(t) for t in self._thetas]
        else:
            self.states = [ExtendedCounterState.init(t) for t in self._thetas]
        self.layer_event_sums = [np.zeros(n, dtype=np.int64) for n in self._sizes]
        self.ledger = OpLedger(num_layers=self.num_layers)
        self.trace = [] if self.record_trace else None
        self._t = 0

    @property
    def accumulators(self) -> np.ndarray:
        return self.layer_event_sums[-1]

    def run(self, stream) -> RuntimeOutput:
        if stream.input_size != self.spec.input_size:
            raise InvariantError(f"stream input size {stream.input_size} != "
                                 f"network input size {self.spec.input_size}")
        for t, units, signs in timestep_groups(stream):
            self.feed(t, units, signs)
        return self.output()

    def output(self) -> RuntimeOutput:
        zs = None
        if self.model_kind == EXTENDED:
            zs = [s.z.copy() for s in self.states]
        return RuntimeOutput(
            accumulators=self.layer_event_sums[-1].copy(),
            layer_event_sums=[s.copy() for s in self.layer_event_sums],
            counters=[s.c.copy() for s in self.states],
            zs=zs,
            ledger=self.ledger,
            trace=self.trace,
            model_kind=self.model_kind,
        )

    def _trace_inputs(self, t: int, units, signs) -> None:
        self._t = t
        if self.trace is not None:
            self.trace.extend((t, 0, int(u), int(s)) for u, s in zip(units, signs))

    def _record(self, li: int, units, signs, counts) -> None:
        """Book emissions from layer li (0-based): signed sums, event count,
        trace rows (count copies each)."""
        sums = self.layer_event_sums[li]
        total = 0
        for u, s, k in zip(units, signs, counts):
            u = int(u)
            s = int(s)
            k = int(k)
            if s > 0:
                sums[u] += k
            else:
                sums[u] -= k
            total += k
            if self.trace is not None:
                row = (self._t, li + 1, u, s)
                for _ in range(k):
                    self.trace.append(row)
        self.ledger.count_events(li + 1, total)


class EventNetwork(_BaseEventNetwork):
    """Vectorized engine: one numpy pass per wave of simultaneous events."""

    def feed(self, t: int, units, signs) -> None:
        """Deliver one timestep's external events and drain the cascade."""
        self.ledger.begin_input_event()
        self._trace_inputs(t, units, signs)
        counts = np.ones(len(units), dtype=np.int64)
        self._cascade(units, signs, counts)

    def _cascade(self, units, signs, counts) -> None:
        li = 0
        while len(units):
            idx, vals = self._gather(li, units, signs, counts)
            if self.model_kind == BASIC:
                units, signs, counts = self._update_basic(li, idx, vals)
            else:
                units, signs, counts = self._update_extended(li, idx, vals)
            if len(units):
                self._record(li, units, signs, counts)
            li += 1
            if li >= self.num_layers:
                break

    def _gather(self, li: int, units, signs, counts):
        """Sum one wave's deliveries per target of layer li (0-based).
        Returns (touched target indices ascending, summed inputs)."""
        table = self.tables[li]
        scratch = np.zeros(self._sizes[li], dtype=np.int64)
        touched = np.zeros(self._sizes[li], dtype=bool)
        for u, s, k in zip(units, signs, counts):
            u = int(u)
            k = int(k)
            w = table.weights[u]
            tg = table.targets[u]
            if k != 1:
                w = scale_by_doubling(w.astype(np.int64), k)
            if s > 0:
                scratch[tg] += w
            else:
                scratch[tg] -= w
            touched[tg] = True
            self.ledger.count_weight_deliveries(li + 1, k, len(tg))
        idx = np.flatnonzero(touched)
        return idx, scratch[idx]

    def _update_basic(self, li: int, idx, vals):
        """One summed update per touched basic counter; <=1 emission each."""
        c = self.states[li].c
        prev = c[idx].astype(np.int64)
        nxt = prev + vals
        c[idx] = nxt
        n = len(idx)
        self.ledger.count_comparisons(n + n)
        if debug_enabled() and n and int(np.abs(nxt).max()) > COUNTER_LIMIT:
            raise InvariantError("counter overflow")
        pos = (prev <= 0) & (nxt > 0)
        neg = (prev > 0) & (nxt <= 0)
        fired = pos | neg
        if not fired.any():
            return (), (), ()
        units = idx[fired]
        signs = np.where(pos[fired], 1, -1)
        return units, signs, np.ones(len(units), dtype=np.int64)

    def _update_extended(self, li: int, idx, vals):
        """One summed update per touched step counter. Wrap counts come from
        additive long division; per target the emissions all share a sign."""
        state = self.states[li]
        lam = self.lams[li]
        c = state.c[idx].astype(np.int64) + vals
        z = state.z[idx].astype(np.int64)
        n = len(idx)
        if debug_enabled() and n and int(np.abs(c).max()) > COUNTER_LIMIT:
            raise InvariantError("counter overflow")

        up = np.zeros(n, dtype=np.int64)
        high = c >= lam
        if high.any():
            q, r = floordiv_by_subtraction(c[high], lam)
            up[high] = q
            c[high] = r
        down = np.zeros(n, dtype=np.int64)
        low = (z > 0) & (c < 0)
        if low.any():
            need = -c[low]
            q, r = floordiv_by_subtraction(need, lam)
            e = q + (r > 0)
            e = np.minimum(e, z[low])
            c[low] += wrap_down_amounts(e, lam)
            down[low] = e

        state.c[idx] = c
        state.z[idx] = (z + up) - down
        counts = up + down
        # loop tests: each target's up loop runs up+1 tests, down loop down+1
        total = int(counts.sum())
        self.ledger.count_additions(li + 1, total)
        self.ledger.count_comparisons(total + n + n)
        emitting = counts > 0
        if not emitting.any():
            return (), (), ()
        units = idx[emitting]
        signs = np.where(up[emitting] > 0, 1, -1)
        return units, signs, counts[emitting]


class ScalarEventNetwork(_BaseEventNetwork):
    """Reference engine: the same wave schedule, but every state change goes
    through the scalar update functions, one neuron at a time. The ledger
    charges mirror the vectorized engine exactly: delivery additions are
    booked per source (summing k arrivals into a target plus applying the
    sum costs exactly k additions), wrap additions and loop tests per
    update from what the scalar update reports."""

    def feed(self, t: int, units, signs) -> None:
        self.ledger.begin_input_event()
        self._trace_inputs(t, units, signs)
        counts = [1 for _ in units]
        self._cascade(list(units), list(signs), counts)

    def _cascade(self, units, signs, counts) -> None:
        li = 0
        while len(units):
            idx, vals = self._gather(li, units, signs, counts)
            units, signs, counts = self._update(li, idx, vals)
            if len(units):
                self._record(li, units, signs, counts)
            li += 1
            if li >= self.num_layers:
                break

    def _gather(self, li: int, units, signs, counts):
        """Sum one wave's deliveries per target with plain integer loops."""
        table = self.tables[li]
        sums = {}
        for u, s, k in zip(units, signs, counts):
            u = int(u)
            w = table.weights[u]
            tg = table.targets[u]
            for j, wv in zip(tg.tolist(), w.tolist()):
                if s > 0:
                    inc = wv
                else:
                    inc = -wv
                acc = sums.get(j, 0)
                step = 0
                while step < k:
                    acc += inc
                    step += 1
                sums[j] = acc
            self.ledger.count_weight_deliveries(li + 1, k, len(tg))
        idx = sorted(sums)
        return idx, [sums[j] for j in idx]

    def _update(self, li: int, idx, vals):
        state = self.states[li]
        basic = self.model_kind == BASIC
        lam = self.lams[li]
        out_units, out_signs, out_counts = [], [], []
        wrap_adds = 0
        comps = 0
        for j, v in zip(idx, vals):
            if basic:
                e = basic_update(state, j, int(v))
                comps += 2
                if e is not None:
                    out_units.append(j)
                    out_signs.append(e)
                    out_counts.append(1)
            else:
                emitted = extended_update(state, j, lam, int(v))
                wrap_adds += len(emitted)
                comps += len(emitted) + 2
                if emitted:
                    out_units.append(j)
                    out_signs.append(emitted[0])
                    out_counts.append(len(emitted))
        if wrap_adds:
            self.ledger.count_additions(li + 1, wrap_adds)
        self.ledger.count_comparisons(comps)
        return out_units, out_signs, out_counts


def timestep_groups(stream):
    """Yield (t, units, signs) per distinct timestep, in stream order."""
    t = stream.timesteps
    n = t.size
    lo = 0
    while lo < n:
        hi = lo + 1
        while hi < n and t[hi] == t[lo]:
            hi += 1
        yield int(t[lo]), stream.units[lo:hi], stream.signs[lo:hi]
        lo = hi


def run_stream(spec: NetworkSpec, params: QuantizedParams, stream,
               model_kind: str, record_trace: bool = False,
               engine: str = "vector") -> RuntimeOutput:
    """Execute a full event stream and return the quiescent output."""
    cls = {"vector": EventNetwork, "scalar": ScalarEventNetwork}.get(engine)
    if cls is None:
        raise ValueError(f"unknown engine {engine!r}")
    net = cls(spec, params, model_kind, record_trace=record_trace)
    return net.run(stream)


def write_trace_csv(trace, path) -> None:
    """Event trace rows as CSV: timestep,layer,unit,sign (layer 0 = input)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("timestep,layer,unit,sign\n")
        for t, layer, unit, sign in trace:
            f.write(f"{t},{layer},{unit},{sign}\n")
