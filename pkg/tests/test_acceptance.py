"""Acceptance gates. Each test prints one PASS/FAIL line with the measured
value and the tolerance it was held to. Criterion-4 models are trained once
and cached under trained/; delete that directory to retrain from scratch
(about five minutes total on a desktop CPU).

Run with `pytest tests/test_acceptance.py -v -s` to see the lines inline.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

import ops_audit
from counternet import bench, frame
from counternet.equivalence import gen_random_case, run_suite
from counternet.mnist import binarize_batch, load_mnist, stream_pixels
from counternet.model import Activation, NetworkSpec, dense_layer, load_model
from counternet.runtime import BASIC, EXTENDED, run_stream
from counternet.training import TrainConfig, fit
from test_training import _fd_on, _grad_check_case, _relerr, loss_and_grads

ROOT = Path(__file__).resolve().parent.parent
TRAINED = ROOT / "trained"

N_CASES = 1000
N_ORDERINGS = 3

DRELU_GATE = 0.030
BINARY_GATE = 0.050
EARLY_GATE = 0.90
GRAD_TOL = 1e-4


def report(criterion, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def mnist_test():
    train, val, test = load_mnist(str(ROOT / "data" / "mnist"))
    return test


def _train_or_load(name, activation, steepness):
    """Criterion-4 model: load the cached file or train it now."""
    path = TRAINED / f"{name}.json"
    if path.exists():
        return load_model(path)
    TRAINED.mkdir(exist_ok=True)
    train, val, test = load_mnist(str(ROOT / "data" / "mnist"))
    x_train = binarize_batch(train.images).astype(np.int64)
    x_val = binarize_batch(val.images).astype(np.int64)
    layers = (dense_layer(784, 300, activation),
              dense_layer(300, 100, activation),
              dense_layer(100, 10, activation))
    spec = NetworkSpec(layers, num_classes=10)
    cfg = TrainConfig(learning_rate=0.1, batch_size=200, epochs=40,
                      sigmoid_steepness=steepness, seed=0)
    params, _ = fit(spec, cfg, (x_train, train.labels), (x_val, val.labels),
                    model_out=path)
    return spec, params


@pytest.fixture(scope="session")
def drelu_model():
    return _train_or_load("fcn_drelu", Activation.drelu(64), 1.0)


@pytest.fixture(scope="session")
def binary_model():
    return _train_or_load("fcn_binary", Activation.binary(), 0.02)


@pytest.fixture(scope="session")
def bench_subset(mnist_test):
    sub = bench.seeded_subset(mnist_test, 1000, seed=0)
    return binarize_batch(sub.images).astype(np.int64), sub.labels


@pytest.fixture(scope="session")
def drelu_bench(drelu_model, bench_subset):
    spec, params = drelu_model
    images, labels = bench_subset
    return bench.curve_for_model(spec, params, images, labels, order_seed=0)


@pytest.fixture(scope="session")
def binary_bench(binary_model, bench_subset):
    spec, params = binary_model
    images, labels = bench_subset
    return bench.curve_for_model(spec, params, images, labels, order_seed=0)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_1_equivalence_gate():
    elapsed = 0.0
    mismatches = []
    for kind in (BASIC, EXTENDED):
        passed, failures, secs = run_suite(N_CASES, N_ORDERINGS, seed=0,
                                           model_kind=kind)
        elapsed += secs
        if failures:
            mismatches.append(f"{kind}: {failures[0].mismatch}")
        if passed != N_CASES:
            mismatches.append(f"{kind}: only {passed}/{N_CASES} passed")
    ok = not mismatches and elapsed < 120.0
    report(1, ok,
           f"{N_CASES} networks x {N_ORDERINGS} orderings x both models "
           f"bit-exact in {elapsed:.1f}s (budget 120s)"
           + ("" if not mismatches else f"; {mismatches}"))


def test_criterion_2_alternation():
    violations = 0
    events = 0
    for i in range(N_CASES):
        case = gen_random_case(i, model_kind=BASIC)
        for j in range(N_ORDERINGS):
            stream = stream_pixels(case.input_vec, case.seed * 1000 + j)
            out = run_stream(case.spec, case.params, stream, BASIC,
                             record_trace=True)
            last = {}
            for _, layer, unit, sign in out.trace:
                if layer == 0:
                    continue
                events += 1
                if last.get((layer, unit)) == sign:
                    violations += 1
                last[(layer, unit)] = sign
    report(2, violations == 0,
           f"no same-sign consecutive emissions in {events} neuron events "
           f"across {N_CASES} basic networks x {N_ORDERINGS} orderings "
           f"({violations} violations, tolerance exact)")


def test_criterion_3_extended_bookkeeping():
    bad = 0
    checked = 0
    for i in range(N_CASES):
        case = gen_random_case(i, model_kind=EXTENDED)
        for j in range(N_ORDERINGS):
            stream = stream_pixels(case.input_vec, case.seed * 1000 + j)
            out = run_stream(case.spec, case.params, stream, EXTENDED)
            rec = frame.forward(case.spec, case.params, case.input_vec)
            y_prev = case.input_vec.astype(object)
            for k, layer in enumerate(case.spec.layers):
                lam = layer.activation.lambda_step
                theta = case.params.thetas[k]
                if layer.kind == "dense":
                    # exact-arithmetic recompute, independent of both engines
                    w = case.params.weights[k].astype(object)
                    x = w @ y_prev
                else:
                    x = rec.net_inputs[k][0]
                want = np.array([max(0, (int(x[u]) - int(theta[u])) // lam)
                                 for u in range(layer.out_size)])
                checked += layer.out_size
                if not (np.array_equal(out.zs[k], out.layer_event_sums[k])
                        and np.array_equal(out.zs[k], want)):
                    bad += 1
                y_prev = want.astype(object)
    report(3, bad == 0,
           f"z == signed emissions == independent drelu on {checked} "
           f"neurons across {N_CASES} extended networks x {N_ORDERINGS} "
           f"orderings ({bad} layers off, tolerance exact)")


def test_criterion_4_training(drelu_model, binary_model, mnist_test):
    x_test = binarize_batch(mnist_test.images).astype(np.int64)
    spec_d, params_d = drelu_model
    spec_b, params_b = binary_model
    err_d = frame.error_rate(spec_d, params_d, x_test, mnist_test.labels)
    err_b = frame.error_rate(spec_b, params_b, x_test, mnist_test.labels)
    ok = err_d <= DRELU_GATE and err_b <= BINARY_GATE
    report(4, ok,
           f"784-300-100-10 within 40 epochs: drelu(64) test_error="
           f"{err_d:.4f} (gate {DRELU_GATE}), binary test_error="
           f"{err_b:.4f} (gate {BINARY_GATE})")


def test_criterion_5_early_classification(drelu_bench):
    res = drelu_bench
    early = res.readout_settled_before_end_fraction
    terminal = res.terminal_fraction
    summary = bench.efficiency_summary(res.classification, res.ops)
    crossing = (f"99% frame-match crossing at event "
                f"{summary.crossing_event:.1f} "
                f"(mean cumulative additions {summary.crossing_additions:.0f})"
                if summary.reached else "99% frame match not reached")
    ok = early >= EARLY_GATE and terminal == 1.0
    report(5, ok,
           f"readout settles before stream end for {early:.3f} of 1000 "
           f"inputs (gate {EARLY_GATE}), terminal frame-match fraction "
           f"{terminal} (must be exactly 1.0); {crossing}")


def test_criterion_6_ops_shape(drelu_bench, binary_bench):
    qb = bench.quartile_summary(binary_bench)
    qd = bench.quartile_summary(drelu_bench)
    basic_ok = qb[0] > qb[3]
    ext_ok = qd[0] < qd[3]
    report(6, basic_ok and ext_ok,
           f"per-input quartile mean additions: basic {qb[0]:.0f} -> "
           f"{qb[3]:.0f} (must decrease), extended {qd[0]:.0f} -> "
           f"{qd[3]:.0f} (must increase)")


def test_criterion_7_efficiency_direction(drelu_bench, binary_bench):
    s_ext = bench.efficiency_summary(drelu_bench.classification,
                                     drelu_bench.ops)
    s_bas = bench.efficiency_summary(binary_bench.classification,
                                     binary_bench.ops)
    ok = (s_ext.reached and s_bas.reached
          and s_ext.crossing_additions < s_bas.crossing_additions)
    report(7, ok,
           f"mean cumulative additions at the 99% frame-match point: "
           f"extended {s_ext.crossing_additions:.0f} < basic "
           f"{s_bas.crossing_additions:.0f} on matched architectures")


def test_criterion_8_zero_multiplications():
    offences = ops_audit.multiplicative_arithmetic()
    mults = 0
    adds = 0
    for kind, act in ((BASIC, Activation.binary()),
                      (EXTENDED, Activation.drelu(2))):
        layers = (dense_layer(6, 8, act), dense_layer(8, 4, act))
        spec = NetworkSpec(layers, num_classes=4)
        rng = np.random.default_rng(1)
        from counternet.model import QuantizedParams
        params = QuantizedParams(
            [rng.integers(-6, 7, size=l.weight_shape) for l in spec.layers],
            [rng.integers(0, 4, size=l.out_size) for l in spec.layers])
        out = run_stream(spec, params, stream_pixels(
            rng.integers(0, 4, size=6), 0), kind)
        mults += out.ledger.multiplications
        adds += out.ledger.additions
    ok = offences == [] and mults == 0 and adds > 0
    found = f"{len(offences)} multiplicative operations"
    if offences:
        found += f" {offences}"
    report(8, ok,
           f"AST audit of the event data path found {found}; instrumented "
           f"runs counted {mults} multiplications against {adds} additions "
           f"(tolerance exact)")


def test_criterion_9_gradient_correctness():
    worst = 0.0
    cases = 0
    for seed in range(6):
        ckpt, x, labels, cfg = _grad_check_case(seed)
        _, g_w, g_t = loss_and_grads(ckpt, x, labels, cfg, testing_mode=True)
        for k, layer in enumerate(ckpt.spec.layers):
            for mi, nv in _fd_on(ckpt, x, labels, cfg, ckpt.shadow_weights[k],
                                 list(np.ndindex(*ckpt.shadow_weights[k].shape))):
                worst = max(worst, _relerr(g_w[k][mi], nv))
            tarr = ckpt.shadow_thetas[k]
            if layer.kind == "conv2d":
                maps = layer.out_shape[0]
                per = layer.out_size // maps
                analytic = g_t[k].reshape(maps, per).sum(axis=1)
                res = _fd_on(ckpt, x, labels, cfg, tarr,
                             [slice(m * per, (m + 1) * per)
                              for m in range(maps)])
                for i, (_, nv) in enumerate(res):
                    worst = max(worst, _relerr(analytic[i], nv))
            else:
                for mi, nv in _fd_on(ckpt, x, labels, cfg, tarr,
                                     range(tarr.size)):
                    worst = max(worst, _relerr(g_t[k][mi], nv))
        cases += 1
    report(9, worst <= GRAD_TOL,
           f"analytic vs central-difference gradients on {cases} toy "
           f"networks: max relative error {worst:.2e} (tolerance {GRAD_TOL})")
