"""A tour of the two counter-neuron update rules at the smallest scale.

A basic counter holds an integer c starting at -theta and emits a +1 event
when an input pushes c from nonpositive to positive, a -1 event on the way
back down. Its emissions therefore always alternate. An extended counter
additionally owns a step size lambda and a step count z: every completed
lambda-step above threshold is one +1 event, every undone step one -1, so
its quiescent z equals the discretized-ReLU value of its total input.

Run: python demos/01_counter_neurons.py
"""

import numpy as np

from counternet.model import OpLedger
from counternet.runtime import (CounterState, ExtendedCounterState,
                                basic_update, extended_update)


def show_basic():
    print("basic counter, theta=2")
    state = CounterState.init(np.array([2]))
    ledger = OpLedger(num_layers=1)
    print(f"  start: c={state.c[0]} (initialized to -theta)")
    for inp in (1, 2, 1, -3, -2, 5):
        sign = basic_update(state, 0, inp, ledger, layer=1)
        emitted = "nothing" if sign is None else f"{sign:+d}"
        print(f"  input {inp:+d}: c={int(state.c[0]):+d} emits {emitted}")
    print(f"  cost so far: {ledger.additions} additions, "
          f"{ledger.comparisons} comparisons, 0 multiplications")
    print()


def show_extended():
    print("extended counter, theta=0, lambda=2")
    state = ExtendedCounterState.init(np.array([0]))
    ledger = OpLedger(num_layers=1)
    for inp in (3, -2, 4, -5):
        emitted = extended_update(state, 0, 2, inp, ledger, layer=1)
        print(f"  input {inp:+d}: c={int(state.c[0]):+d} z={int(state.z[0])} "
              f"emits {emitted or 'nothing'}")
    print("  z always equals the discretized-ReLU of the summed input:")
    print("  total input 0 -> z=0, and the +1/-1 emissions cancelled out")
    print(f"  cost so far: {ledger.additions} additions, "
          f"{ledger.comparisons} comparisons, 0 multiplications")
    print()


def show_alternation():
    print("alternation under a mean-reverting input walk (basic counter, "
          "theta=1)")
    rng = np.random.default_rng(7)
    state = CounterState.init(np.array([1]))
    history = []
    for _ in range(200):
        c = int(state.c[0])
        pull = -1 if c > 1 else (1 if c < -1 else 0)
        sign = basic_update(state, 0, int(rng.integers(-2, 3)) + pull)
        if sign is not None:
            history.append(sign)
    pairs = list(zip(history, history[1:]))
    same = sum(1 for a, b in pairs if a == b)
    print(f"  {len(history)} emissions, {same} same-sign consecutive pairs "
          "(the update rule makes this impossible)")


if __name__ == "__main__":
    show_basic()
    show_extended()
    show_alternation()
