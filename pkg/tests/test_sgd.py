import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynstruct.masked_net import WeightStore
from dynstruct.sgd import OptimizerState, lr_schedule, sgd_step


def store(w, b=0.0):
    return WeightStore([np.array([[w]], dtype=float)], [np.array([b], dtype=float)])


def test_plain_sgd_without_momentum_or_decay(rng):
    w = WeightStore([rng.normal(size=(3, 2))], [rng.normal(size=2)])
    g = WeightStore([rng.normal(size=(3, 2))], [rng.normal(size=2)])
    before = w.copy()
    sgd_step(w, g, OptimizerState(0.05, momentum=0.0, weight_decay=0.0))
    for a, p, q in zip(w.params(), before.params(), g.params()):
        np.testing.assert_array_equal(a, p - 0.05 * q)


def test_weight_decay_only():
    w = store(1.0)
    sgd_step(w, store(0.0), OptimizerState(0.1, momentum=0.0, weight_decay=1e-4))
    assert w.weights[0][0, 0] == pytest.approx(0.99999, abs=1e-15)


def test_nesterov_two_steps():
    w = store(2.0)
    state = OptimizerState(0.1, momentum=0.9, weight_decay=0.0)
    sgd_step(w, store(1.0, 1.0), state)
    assert state.velocity[0][0, 0] == pytest.approx(-0.1, abs=1e-15)
    assert w.weights[0][0, 0] == pytest.approx(2.0 - 0.19, abs=1e-15)
    sgd_step(w, store(1.0, 1.0), state)
    assert state.velocity[0][0, 0] == pytest.approx(-0.19, abs=1e-15)
    assert w.weights[0][0, 0] == pytest.approx(2.0 - 0.19 - 0.271, abs=1e-15)


def test_zero_decay_is_bit_exact(rng):
    w = WeightStore([rng.normal(size=(4, 3))], [rng.normal(size=3)])
    g = WeightStore([rng.normal(size=(4, 3))], [rng.normal(size=3)])
    a, b = w.copy(), w.copy()
    sa, sb = OptimizerState(0.1, 0.9, 0.0), OptimizerState(0.1, 0.9, 0.0)
    for _ in range(5):
        sgd_step(a, g, sa)
    # hand recurrence without any decay term
    vs = [np.zeros_like(p) for p in b.params()]
    for _ in range(5):
        for p, q, v in zip(b.params(), g.params(), vs):
            v *= 0.9
            v -= 0.1 * q
            p += 0.9 * v - 0.1 * q
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))


def test_decay_applies_to_biases_unless_disabled():
    w1, w2 = store(1.0, 1.0), store(1.0, 1.0)
    sgd_step(w1, store(0.0, 0.0), OptimizerState(0.1, 0.0, 0.01))
    sgd_step(w2, store(0.0, 0.0), OptimizerState(0.1, 0.0, 0.01, decay_biases=False))
    assert w1.biases[0][0] < 1.0
    assert w2.biases[0][0] == 1.0 and w2.weights[0][0, 0] < 1.0


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        OptimizerState(0.1, momentum=1.0)
    with pytest.raises(FloatingPointError):
        sgd_step(store(1.0), store(np.nan), OptimizerState(0.1))
    with pytest.raises(ValueError):
        sgd_step(store(1.0), WeightStore([np.zeros((2, 2))], [np.zeros(1)]), OptimizerState(0.1))


@pytest.mark.parametrize("lr0, epochs, epoch, expected", [
    (0.01, 500, 249, 0.01),
    (0.01, 500, 250, 0.001),
    (0.01, 500, 374, 0.001),
    (0.01, 500, 375, 0.0001),
    (0.1, 300, 149, 0.1),
    (0.1, 300, 150, 0.01),
    (0.1, 300, 225, 0.001),
])
def test_lr_schedule(lr0, epochs, epoch, expected):
    assert lr_schedule(lr0, epoch, epochs) == pytest.approx(expected, rel=1e-15)


@given(st.integers(4, 2000), st.floats(1e-4, 1.0))
def test_lr_schedule_shape(epochs, lr0):
    values = [lr_schedule(lr0, e, epochs) for e in range(epochs)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert len(set(values)) == 3


def test_lr_schedule_range():
    with pytest.raises(ValueError):
        lr_schedule(0.1, 10, 10)
