import itertools

import numpy as np
import pytest

from dynstruct.bench import BenchConfig, run_black_box, subset_count_loss, write_trajectory_csv
from dynstruct.relaxation import deterministic_mask


def test_subset_count_loss():
    assert subset_count_loss(np.ones(12), range(10)) == 0
    assert subset_count_loss(np.zeros(12), range(10)) == 10
    m = np.array([1, 0, 1, 0, 0])
    flipped = m.copy()
    flipped[4] = 1
    assert subset_count_loss(m, [0, 1, 2]) == subset_count_loss(flipped, [0, 1, 2]) == 1


def brute_force_optimum(d, loss):
    masks = np.array(list(itertools.product((0, 1), repeat=d)))
    values = np.array([loss(m) for m in masks])
    return masks[values == values.min()]


def test_small_problem_converges_to_brute_force_optimum():
    d, relevant = 10, list(range(10))
    optima = brute_force_optimum(d, lambda m: subset_count_loss(m, relevant))
    assert len(optima) == 1
    hits = 0
    for seed in range(10):
        theta, _ = run_black_box(BenchConfig(d, iterations=5000, seed=seed),
                                 lambda m: subset_count_loss(m, relevant))
        hits += np.array_equal(deterministic_mask(theta), optima[0])
    assert hits >= 9


def test_constant_loss_with_penalty_drifts_to_lower_bound():
    d = 20
    _, traj = run_black_box(BenchConfig(d, iterations=3000, seed=1), lambda m: 1.0, eps_prime=0.5)
    steps = np.diff(traj, axis=0)
    assert np.all(steps <= 0)
    before_floor = traj[1:] > 1 / d
    assert np.all(steps[before_floor] < 0)
    assert np.allclose(traj[-1], 1 / d)


def test_negative_penalty_drifts_upward():
    d = 20
    _, traj = run_black_box(BenchConfig(d, iterations=3000, seed=1), lambda m: 1.0, eps_prime=-0.5)
    assert np.all(np.diff(traj, axis=0) >= 0)
    assert np.allclose(traj[-1], 1 - 1 / d)


def test_trajectory_shape_and_reproducibility():
    cfg = BenchConfig(6, iterations=50, seed=4)
    loss = lambda m: subset_count_loss(m, [0, 1, 2])  # noqa: E731
    t1, a = run_black_box(cfg, loss)
    t2, b = run_black_box(cfg, loss)
    assert a.shape == (51, 6) and np.all(a[0] == 0.5)
    assert np.array_equal(a, b) and np.array_equal(t1.probs, a[-1])


def test_trajectory_csv(tmp_path):
    _, traj = run_black_box(BenchConfig(4, iterations=3), lambda m: float(m.sum()))
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, traj)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:5] == ["iteration", "theta_mean", "theta_min", "theta_max", "theta_0"]
    assert len(lines) == 5


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(2)
    with pytest.raises(ValueError):
        BenchConfig(5, lam=1)
