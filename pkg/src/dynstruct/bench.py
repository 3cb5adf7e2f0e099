"""Pseudo-boolean objectives for exercising the theta update without a network."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import relaxation as rx


@dataclass
class BenchConfig:
    d: int
    iterations: int = 20000
    lam: int = 2
    eta_theta: float | None = None  # None: 1/d
    theta_init: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("d must be >= 3")
        if self.lam < 2 or self.iterations < 0:
            raise ValueError("need lam >= 2 and a non-negative iteration count")


def subset_count_loss(mask, relevant) -> float:
    """Number of relevant bits that are off; ``relevant`` holds 0-based indices."""
    mask = np.asarray(mask)
    return float(len(relevant) - mask[list(relevant)].sum())


def run_black_box(config: BenchConfig, loss_fn, c=None, eps_prime: float = 0.0):
    """Iterate sample -> rank -> update on ``loss_fn(mask)``.

    ``c`` defaults to all ones.  Returns the final theta and an array of shape
    ``(iterations + 1, d)`` holding theta before the first and after every
    update.
    """
    d = config.d
    c = np.ones(d) if c is None else np.asarray(c, dtype=np.float64)
    eps = rx.normalize_epsilon(eps_prime, c)
    eta = config.eta_theta if config.eta_theta is not None else 1.0 / d
    rng = np.random.default_rng(config.seed)
    theta = rx.BernoulliTheta.full(d, config.theta_init)
    trajectory = np.empty((config.iterations + 1, d))
    trajectory[0] = theta.probs
    for t in range(config.iterations):
        masks = rx.sample_masks(theta, config.lam, rng)
        utilities = rx.compute_utilities([loss_fn(m) for m in masks])
        theta = rx.update_theta(theta, masks, utilities, c, eps, eta)
        trajectory[t + 1] = theta.probs
    return theta, trajectory


def write_trajectory_csv(path, trajectory) -> None:
    trajectory = np.asarray(trajectory)
    d = trajectory.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "theta_mean", "theta_min", "theta_max"] + [f"theta_{i}" for i in range(d)])
        for t, row in enumerate(trajectory):
            w.writerow([t, repr(float(row.mean())), repr(float(row.min())), repr(float(row.max()))]
                       + [repr(float(v)) for v in row])
