"""Joint training of network weights and the mask distribution.

Each iteration draws one mini-batch, samples ``lam`` masks from theta,
evaluates every mask on that same batch, moves theta by the ranked natural
gradient (then clamps it), and finally applies SGD to the weights with the
mask-averaged gradient.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import complexity as cx
from . import relaxation as rx
from .data import Dataset, minibatch_iterator
from .errors import DivergedError
from .masked_net import CONNECTION, MaskedTopology, WeightStore, averaged_weight_gradient, forward, he_init, softmax
from .sgd import OptimizerState, lr_schedule, sgd_step

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("iteration", "epoch", "mean_sampled_loss", "theta_mean", "usage_rate")


@dataclass
class TrainConfig:
    lam: int = 2
    eta_theta: float | None = None  # None: 1/d
    eps_prime: float = 0.0
    theta_init: float = 0.5
    batch_size: int = 32
    epochs: int = 1
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    decay_biases: bool = True
    seed: int = 0
    mask_seed: int | None = None
    init_seed: int | None = None
    shuffle_seed: int | None = None
    precision: int = 64
    penalty: bool = True  # False removes the penalty path from the theta update
    coefficients: str = "auto"  # auto | unit | connection

    def __post_init__(self):
        if self.lam < 2:
            raise ValueError(f"lam must be >= 2, got {self.lam}")
        if self.eta_theta is not None and not self.eta_theta > 0:
            raise ValueError("eta_theta must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        if not 0.0 <= self.theta_init <= 1.0:
            raise ValueError("theta_init must be in [0, 1]")

    def seeds(self) -> tuple[int, int, int]:
        """(mask, init, shuffle) seeds; unset ones are spawned from ``seed``."""
        spawned = np.random.SeedSequence(self.seed).spawn(3)
        derived = [int(s.generate_state(1, np.uint64)[0]) for s in spawned]
        explicit = (self.mask_seed, self.init_seed, self.shuffle_seed)
        return tuple(e if e is not None else d for e, d in zip(explicit, derived))

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32


@dataclass
class TrainHistory:
    iteration: list[int] = field(default_factory=list)
    epoch: list[int] = field(default_factory=list)
    mean_sampled_loss: list[float] = field(default_factory=list)
    theta_mean: list[float] = field(default_factory=list)
    usage_rate: list[float] = field(default_factory=list)
    test_error: list[float] = field(default_factory=list)
    thetas: list[np.ndarray] | None = None

    def record(self, iteration, epoch, losses, theta, usage):
        self.iteration.append(iteration)
        self.epoch.append(epoch)
        self.mean_sampled_loss.append(float(np.mean(losses)))
        self.theta_mean.append(float(theta.probs.mean()))
        self.usage_rate.append(usage)
        if self.thetas is not None:
            self.thetas.append(theta.probs.copy())

    def __len__(self):
        return len(self.iteration)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(HISTORY_FIELDS)
            for row in zip(*(getattr(self, k) for k in HISTORY_FIELDS)):
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])

    def write_test_error_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("epoch", "test_error"))
            for e, err in enumerate(self.test_error):
                w.writerow((e, repr(err)))


def iterations_per_run(n_train: int, batch_size: int, epochs: int) -> int:
    return epochs * math.ceil(n_train / batch_size)


def complexity_coefficients(topology: MaskedTopology, kind: str = "auto") -> np.ndarray:
    if kind == "auto":
        kind = "connection" if topology.mode == CONNECTION else "unit"
    if kind == "connection":
        return cx.connection_selection_coeffs(topology)
    if kind == "unit":
        return cx.unit_selection_coeffs(topology.dim)
    raise ValueError(f"unknown coefficient kind {kind!r}")


def train(config: TrainConfig, dataset: Dataset, topology: MaskedTopology, testset: Dataset | None = None,
          loss_transform=None, record_theta: bool = False, callback=None):
    """Run the joint optimization for ``config.epochs`` epochs.

    ``loss_transform`` is applied to the sampled losses before ranking (the
    weight gradient is unaffected).  With ``record_theta`` every post-update
    theta is kept in ``history.thetas``.  ``callback(t, weights, theta)``, if
    given, runs after every iteration; ``weights`` is updated in place later.

    Returns ``(weights, theta, history)``.  A non-finite loss raises
    :class:`DivergedError` carrying the history so far.
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    if dataset.n_features != topology.n_inputs:
        raise ValueError(f"dataset has {dataset.n_features} features, topology expects {topology.n_inputs}")
    d = topology.dim
    mask_seed, init_seed, shuffle_seed = config.seeds()
    mask_rng = np.random.default_rng(mask_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    weights = he_init(topology, np.random.default_rng(init_seed), config.dtype)

    c = complexity_coefficients(topology, config.coefficients)
    eps = rx.normalize_epsilon(config.eps_prime, c)
    penalty_c = c if config.penalty else None
    eta_theta = config.eta_theta if config.eta_theta is not None else 1.0 / d
    theta = rx.BernoulliTheta.full(d, config.theta_init)
    opt = OptimizerState(config.lr0, config.momentum, config.weight_decay, config.decay_biases)
    history = TrainHistory(thetas=[] if record_theta else None)

    train_set = dataset
    if config.dtype != dataset.inputs.dtype:
        train_set = Dataset(dataset.inputs.astype(config.dtype), dataset.labels, dataset.n_classes)

    t = 0
    for epoch in range(config.epochs):
        opt.lr = lr_schedule(config.lr0, epoch, config.epochs)
        epoch_seed = int(shuffle_rng.integers(2**63))
        for batch in minibatch_iterator(train_set, config.batch_size, epoch_seed):
            masks = rx.sample_masks(theta, config.lam, mask_rng)
            try:
                losses, grads = averaged_weight_gradient(weights, topology, masks, batch, return_losses=True)
                ranked = losses if loss_transform is None else loss_transform(losses)
                utilities = rx.compute_utilities(ranked)
            except DivergedError as exc:
                raise DivergedError(f"diverged at iteration {t}: {exc}", history) from exc
            theta = rx.update_theta(theta, masks, utilities, penalty_c, eps, eta_theta)
            sgd_step(weights, grads, opt)
            usage = cx.weight_usage_rate(topology, rx.deterministic_mask(theta))
            history.record(t, epoch, losses, theta, usage)
            if callback is not None:
                callback(t, weights, theta)
            t += 1
        if testset is not None:
            err = evaluate(weights, topology, rx.deterministic_mask(theta), testset)
            history.test_error.append(err)
            log.info("epoch %d: test error %.4f, usage %.4f, theta mean %.4f",
                     epoch, err, history.usage_rate[-1], history.theta_mean[-1])
    return weights, theta, history


def predict_deterministic(weights: WeightStore, topology: MaskedTopology, theta, inputs) -> np.ndarray:
    mask = rx.deterministic_mask(theta)
    return np.argmax(forward(weights, topology, mask, inputs), axis=1)


def stochastic_proba(weights, topology, theta, inputs, n_samples: int, rng) -> np.ndarray:
    """Class probabilities averaged over ``n_samples`` masks drawn from theta."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    total = None
    for _ in range(n_samples):
        mask = (rng.random(theta.dim) < theta.probs).astype(np.uint8)
        p = softmax(forward(weights, topology, mask, inputs))
        total = p if total is None else total + p
    return total / n_samples


def predict_stochastic(weights, topology, theta, inputs, n_samples: int = 100, rng=None) -> np.ndarray:
    rng = np.random.default_rng() if rng is None else rng
    return np.argmax(stochastic_proba(weights, topology, theta, inputs, n_samples, rng), axis=1)


def evaluate(weights: WeightStore, topology: MaskedTopology, mask, testset: Dataset, chunk: int = 4096) -> float:
    """Fraction of ``testset`` misclassified under a fixed mask."""
    wrong = 0
    for start in range(0, len(testset), chunk):
        x = testset.inputs[start:start + chunk]
        pred = np.argmax(forward(weights, topology, mask, x), axis=1)
        wrong += int(np.sum(pred != testset.labels[start:start + chunk]))
    return wrong / len(testset)
