"""Multivariate Bernoulli relaxation of binary structure masks.

A structure mask ``M`` is a length-``d`` vector of 0/1 bits.  Masks are
drawn from independent Bernoulli distributions with success probabilities
``theta``, and ``theta`` is moved along the natural gradient of the
expected (penalized) loss using ranking-based utilities.

Masks are plain ``uint8`` numpy arrays; a batch of ``lam`` masks is an
array of shape ``(lam, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DivergedError, FormatError

MIN_DIM = 3


@dataclass(frozen=True, eq=False)
class BernoulliTheta:
    """Probabilities of each mask bit being 1.

    The admissible range after an update is ``[1/d, 1 - 1/d]``; construction
    itself accepts anything in ``[0, 1]`` so degenerate distributions can be
    built for testing.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError(f"theta must be 1-D, got shape {probs.shape}")
        if probs.size < MIN_DIM:
            raise ValueError(f"theta dimension must be >= {MIN_DIM}, got {probs.size}")
        if not np.all((probs >= 0.0) & (probs <= 1.0)):
            raise ValueError("theta entries must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def full(cls, d: int, value: float = 0.5) -> BernoulliTheta:
        return cls(np.full(d, value, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.probs.size

    @property
    def lower(self) -> float:
        return 1.0 / self.dim

    @property
    def upper(self) -> float:
        return 1.0 - 1.0 / self.dim

    def __repr__(self):
        return f"BernoulliTheta(dim={self.dim}, mean={self.probs.mean():.4f})"


def as_masks(masks, d: int | None = None) -> np.ndarray:
    """Validate and return masks as a ``(lam, d)`` uint8 array."""
    arr = np.asarray(masks)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"masks must be 1-D or 2-D, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("mask entries must be exactly 0 or 1")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"mask dimension {arr.shape[1]} does not match d={d}")
    return arr.astype(np.uint8, copy=False)


def sample_masks(theta: BernoulliTheta, lam: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``lam`` independent masks, bit ``i`` set with probability ``theta.probs[i]``."""
    if lam < 2:
        raise ValueError(f"sample size lam must be >= 2, got {lam}")
    return (rng.random((lam, theta.dim)) < theta.probs).astype(np.uint8)


def compute_utilities(losses) -> np.ndarray:
    """Ranking utilities: +1 for the ceil(lam/4) smallest losses, -1 for the
    ceil(lam/4) largest, 0 otherwise.

    Tied losses share the mean utility of the rank slots they occupy, so the
    result always sums to zero.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size < 2:
        raise ValueError("need at least two losses")
    if not np.all(np.isfinite(losses)):
        raise DivergedError(f"non-finite loss among sampled structures: {losses}")
    lam = losses.size
    k = math.ceil(lam / 4)
    slots = np.zeros(lam)
    slots[:k] = 1.0
    slots[lam - k:] = -1.0

    order = np.argsort(losses, kind="stable")
    ranked = losses[order]
    utilities = np.empty(lam)
    if lam == 2 or not np.any(ranked[1:] == ranked[:-1]):
        if ranked[0] == ranked[-1]:
            return np.zeros(lam)
        utilities[order] = slots
        return utilities
    start = 0
    while start < lam:
        stop = start + 1
        while stop < lam and ranked[stop] == ranked[start]:
            stop += 1
        utilities[order[start:stop]] = slots[start:stop].mean()
        start = stop
    return utilities


def normalize_epsilon(eps_prime: float, c) -> float:
    """Scale the user-facing penalty strength by the largest coefficient."""
    c = np.asarray(c, dtype=np.float64)
    cmax = c.max() if c.size else 0.0
    if not cmax > 0:
        raise ValueError("complexity coefficients must contain a positive entry")
    return eps_prime / cmax


def penalty_natural_gradient(theta: BernoulliTheta, c, eps: float) -> np.ndarray:
    """Natural gradient of ``eps * sum(c * theta)``, i.e. ``eps * c * theta * (1 - theta)``."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != theta.probs.shape:
        raise ValueError(f"coefficient length {c.size} does not match d={theta.dim}")
    p = theta.probs
    return eps * c * p * (1.0 - p)


def clamp_theta(theta_raw, d: int | None = None) -> BernoulliTheta:
    raw = np.asarray(theta_raw, dtype=np.float64)
    d = raw.size if d is None else d
    if d < MIN_DIM:
        raise ValueError(f"d must be >= {MIN_DIM}, got {d}")
    if raw.size != d:
        raise ValueError(f"theta length {raw.size} does not match d={d}")
    return BernoulliTheta(np.clip(raw, 1.0 / d, 1.0 - 1.0 / d))


def update_theta(
    theta: BernoulliTheta,
    masks,
    utilities,
    c=None,
    eps: float = 0.0,
    eta_theta: float | None = None,
) -> BernoulliTheta:
    """One natural-gradient step on theta followed by clamping to [1/d, 1-1/d].

    ``c=None`` removes the penalty path entirely (the unpenalized baseline).
    ``eta_theta`` defaults to ``1/d``.
    """
    d = theta.dim
    masks = as_masks(masks, d)
    utilities = np.asarray(utilities, dtype=np.float64)
    if utilities.shape != (masks.shape[0],):
        raise ValueError(f"{utilities.size} utilities for {masks.shape[0]} masks")
    if eta_theta is None:
        eta_theta = 1.0 / d
    if not eta_theta > 0:
        raise ValueError(f"eta_theta must be positive, got {eta_theta}")

    p = theta.probs
    lam = masks.shape[0]
    grad = ((utilities / lam)[:, None] * (masks - p)).sum(axis=0)
    if c is not None:
        grad = grad - penalty_natural_gradient(theta, c, eps)
    return clamp_theta(p + eta_theta * grad, d)


def deterministic_mask(theta: BernoulliTheta) -> np.ndarray:
    """Most probable mask: bit set iff its probability is at least 0.5."""
    return (theta.probs >= 0.5).astype(np.uint8)


def save_theta(path, theta: BernoulliTheta) -> None:
    lines = [f"theta {theta.dim}"]
    lines += [repr(float(v)) for v in theta.probs]
    Path(path).write_text("\n".join(lines) + "\n")


def load_theta(path) -> BernoulliTheta:
    lines = Path(path).read_text().split()
    if len(lines) < 2 or lines[0] != "theta":
        raise FormatError(f"{path}: missing 'theta <d>' header")
    d = int(lines[1])
    values = [float(v) for v in lines[2:]]
    if len(values) != d:
        raise FormatError(f"{path}: header says {d} values, found {len(values)}")
    return BernoulliTheta(np.array(values))
