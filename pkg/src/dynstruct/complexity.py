"""Complexity coefficients per mask bit and weight-usage accounting."""
from __future__ import annotations

import numpy as np

from .masked_net import CONNECTION, MaskedTopology


def check_coefficients(c, d: int | None = None) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1:
        raise ValueError("coefficients must be a 1-D vector")
    if d is not None and c.size != d:
        raise ValueError(f"{c.size} coefficients for d={d}")
    if np.any(c < 0) or not np.any(c > 0):
        raise ValueError("coefficients must be non-negative with at least one positive entry")
    return c


def unit_selection_coeffs(d: int) -> np.ndarray:
    """Every bit costs the same: c = (1, ..., 1)."""
    if d < 3:
        raise ValueError(f"d must be >= 3, got {d}")
    return np.ones(d)


def connection_selection_coeffs(topology: MaskedTopology) -> np.ndarray:
    """c_i = number of scalar weights in the slice gated by connection bit i."""
    if topology.mode != CONNECTION:
        raise ValueError("connection coefficients need a connection-mask topology")
    c = np.zeros(topology.dim)
    for node in topology.nodes[1:]:
        for s, g in zip(node.sources, node.gates):
            c[g] = topology.nodes[s].width * node.width
    return c


def active_weight_count(topology: MaskedTopology, mask) -> int:
    """Weights whose both endpoints survive the mask; biases are not counted."""
    mask = np.asarray(mask)
    if mask.shape != (topology.dim,):
        raise ValueError(f"mask shape {mask.shape} does not match topology dimension {topology.dim}")
    nodes = topology.nodes

    def live_units(node):
        if node.units is None:
            return node.width
        return int(mask[node.units[0]:node.units[1]].sum())

    total = 0
    for node in nodes[1:]:
        rows = sum(live_units(nodes[s]) for s, g in zip(node.sources, node.gates)
                   if g is None or mask[g])
        total += rows * live_units(node)
    return total


def weight_usage_rate(topology: MaskedTopology, mask) -> float:
    return active_weight_count(topology, mask) / topology.n_weights


def layer_counts(topology: MaskedTopology, mask) -> list[int]:
    """Selected units per hidden layer (unit mode) or connections per block."""
    mask = np.asarray(mask)
    return [int(mask[a:b].sum()) for a, b in topology.groups]
