"""Dense networks whose hidden units or inter-layer connections are gated by a mask.

Both gating modes are expressed as one directed acyclic graph of nodes.
Node 0 is the input; every other node owns a weight matrix that consumes
the concatenation of its source nodes' outputs.

* unit mode: a plain MLP chain.  Hidden node ``k`` multiplies its ReLU
  output element-wise by its slice of mask bits.
* connection mode: densely connected blocks.  Inside a block, node ``t``
  receives the outputs of every earlier node of the block (block input
  included), and one mask bit scales each whole source slice.  The last
  node of a block is a head: a transition layer (ReLU) for inner blocks,
  the classifier (linear logits) for the final one.

Masked-off parameters stay in storage; only their contribution is zeroed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergedError, FormatError

UNIT = "unit"
CONNECTION = "connection"


@dataclass(frozen=True)
class Node:
    width: int
    sources: tuple[int, ...] = ()
    gates: tuple[int | None, ...] = ()
    units: tuple[int, int] | None = None
    relu: bool = True


@dataclass(frozen=True)
class MaskedTopology:
    """Network shape and the map from mask bits to gated entities.

    ``widths`` is ``(input, hidden..., output)`` in unit mode and
    ``(input, growth, output)`` in connection mode.
    """

    mode: str
    widths: tuple[int, ...]
    L_block: int = 0
    blocks: int = 1
    transition_width: int | None = None
    nodes: tuple[Node, ...] = field(init=False, repr=False, compare=False)
    connections: tuple[tuple[int, int, int], ...] = field(init=False, repr=False, compare=False)
    groups: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive: {widths}")
        if self.mode == UNIT:
            self._build_unit(widths)
        elif self.mode == CONNECTION:
            self._build_connection(widths)
        else:
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if self.dim < 1:
            raise ValueError("topology has no mask bits")

    @classmethod
    def unit(cls, widths) -> MaskedTopology:
        return cls(UNIT, tuple(widths))

    @classmethod
    def connection(cls, n_in, growth, n_out, L_block, blocks=1, transition_width=None):
        return cls(CONNECTION, (n_in, growth, n_out), L_block, blocks, transition_width)

    def _build_unit(self, widths):
        if len(widths) < 3:
            raise ValueError("unit mode needs at least one hidden layer")
        nodes = [Node(widths[0])]
        groups = []
        bit = 0
        for k, w in enumerate(widths[1:], start=1):
            last = k == len(widths) - 1
            units = None if last else (bit, bit + w)
            if units:
                groups.append(units)
                bit += w
            nodes.append(Node(w, (k - 1,), (None,), units, relu=not last))
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "connections", ())
        object.__setattr__(self, "groups", tuple(groups))

    def _build_connection(self, widths):
        if len(widths) != 3:
            raise ValueError("connection mode widths are (input, growth, output)")
        if self.L_block < 1 or self.blocks < 1:
            raise ValueError("L_block and blocks must be >= 1")
        n_in, growth, n_out = widths
        trans = self.transition_width or growth
        nodes = [Node(n_in)]
        connections = []
        groups = []
        bit = 0
        block_input = 0
        for b in range(self.blocks):
            final = b == self.blocks - 1
            local = [block_input]
            start = bit
            for t in range(1, self.L_block + 2):
                head = t == self.L_block + 1
                width = (n_out if final else trans) if head else growth
                gates = []
                for s in range(t):
                    gates.append(bit)
                    connections.append((b, s, t))
                    bit += 1
                nodes.append(Node(width, tuple(local), tuple(gates), None, relu=not (head and final)))
                local.append(len(nodes) - 1)
            groups.append((start, bit))
            block_input = local[-1]
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(self, "connections", tuple(connections))
        object.__setattr__(self, "groups", tuple(groups))

    @property
    def dim(self) -> int:
        return self.groups[-1][1] if self.groups else 0

    @property
    def n_inputs(self) -> int:
        return self.nodes[0].width

    @property
    def n_classes(self) -> int:
        return self.nodes[-1].width

    def fan_in(self, node: Node) -> int:
        return sum(self.nodes[s].width for s in node.sources)

    @property
    def param_shapes(self) -> list[tuple[int, int]]:
        return [(self.fan_in(n), n.width) for n in self.nodes[1:]]

    @property
    def n_weights(self) -> int:
        return sum(r * c for r, c in self.param_shapes)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "widths": list(self.widths),
            "L_block": self.L_block,
            "blocks": self.blocks,
            "transition_width": self.transition_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MaskedTopology:
        return cls(d["mode"], tuple(d["widths"]), d.get("L_block", 0), d.get("blocks", 1),
                   d.get("transition_width"))


@dataclass
class WeightStore:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dtype(self):
        return self.weights[0].dtype

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> WeightStore:
        return WeightStore([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> WeightStore:
        return WeightStore([np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def astype(self, dtype) -> WeightStore:
        return WeightStore([w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def he_init(topology: MaskedTopology, rng: np.random.Generator, dtype=np.float64) -> WeightStore:
    """Weights ~ N(0, 2/fan_in), biases zero."""
    weights, biases = [], []
    for fan_in, width in topology.param_shapes:
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)).astype(dtype))
        biases.append(np.zeros(width, dtype=dtype))
    return WeightStore(weights, biases)


def _check_mask(topology, mask, dtype):
    mask = np.asarray(mask)
    if mask.shape != (topology.dim,):
        raise ValueError(f"mask shape {mask.shape} does not match topology dimension {topology.dim}")
    return mask.astype(dtype)


def _forward(weights, topology, mask, inputs):
    dtype = weights.dtype
    m = _check_mask(topology, mask, dtype)
    x0 = np.asarray(inputs, dtype=dtype)
    if x0.ndim != 2 or x0.shape[1] != topology.n_inputs:
        raise ValueError(f"inputs shape {x0.shape} incompatible with input width {topology.n_inputs}")
    acts = [x0]
    node_inputs, pres = [], []
    for j, node in enumerate(topology.nodes[1:]):
        parts = [acts[s] if g is None else acts[s] * m[g] for s, g in zip(node.sources, node.gates)]
        x = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        pre = x @ weights.weights[j] + weights.biases[j]
        a = np.maximum(pre, 0.0) if node.relu else pre
        if node.units is not None:
            a = a * m[node.units[0]:node.units[1]]
        node_inputs.append(x)
        pres.append(pre)
        acts.append(a)
    return m, acts, node_inputs, pres


def forward(weights: WeightStore, topology: MaskedTopology, mask, inputs) -> np.ndarray:
    """Pre-softmax logits of the network under ``mask``."""
    return _forward(weights, topology, mask, inputs)[1][-1]


def cross_entropy_loss(logits, labels) -> float:
    """Mean negative log-softmax probability of the true labels."""
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise DivergedError("non-finite logits")
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(labels)), labels]))


def softmax(logits) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(weights: WeightStore, topology: MaskedTopology, mask, batch: Batch):
    """Cross-entropy loss on ``batch`` and its exact gradient w.r.t. all weights and biases."""
    m, acts, node_inputs, pres = _forward(weights, topology, mask, batch.inputs)
    logits = acts[-1]
    labels = np.asarray(batch.labels)
    loss = cross_entropy_loss(logits, labels)

    n = len(labels)
    delta = softmax(logits)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    nodes = topology.nodes
    d_acts = [None] * len(nodes)
    d_acts[-1] = delta
    grads = weights.zeros_like()
    for j in range(len(nodes) - 2, -1, -1):
        node = nodes[j + 1]
        da = d_acts[j + 1]
        if da is None:
            continue
        if node.units is not None:
            da = da * m[node.units[0]:node.units[1]]
        dpre = da * (pres[j] > 0) if node.relu else da
        grads.weights[j] = node_inputs[j].T @ dpre
        grads.biases[j] = dpre.sum(axis=0)
        if all(s == 0 for s in node.sources):
            continue
        dx = dpre @ weights.weights[j].T
        offset = 0
        for s, g in zip(node.sources, node.gates):
            width = nodes[s].width
            if s != 0:
                part = dx[:, offset:offset + width]
                if g is not None:
                    part = part * m[g]
                d_acts[s] = part if d_acts[s] is None else d_acts[s] + part
            offset += width
    return loss, grads


def backward(weights: WeightStore, topology: MaskedTopology, mask, batch: Batch) -> WeightStore:
    return loss_and_grad(weights, topology, mask, batch)[1]


def averaged_weight_gradient(weights, topology, masks, batch, return_losses=False):
    """Mean of per-mask gradients, every mask evaluated on the same batch.

    With ``return_losses`` the per-mask losses are returned as well, which is
    what one training iteration needs for both the theta and the W update.
    """
    masks = np.asarray(masks)
    if masks.ndim == 1:
        masks = masks[None, :]
    losses = np.empty(len(masks))
    total = None
    for i, mask in enumerate(masks):
        losses[i], g = loss_and_grad(weights, topology, mask, batch)
        if total is None:
            total = g
        else:
            for a, b in zip(total.params(), g.params()):
                a += b
    lam = len(masks)
    for p in total.params():
        p /= lam
    return (losses, total) if return_losses else total


def save_weights(path, weights: WeightStore, topology: MaskedTopology) -> None:
    """Text header line, then every parameter as little-endian float64."""
    flat = weights.flat().astype("<f8")
    header = f"weights {flat.size} {json.dumps(topology.to_dict(), separators=(',', ':'))}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(flat.tobytes())


def load_weights(path, dtype=np.float64) -> tuple[WeightStore, MaskedTopology]:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing header")
    parts = raw[:newline].decode("ascii").split(" ", 2)
    if len(parts) != 3 or parts[0] != "weights":
        raise FormatError(f"{path}: bad header")
    count = int(parts[1])
    topology = MaskedTopology.from_dict(json.loads(parts[2]))
    flat = np.frombuffer(raw[newline + 1:], dtype="<f8")
    if flat.size != count or count != sum(r * c + c for r, c in topology.param_shapes):
        raise FormatError(f"{path}: expected {count} parameters, found {flat.size}")
    weights, biases = [], []
    offset = 0
    for r, c in topology.param_shapes:
        weights.append(flat[offset:offset + r * c].reshape(r, c).astype(dtype))
        offset += r * c
        biases.append(flat[offset:offset + c].astype(dtype))
        offset += c
    return WeightStore(weights, biases), topology
