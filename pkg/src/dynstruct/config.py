"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Recognized keys::

    task            mnist | synthetic | bench
    mode            unit | connection                 (default unit)
    widths          unit: input,hidden...,output; connection: input,growth,output
    L_block         layers per dense block (connection mode)
    blocks          number of dense blocks            (default 1)
    transition_width  width of inner-block transition heads (default growth)
    epochs, batch, lr0, momentum, weight_decay, decay_biases
    lambda          masks sampled per iteration       (default 2)
    eta_theta_mode  1/d or a number                   (default 1/d)
    theta_init      initial probability               (default 0.5)
    eps_prime_list  comma list; entries like 2^-6, -2^0, 0, 0.01
    seeds           comma list and/or ranges, e.g. 0-4
    precision       64 | 32
    train_images, train_labels, test_images, test_labels   IDX paths (mnist)
    train_subset, test_subset   keep only the first n samples (mnist)
    d_relevant, d_noise, n_train, n_test, data_seed, margin   (synthetic)
    d, relevant, iterations     (bench; relevant is a count or index list)

Relative dataset paths resolve against the config file's directory, then
against ``$DYNSTRUCT_DATA_ROOT``.  Missing MNIST paths fall back to the
standard IDX file names under ``$DYNSTRUCT_DATA_ROOT``.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

DATA_ROOT_ENV = "DYNSTRUCT_DATA_ROOT"

MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte",),
    "train_labels": ("train-labels-idx1-ubyte",),
    "test_images": ("t10k-images-idx3-ubyte", "test-images-idx3-ubyte"),
    "test_labels": ("t10k-labels-idx1-ubyte", "test-labels-idx1-ubyte"),
}

INT_KEYS = {"L_block", "blocks", "transition_width", "epochs", "batch", "lambda", "precision",
            "train_subset", "test_subset", "d_relevant", "d_noise", "n_train", "n_test",
            "data_seed", "d", "iterations"}
FLOAT_KEYS = {"lr0", "momentum", "weight_decay", "theta_init", "margin"}
STR_KEYS = {"task", "mode", "eta_theta_mode", "relevant", *MNIST_FILES}
KNOWN_KEYS = INT_KEYS | FLOAT_KEYS | STR_KEYS | {"widths", "eps_prime_list", "seeds", "decay_biases"}

_POWER = re.compile(r"^([+-]?)2\s*(?:\^|\*\*)\s*\(?\s*([+-]?\d+)\s*\)?$")
_SUPERSCRIPTS = str.maketrans("⁰¹²³⁴⁵⁶⁷⁸⁹⁻⁺", "0123456789-+")


def parse_eps_prime(token: str) -> float:
    """``2^-6`` / ``-2^0`` / ``2**-3`` / plain decimals."""
    token = token.strip().replace("−", "-")
    first_sup = next((i for i, ch in enumerate(token) if ch in "⁰¹²³⁴⁵⁶⁷⁸⁹⁻⁺"), None)
    if first_sup is not None:
        token = token[:first_sup] + "^" + token[first_sup:].translate(_SUPERSCRIPTS)
    m = _POWER.match(token)
    if m:
        value = 2.0 ** int(m.group(2))
        return -value if m.group(1) == "-" else value
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"cannot parse eps_prime entry {token!r}") from None


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if re.fullmatch(r"\d+\s*-\s*\d+", part):
            lo, hi = (int(v) for v in part.split("-"))
            seeds.extend(range(lo, hi + 1))
        else:
            try:
                seeds.append(int(part))
            except ValueError:
                raise ConfigError(f"bad seed {part!r}") from None
    return seeds


@dataclass
class ExperimentConfig:
    values: dict
    source: Path | None = None
    eps_tokens: list[str] = field(default_factory=list)

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def task(self) -> str:
        return self.values["task"]

    @property
    def eps_primes(self) -> list[float]:
        return [parse_eps_prime(t) for t in self.eps_tokens]

    @property
    def seeds(self) -> list[int]:
        return self.values.get("seeds", [0])

    def dataset_path(self, key: str) -> Path:
        """Resolve a dataset path key, honoring the data-root fallback."""
        root = os.environ.get(DATA_ROOT_ENV)
        given = self.values.get(key)
        candidates = []
        if given:
            p = Path(given).expanduser()
            if p.is_absolute():
                candidates.append(p)
            else:
                if self.source is not None:
                    candidates.append(self.source.parent / p)
                candidates.append(Path.cwd() / p)
                if root:
                    candidates.append(Path(root) / p)
        elif root:
            for name in MNIST_FILES.get(key, ()):
                candidates += [Path(root) / name, Path(root) / f"{name}.gz"]
        for c in candidates:
            if c.exists():
                return c
        where = ", ".join(str(c) for c in candidates) or f"set {key} or ${DATA_ROOT_ENV}"
        raise ConfigError(f"dataset file for {key!r} not found ({where})")


def parse_config_text(text: str, source: Path | None = None) -> ExperimentConfig:
    values: dict = {}
    eps_tokens: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in INT_KEYS:
                values[key] = int(value)
            elif key in FLOAT_KEYS:
                values[key] = float(value)
            elif key == "widths":
                values[key] = tuple(int(v) for v in value.split(","))
            elif key == "seeds":
                values[key] = parse_seeds(value)
            elif key == "decay_biases":
                values[key] = value.lower() in ("1", "true", "yes")
            elif key == "eps_prime_list":
                eps_tokens = [t.strip() for t in value.split(",") if t.strip()]
                for t in eps_tokens:
                    parse_eps_prime(t)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None

    task = values.get("task")
    if task not in ("mnist", "synthetic", "bench"):
        raise ConfigError(f"task must be mnist, synthetic or bench, got {task!r}")
    if not eps_tokens:
        raise ConfigError("eps_prime_list is missing or empty")
    if "seeds" in values and not values["seeds"]:
        raise ConfigError("seeds list is empty")
    if task != "bench" and "widths" not in values:
        raise ConfigError("widths is required")
    if task == "bench" and "d" not in values:
        raise ConfigError("bench task requires d")
    mode = values.setdefault("mode", "unit")
    if mode not in ("unit", "connection"):
        raise ConfigError(f"mode must be unit or connection, got {mode!r}")
    if mode == "connection" and task != "bench" and "L_block" not in values:
        raise ConfigError("connection mode requires L_block")
    eta = values.get("eta_theta_mode", "1/d")
    if eta != "1/d":
        try:
            if float(eta) <= 0:
                raise ValueError
        except ValueError:
            raise ConfigError(f"eta_theta_mode must be 1/d or a positive number, got {eta!r}") from None
    return ExperimentConfig(values, source, eps_tokens)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, path.resolve())
