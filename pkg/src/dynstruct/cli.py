"""Command-line experiment runner.

    dynstruct train     --config exp.cfg --out runs/ [--seed 3]
    dynstruct sweep     --config exp.cfg --out runs/ [--jobs 4]
    dynstruct bench     --config bench.cfg --out bench/
    dynstruct summarize --out runs/

Each training run writes ``eps_<value>/seed_<n>/`` containing
``history.csv``, ``test_error.csv``, ``theta.txt``, ``weights.bin`` and
``result.json``.  ``summarize`` aggregates those into ``summary.csv``,
``tradeoff.csv`` and ``per_layer.csv``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import complexity as cx
from . import relaxation as rx
from .bench import BenchConfig, run_black_box, subset_count_loss, write_trajectory_csv
from .config import ExperimentConfig, load_config
from .data import Dataset, load_mnist_idx, synthetic_subset_task
from .errors import ConfigError, DivergedError, FormatError
from .masked_net import MaskedTopology, save_weights
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger("dynstruct")

SUMMARY_FIELDS = ("eps_prime", "seed", "final_test_error", "final_usage_rate", "per_layer_counts")
TRADEOFF_FIELDS = ("eps_prime", "runs", "usage_median", "usage_q25", "usage_q75",
                   "error_median", "error_q25", "error_q75", "per_layer_counts_median")


def eps_dirname(eps_prime: float) -> str:
    return f"eps_{float(eps_prime)!r}"


def build_topology(cfg: ExperimentConfig) -> MaskedTopology:
    widths = cfg.get("widths")
    if cfg.get("mode") == "connection":
        if len(widths) != 3:
            raise ConfigError("connection mode widths are input,growth,output")
        return MaskedTopology.connection(*widths, L_block=cfg.get("L_block"), blocks=cfg.get("blocks", 1),
                                         transition_width=cfg.get("transition_width"))
    return MaskedTopology.unit(widths)


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.task == "mnist":
        train_set = load_mnist_idx(cfg.dataset_path("train_images"), cfg.dataset_path("train_labels"))
        test_set = load_mnist_idx(cfg.dataset_path("test_images"), cfg.dataset_path("test_labels"))
        if cfg.get("train_subset"):
            train_set = train_set.subset(cfg.get("train_subset"))
        if cfg.get("test_subset"):
            test_set = test_set.subset(cfg.get("test_subset"))
        return train_set, test_set
    if cfg.task == "synthetic":
        rng = np.random.default_rng(cfg.get("data_seed", 0))
        d_rel, d_noise = cfg.get("d_relevant", 4), cfg.get("d_noise", 4)
        margin = cfg.get("margin", 0.5)
        full = synthetic_subset_task(d_rel, d_noise, cfg.get("n_train", 1000) + cfg.get("n_test", 500), rng, margin)
        n = cfg.get("n_train", 1000)
        return (Dataset(full.inputs[:n], full.labels[:n], 2), Dataset(full.inputs[n:], full.labels[n:], 2))
    raise ConfigError(f"task {cfg.task!r} has no dataset")


def train_config(cfg: ExperimentConfig, eps_prime: float, seed: int) -> TrainConfig:
    eta = cfg.get("eta_theta_mode", "1/d")
    return TrainConfig(
        lam=cfg.get("lambda", 2),
        eta_theta=None if eta == "1/d" else float(eta),
        eps_prime=eps_prime,
        theta_init=cfg.get("theta_init", 0.5),
        batch_size=cfg.get("batch", 32),
        epochs=cfg.get("epochs", 1),
        lr0=cfg.get("lr0", 0.01),
        momentum=cfg.get("momentum", 0.9),
        weight_decay=cfg.get("weight_decay", 1e-4),
        decay_biases=cfg.get("decay_biases", True),
        seed=seed,
        precision=cfg.get("precision", 64),
    )


def run_one(cfg: ExperimentConfig, eps_prime: float, seed: int, out: Path) -> dict:
    """Train one (eps_prime, seed) setting and write its artifacts."""
    topology = build_topology(cfg)
    train_set, test_set = load_datasets(cfg)
    run_dir = Path(out) / eps_dirname(eps_prime) / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        weights, theta, history = train(train_config(cfg, eps_prime, seed), train_set, topology, test_set)
    except DivergedError as exc:
        if exc.history is not None:
            exc.history.write_csv(run_dir / "history.csv")
        raise
    mask = rx.deterministic_mask(theta)
    result = {
        "eps_prime": eps_prime,
        "seed": seed,
        "final_test_error": evaluate(weights, topology, mask, test_set),
        "final_usage_rate": cx.weight_usage_rate(topology, mask),
        "per_layer_counts": cx.layer_counts(topology, mask),
        "iterations": len(history),
        "d": topology.dim,
        "topology": topology.to_dict(),
    }
    history.write_csv(run_dir / "history.csv")
    history.write_test_error_csv(run_dir / "test_error.csv")
    rx.save_theta(run_dir / "theta.txt", theta)
    save_weights(run_dir / "weights.bin", weights, topology)
    (run_dir / "result.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    log.info("eps'=%r seed=%d: error %.4f usage %.4f counts %s", eps_prime, seed,
             result["final_test_error"], result["final_usage_rate"], result["per_layer_counts"])
    return result


def _run_job(args):
    return run_one(*args)


def sweep(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[dict]:
    work = [(cfg, eps, seed, out) for eps in cfg.eps_primes for seed in cfg.seeds]
    if jobs <= 1:
        results = [run_one(*w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, work))
    summarize(out)
    return results


def _fmt(v: float) -> str:
    return repr(float(v))


def summarize(out) -> None:
    """Aggregate every ``result.json`` under ``out`` into CSV tables."""
    out = Path(out)
    results = [json.loads(p.read_text()) for p in sorted(out.glob("eps_*/seed_*/result.json"))]
    if not results:
        raise FileNotFoundError(f"no completed runs under {out}")
    results.sort(key=lambda r: (-r["eps_prime"], r["seed"]))

    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_FIELDS)
        for r in results:
            w.writerow([_fmt(r["eps_prime"]), r["seed"], _fmt(r["final_test_error"]),
                        _fmt(r["final_usage_rate"]), ";".join(str(c) for c in r["per_layer_counts"])])

    groups: dict[float, list[dict]] = {}
    for r in results:
        groups.setdefault(r["eps_prime"], []).append(r)
    n_layers = max(len(r["per_layer_counts"]) for r in results)

    with open(out / "tradeoff.csv", "w", newline="") as f, open(out / "per_layer.csv", "w", newline="") as g:
        tw, lw = csv.writer(f), csv.writer(g)
        tw.writerow(TRADEOFF_FIELDS)
        lw.writerow(["eps_prime", "usage_median"] + [f"group_{k + 1}" for k in range(n_layers)])
        for eps, rs in groups.items():
            usage = np.array([r["final_usage_rate"] for r in rs])
            err = np.array([r["final_test_error"] for r in rs])
            counts = np.median(np.array([r["per_layer_counts"] for r in rs], dtype=float), axis=0)
            uq = np.percentile(usage, [50, 25, 75])
            eq = np.percentile(err, [50, 25, 75])
            count_text = [f"{c:g}" for c in counts]
            tw.writerow([_fmt(eps), len(rs), *map(_fmt, uq), *map(_fmt, eq), ";".join(count_text)])
            lw.writerow([_fmt(eps), _fmt(uq[0]), *count_text])


def bench(cfg: ExperimentConfig, out: Path) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.get("d")
    relevant_text = str(cfg.get("relevant", d))
    if "," in relevant_text or ":" in relevant_text:
        relevant = [int(i) for i in relevant_text.replace(":", ",").split(",") if i.strip()]
    else:
        relevant = list(range(int(relevant_text)))
    if any(not 0 <= i < d for i in relevant):
        raise ConfigError("relevant indices must be in [0, d)")
    eta = cfg.get("eta_theta_mode", "1/d")
    rows = []
    for eps in cfg.eps_primes:
        for seed in cfg.seeds:
            bc = BenchConfig(d, cfg.get("iterations", 20000), cfg.get("lambda", 2),
                             None if eta == "1/d" else float(eta), cfg.get("theta_init", 0.5), seed)
            theta, traj = run_black_box(bc, lambda m: subset_count_loss(m, relevant), None, eps)
            write_trajectory_csv(out / f"trajectory_{eps_dirname(eps)}_seed_{seed}.csv", traj)
            mask = rx.deterministic_mask(theta)
            rows.append([_fmt(eps), seed, "".join(map(str, mask)), _fmt(subset_count_loss(mask, relevant)),
                         _fmt(theta.probs.mean())])
    with open(out / "bench_summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["eps_prime", "seed", "deterministic_mask", "loss", "theta_mean"])
        w.writerows(rows)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dynstruct", description="Penalized dynamic structure optimization")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("train", "sweep", "bench"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, help="override the seed list with one seed")
        p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("summarize")
    p.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.verb == "summarize":
            summarize(args.out)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["seeds"] = [args.seed]
        if args.verb == "bench":
            bench(cfg, Path(args.out))
        elif cfg.task == "bench":
            raise ConfigError("bench configs run with the bench verb")
        elif args.verb == "train":
            run_one(cfg, cfg.eps_primes[0], cfg.seeds[0], Path(args.out))
        else:
            sweep(cfg, Path(args.out), args.jobs)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
