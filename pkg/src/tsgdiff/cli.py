"""Command-line entry point: build-graphs, train, sample, evaluate."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import metrics
from .config import RunConfig, build_config, dump_config, load_config_file
from .data import denormalize, fit_normalizer, load_csv, normalize, prepare_windows
from .errors import DigestMismatch, EmptySampleSet, IoError, MissingFile, NonFiniteLoss, ParseError, TSGDiffError
from .model import LossWeights, ModelState, generate, train, write_training_log
from .persistence import load_weights, save_weights
from .spectral import build_graphs, edge_list

log = logging.getLogger("tsgdiff")

EVAL_RUNS = 5
REPORT_METRICS = ("topo_fid", "s_edit_mean", "s_entropy_mean", "correlational", "discriminative", "predictive")
WEIGHTS_NAME = "weights.tsgd"


def _streams(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from exc


def _config_from_args(args) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    if getattr(args, "data", None):
        overrides["dataset_path"] = args.data
    return build_config(file_values, overrides)


def _require_dataset(cfg: RunConfig):
    if not cfg.dataset_path:
        raise MissingFile("no dataset given (use --data or dataset_path in the config)")
    return load_csv(cfg.dataset_path)


def _windows_and_graphs(cfg: RunConfig):
    table = _require_dataset(cfg)
    batch = prepare_windows(table, cfg.window_size, cfg.stride)
    adj, periods = build_graphs(batch.windows)
    return table, batch, adj, periods


def cmd_build_graphs(cfg: RunConfig, edge_lists: bool = False) -> str:
    _, batch, adj, periods = _windows_and_graphs(cfg)
    _ensure_dir(cfg.out_dir)
    path = os.path.join(cfg.out_dir, "graphs.csv")
    edges_dir = os.path.join(cfg.out_dir, "edges")
    if edge_lists:
        _ensure_dir(edges_dir)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["window", "periods", "edges"])
        for i in range(adj.shape[0]):
            ps = [int(p) for p in periods[i] if p > 0]
            w.writerow([i, " ".join(map(str, ps)), int(adj[i].sum()) // 2])
            if edge_lists:
                with open(os.path.join(edges_dir, f"window_{i:06d}.txt"), "w", encoding="utf-8") as ef:
                    ef.writelines(f"{a} {b}\n" for a, b in edge_list(adj[i]))
    return path


def cmd_train(cfg: RunConfig) -> tuple[str, str]:
    table, batch, adj, _ = _windows_and_graphs(cfg)
    init_rng, train_rng = _streams(cfg.seed, 2)
    model = ModelState.create(cfg.window_size, table.values.shape[1], cfg.hidden_dim, cfg.latent_dim, init_rng,
                              K=cfg.diffusion_steps, beta_range=cfg.beta_range)
    model.norm = batch.norm
    model.feature_names = list(table.feature_names)
    weights = LossWeights(cfg.kl_weight, cfg.denoising_weight, cfg.fourier_weight).ablate(
        cfg.no_kl, cfg.no_denoising, cfg.no_fourier)
    _ensure_dir(cfg.out_dir)
    log_path = os.path.join(cfg.out_dir, "train_log.csv")
    history = []
    try:
        train(model, batch.windows, adj, epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
              rng=train_rng, weights=weights, on_epoch=history.append, recon_source=cfg.recon_source)
    finally:
        write_training_log(log_path, history)
    weights_path = os.path.join(cfg.out_dir, WEIGHTS_NAME)
    save_weights(model, weights_path, cfg.digest())
    with open(os.path.join(cfg.out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    return weights_path, log_path


def write_samples(path, windows: np.ndarray, names) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["window_id", "t"] + list(names))
        for i, win in enumerate(windows):
            for t, row in enumerate(win):
                w.writerow([i, t] + [repr(float(v)) for v in row])


def read_samples(path) -> np.ndarray:
    """Inverse of :func:`write_samples`: returns (n, w, D)."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingFile(f"no such file: {path}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["window_id", "t"]:
            raise ParseError(1, 1, f"{path}: expected a window_id,t,... header")
        groups: dict[int, list] = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                groups.setdefault(int(row[0]), []).append([float(v) for v in row[2:]])
            except (ValueError, IndexError) as exc:
                raise ParseError(lineno, 1, f"{path}: bad sample row at line {lineno}") from exc
    if not groups:
        return np.zeros((0, 0, len(header) - 2))
    lengths = {len(v) for v in groups.values()}
    if len(lengths) != 1:
        raise ParseError(2, 2, f"{path}: windows have differing lengths {sorted(lengths)}")
    return np.array([groups[k] for k in sorted(groups)], dtype=np.float64)


def cmd_sample(cfg: RunConfig, weights_path: str, n: int, deterministic: bool, check_digest: bool) -> str:
    model, digest = load_weights(weights_path)
    if check_digest and digest != cfg.digest():
        raise DigestMismatch(f"{weights_path} was trained with a different configuration")
    rng = _streams(cfg.seed, 3)[2]
    x = generate(model, n, rng, deterministic)
    if model.norm is not None and n > 0:
        x = denormalize(x, model.norm)
    names = model.feature_names or [f"f{j}" for j in range(model.n_features)]
    _ensure_dir(cfg.out_dir)
    path = os.path.join(cfg.out_dir, "samples.csv")
    write_samples(path, x, names)
    return path


def evaluate_windows(real: np.ndarray, synth: np.ndarray, seed: int, pairing: str = "random",
                     runs: int = EVAL_RUNS) -> tuple[dict, list]:
    """Score ``synth`` against ``real`` over ``runs`` seeds; returns (flat summary, per-run reports)."""
    reports = []
    for i in range(runs):
        rng = np.random.default_rng(seed + i)
        rep = metrics.topo_fid_windows(real, synth, pairing=pairing, rng=rng)
        rep.correlational = metrics.correlational_score(real, synth)
        rep.discriminative = metrics.discriminative_score(real, synth, rng)
        rep.predictive = metrics.predictive_score(real, synth, rng)
        rep.seed = seed + i
        reports.append(rep)
    summary = {}
    for m in REPORT_METRICS:
        vals = np.array([getattr(r, m) for r in reports])
        summary[m] = float(vals.mean())
        summary[f"{m}_min"] = float(vals.min())
        summary[f"{m}_max"] = float(vals.max())
    summary["pair_count"] = reports[0].pair_count
    summary["seed"] = seed
    summary["runs"] = runs
    summary["pairing"] = pairing
    return summary, reports


def cmd_evaluate(cfg: RunConfig, synth_path: str, pairing: str) -> str:
    table = _require_dataset(cfg)
    real = prepare_windows(table, cfg.window_size, cfg.stride)
    synth_raw = read_samples(synth_path)
    if synth_raw.shape[0] == 0:
        raise EmptySampleSet(f"{synth_path} contains no windows")
    if synth_raw.shape[1:] != real.windows.shape[1:]:
        raise metrics.DimensionMismatch(
            f"synthetic windows {synth_raw.shape[1:]} do not match real windows {real.windows.shape[1:]}")
    synth = normalize(synth_raw, real.norm)
    summary, _ = evaluate_windows(real.windows, synth, cfg.seed, pairing)
    _ensure_dir(cfg.out_dir)
    path = os.path.join(cfg.out_dir, "metrics.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    metrics.export_plot_data(real.windows, synth, cfg.out_dir)
    return path


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override its entries")
    p.add_argument("--data", help="dataset CSV (same as dataset_path in the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--profile", choices=["desk", "paper"])
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--window-size", dest="window_size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--diffusion-steps", dest="diffusion_steps", type=int)
    p.add_argument("--beta-start", dest="beta_start", type=float)
    p.add_argument("--beta-end", dest="beta_end", type=float)
    p.add_argument("--kl-weight", dest="kl_weight", type=float)
    p.add_argument("--denoising-weight", dest="denoising_weight", type=float)
    p.add_argument("--fourier-weight", dest="fourier_weight", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--recon-source", dest="recon_source", choices=["denoised", "posterior"],
                   help="latent decoded for the reconstruction losses during training")
    p.add_argument("--no-kl", dest="no_kl", action="store_true", default=None)
    p.add_argument("--no-denoising", dest="no_denoising", action="store_true", default=None)
    p.add_argument("--no-fourier", dest="no_fourier", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsgdiff", description="Graph-based latent diffusion for time series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graphs", help="detect periods and build window graphs")
    _add_config_flags(p)
    p.add_argument("--edge-lists", action="store_true", help="also write one edge list per window")

    p = sub.add_parser("train", help="train a model and save weights plus the loss log")
    _add_config_flags(p)

    p = sub.add_parser("sample", help="generate synthetic windows from saved weights")
    _add_config_flags(p)
    p.add_argument("--weights", help=f"weights file (default: <out-dir>/{WEIGHTS_NAME})")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--deterministic", action="store_true", help="noise-free reverse chain")

    p = sub.add_parser("evaluate", help="score synthetic windows against the real dataset")
    _add_config_flags(p)
    p.add_argument("--synth", required=True, help="samples CSV written by the sample command")
    p.add_argument("--pairing", choices=["random", "identity"], default="random")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "build-graphs":
            print(cmd_build_graphs(cfg, args.edge_lists))
        elif args.command == "train":
            for path in cmd_train(cfg):
                print(path)
        elif args.command == "sample":
            if args.n < 0:
                raise EmptySampleSet("--n must be >= 0")
            weights = args.weights or os.path.join(cfg.out_dir, WEIGHTS_NAME)
            print(cmd_sample(cfg, weights, args.n, args.deterministic, check_digest=bool(args.config)))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg, args.synth, args.pairing))
    except NonFiniteLoss as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 2
    except TSGDiffError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
