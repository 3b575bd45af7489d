"""Command-line pipeline: inject, build-views, train, score, eval, sweep, ablate.

Every command is a pure function of (inputs, config, seed) and writes a
``<output>.manifest.json`` with the resolved config, seeds and input hashes
so runs can be reproduced bit-identically. Flags override a ``key=value``
config file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict

import numpy as np

from . import __version__, detect, views
from .corrupt import MODES, corruption_report, inject_errors
from .detect import BASELINE_METHODS, BaselineEmbeddings
from .encoder import ATTENTION_KINDS, load_model, save_model
from .kgstore import load_graph, write_graph
from .training import NEGATIVE_MODES, VARIANTS, TrainConfig, train

logger = logging.getLogger("kgaudit")

DEFAULT_K_GRID = "0.01,0.02,0.03,0.04,0.05"
# wide presets cover the standard search ranges for each hyperparameter
WIDE_GRIDS = {
    "attn_threshold": "0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2",
    "energy_weight": "0.001,0.01,0.1,1,10,100,1000",
    "margin": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
}

TRAIN_OPTIONS = [
    ("epochs", int, "training epochs"),
    ("batch-size", int, "triples per batch"),
    ("lr", float, "Adam learning rate"),
    ("dim", int, "embedding size"),
    ("out-dim", int, "attended representation size"),
    ("margin", float, "hinge margin of the translation loss"),
    ("temperature", float, "contrastive temperature"),
    ("contrastive-weight", float, "weight of the contrastive term"),
    ("attn-threshold", float, "attention gate threshold"),
    ("energy-weight", float, "energy coefficient in the confidence score"),
]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(primary_output, command: str, config: dict,
                    inputs: list, outputs: list) -> None:
    manifest = {
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(config.items())},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    with open(f"{primary_output}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_config_file(path) -> dict:
    values: dict[str, object] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = _coerce(raw)
    return values


def _coerce(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def _resolve(args, key: str, default):
    """Flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if getattr(args, "_config_values", None) and key in args._config_values:
        return args._config_values[key]
    return default


def _train_config(args, seed: int, variant: str | None = None) -> TrainConfig:
    base = TrainConfig()
    kwargs = {key.replace("-", "_"): _resolve(args, key.replace("-", "_"),
                                              getattr(base, key.replace("-", "_")))
              for key, _type, _help in TRAIN_OPTIONS}
    kwargs["negative_mode"] = _resolve(args, "neg_mode", base.negative_mode)
    kwargs["attention"] = _resolve(args, "attention", base.attention)
    kwargs["include_positive_in_denominator"] = _resolve(
        args, "include_positive_in_denominator", False)
    kwargs["variant"] = variant or _resolve(args, "variant", base.variant)
    kwargs["seed"] = seed
    config = TrainConfig(**kwargs)
    config.validate()
    return config


def _parse_float_list(raw: str) -> list[float]:
    return [float(part) for part in raw.split(",") if part.strip()]


def _load_graph_with_views(args):
    g = load_graph(args.in_path)
    vg = views.load_views(args.views, g)
    return g, vg


# ---------------------------------------------------------------------------
# commands

def cmd_inject(args) -> None:
    g = load_graph(args.in_path)
    ratio = _resolve(args, "ratio", 0.05)
    mode = _resolve(args, "mode", "same-position")
    noisy = inject_errors(g, ratio=ratio, mode=mode, seed=args.seed)
    write_graph(noisy, args.out, labels_path=args.labels)
    report = corruption_report(noisy)
    logger.info("injected %d errors over %d relations", report["total"],
                len(report["per_relation"]))
    _write_manifest(args.out, "inject",
                    {"ratio": ratio, "mode": mode, "seed": args.seed},
                    [args.in_path], [args.out, args.labels])


def cmd_build_views(args) -> None:
    g = load_graph(args.in_path)
    m = _resolve(args, "neighbors", None)
    vg = views.build_views(g, m=m, seed=args.seed)
    views.save_views(vg, args.out, g, seed=args.seed)
    logger.info("built views for %d triples with fan-out %d", len(vg), vg.fan_out)
    _write_manifest(args.out, "build-views",
                    {"neighbors": vg.fan_out, "seed": args.seed},
                    [args.in_path], [args.out])


def cmd_train(args) -> None:
    method = _resolve(args, "method", "model")
    config = _train_config(args, seed=args.seed)
    inputs = [args.in_path]
    if method == "model":
        if args.views is None:
            raise ValueError("--views is required when training the model")
        g, vg = _load_graph_with_views(args)
        inputs.append(args.views)
        model, log = train(g, vg, config)
        save_model(model, args.out)
        if args.trainlog:
            log.write_jsonl(args.trainlog)
        logger.info("trained %d epochs, mean iteration %.4f s",
                    config.epochs, log.mean_iter_seconds())
    elif method in BASELINE_METHODS:
        g = load_graph(args.in_path)
        emb = detect.train_baseline(g, method, config)
        np.savez(args.out, method=np.bytes_(method.encode()), **emb.tables)
    else:
        raise ValueError(f"unknown method {method!r}")
    outputs = [args.out] + ([args.trainlog] if args.trainlog else [])
    _write_manifest(args.out, "train", {**asdict(config), "method": method},
                    inputs, outputs)


def _load_checkpoint(path):
    """A checkpoint is either a trained model or baseline tables."""
    with np.load(path) as data:
        if "hyper_json" in data.files:
            kind = "model"
        else:
            kind = bytes(data["method"]).decode()
            tables = {k: data[k] for k in data.files if k != "method"}
    if kind == "model":
        return "model", load_model(path)
    return kind, BaselineEmbeddings(method=kind, tables=tables)


def cmd_score(args) -> None:
    g = load_graph(args.in_path)
    kind, payload = _load_checkpoint(args.model)
    inputs = [args.in_path, args.model]
    lam = None
    if kind == "model":
        if args.views is None:
            raise ValueError("--views is required to score with the trained model")
        vg = views.load_views(args.views, g)
        inputs.append(args.views)
        lam = _resolve(args, "energy_weight", None)
        ranking = detect.score_all(g, vg, payload, energy_weight=lam)
        lam = payload.hyper.energy_weight if lam is None else lam
    else:
        ranking = detect.baseline_score(g, kind, payload)
    detect.write_ranking(ranking, g, args.out)
    _write_manifest(args.out, "score", {"method": kind, "energy_weight": lam},
                    inputs, [args.out])


def cmd_eval(args) -> None:
    from .kgstore import load_labels

    ranking = detect.read_ranking(args.ranking)
    flags = load_labels(args.labels)
    ks = _parse_float_list(_resolve(args, "k", DEFAULT_K_GRID))
    rows = detect.metrics_rows(ranking, flags, ks)
    detect.write_metrics(rows, args.out)
    for k, precision, recall in rows:
        logger.info("K=%g precision=%.4f recall=%.4f", k, precision, recall)
    _write_manifest(args.out, "eval", {"k": ks},
                    [args.ranking, args.labels], [args.out])


def _grid(args, name: str) -> list[float]:
    raw = _resolve(args, f"{name}_grid", None)
    if raw is None:
        base = TrainConfig()
        return [_resolve(args, name, getattr(base, name))]
    if raw == "wide":
        raw = WIDE_GRIDS[name]
    return _parse_float_list(raw)


def cmd_sweep(args) -> None:
    from .kgstore import load_labels

    g, vg = _load_graph_with_views(args)
    flags = load_labels(args.labels)
    ks = _parse_float_list(_resolve(args, "k", DEFAULT_K_GRID))
    repeat = _resolve(args, "repeat", 1)
    seeds = [args.seed + i for i in range(repeat)]
    mu_grid = _grid(args, "attn_threshold")
    lam_grid = _grid(args, "energy_weight")
    margin_grid = _grid(args, "margin")

    rows = []
    for mu in mu_grid:
        for margin in margin_grid:
            # one trained model per (gate, margin, seed); the energy weight
            # only affects scoring, so the grid reuses the encoder outputs
            per_seed = []
            for seed in seeds:
                config = _train_config(args, seed=seed)
                config.attn_threshold = mu
                config.margin = margin
                model, _log = train(g, vg, config)
                per_seed.append(detect.score_components(g, vg, model))
            for lam in lam_grid:
                metric_sets = []
                for sims, energies in per_seed:
                    ranking = detect.rank_from_components(sims, energies, lam)
                    metric_sets.append(detect.metrics_rows(ranking, flags, ks))
                for i, k in enumerate(ks):
                    precision = float(np.mean([m[i][1] for m in metric_sets]))
                    recall = float(np.mean([m[i][2] for m in metric_sets]))
                    rows.append((mu, lam, margin, k, precision, recall))
                logger.info("gate=%g energy_weight=%g margin=%g done", mu, lam, margin)

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("attn_threshold,energy_weight,margin,K,precision,recall\n")
        for mu, lam, margin, k, precision, recall in rows:
            fh.write(f"{mu:.10g},{lam:.10g},{margin:.10g},{k:.10g},"
                     f"{precision:.6f},{recall:.6f}\n")
    _write_manifest(args.out, "sweep",
                    {"attn_threshold_grid": mu_grid, "energy_weight_grid": lam_grid,
                     "margin_grid": margin_grid, "k": ks, "seeds": seeds},
                    [args.in_path, args.views, args.labels], [args.out])


def cmd_ablate(args) -> None:
    from .kgstore import load_labels

    g, vg = _load_graph_with_views(args)
    flags = load_labels(args.labels)
    ks = _parse_float_list(_resolve(args, "k", DEFAULT_K_GRID))
    repeat = _resolve(args, "repeat", 1)
    seeds = [args.seed + i for i in range(repeat)]
    variant_names = [v.strip() for v in
                     _resolve(args, "variants", ",".join(VARIANTS)).split(",") if v.strip()]

    rows = []
    for variant in variant_names:
        metric_sets = []
        for seed in seeds:
            config = _train_config(args, seed=seed, variant=variant)
            model, _log = train(g, vg, config)
            ranking = detect.score_all(g, vg, model)
            metric_sets.append(detect.metrics_rows(ranking, flags, ks))
        for i, k in enumerate(ks):
            precision = float(np.mean([m[i][1] for m in metric_sets]))
            recall = float(np.mean([m[i][2] for m in metric_sets]))
            rows.append((variant, k, precision, recall))
        logger.info("variant %s done", variant)

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("variant,K,precision,recall\n")
        for variant, k, precision, recall in rows:
            fh.write(f"{variant},{k:.10g},{precision:.6f},{recall:.6f}\n")
    _write_manifest(args.out, "ablate",
                    {"variants": variant_names, "k": ks, "seeds": seeds},
                    [args.in_path, args.views, args.labels], [args.out])


# ---------------------------------------------------------------------------
# argument wiring

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    for name, cast, help_text in TRAIN_OPTIONS:
        p.add_argument(f"--{name}", type=cast, default=None, help=help_text)
    p.add_argument("--neg-mode", choices=NEGATIVE_MODES, default=None,
                   help="negative sampling mode")
    p.add_argument("--attention", choices=ATTENTION_KINDS, default=None,
                   help="attention score form")
    p.add_argument("--include-positive-in-denominator", action="store_const",
                   const=True, default=None,
                   help="use the conventional contrastive denominator")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgaudit",
                                     description="knowledge-graph error detection pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--config", default=None, help="key=value config file")
        return p

    p = command("inject", cmd_inject, "inject synthetic errors into a clean KG")
    p.add_argument("--in", dest="in_path", required=True, help="clean triple TSV")
    p.add_argument("--out", required=True, help="noisy triple TSV")
    p.add_argument("--labels", required=True, help="0/1 error flags, one per line")
    p.add_argument("--ratio", type=float, default=None, help="error fraction of the output")
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--seed", type=int, required=True)

    p = command("build-views", cmd_build_views, "sample neighbor lists for both views")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True, help="views cache (npz)")
    p.add_argument("--neighbors", type=int, default=None,
                   help="fan-out (default: average pool size)")
    p.add_argument("--seed", type=int, default=0)

    p = command("train", cmd_train, "train the model or a baseline scorer")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--views", default=None)
    p.add_argument("--out", required=True, help="checkpoint (npz)")
    p.add_argument("--trainlog", default=None, help="per-iteration JSONL log")
    p.add_argument("--method", choices=("model",) + BASELINE_METHODS, default=None)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--seed", type=int, required=True)
    _add_train_flags(p)

    p = command("score", cmd_score, "rank all triples by confidence")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--model", required=True, help="checkpoint from train")
    p.add_argument("--views", default=None)
    p.add_argument("--out", required=True, help="ranking TSV")
    p.add_argument("--energy-weight", type=float, default=None,
                   help="override the checkpoint's energy weight")

    p = command("eval", cmd_eval, "precision/recall at each K")
    p.add_argument("--ranking", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", default=None, help=f"comma list (default {DEFAULT_K_GRID})")
    p.add_argument("--out", required=True, help="metrics CSV")

    p = command("sweep", cmd_sweep, "grid search over gate/energy-weight/margin")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--repeat", type=int, default=None, help="average over derived seeds")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    for grid_name in ("attn-threshold-grid", "energy-weight-grid", "margin-grid"):
        p.add_argument(f"--{grid_name}", default=None,
                       help="comma list of values, or 'wide' for the standard range")
    _add_train_flags(p)

    p = command("ablate", cmd_ablate, "compare model variants")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--repeat", type=int, default=None)
    p.add_argument("--variants", default=None,
                   help=f"comma list among {','.join(VARIANTS)}")
    _add_train_flags(p)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    args._config_values = _parse_config_file(args.config) if args.config else {}
    try:
        args.fn(args)
    except Exception as exc:  # CLI boundary: report and signal failure
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
