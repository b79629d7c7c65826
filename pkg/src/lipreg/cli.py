"""Command-line interface.

Subcommands: ``train`` (run the paired multi-formulation experiment),
``evaluate`` (noise-sweep a saved model on a dataset), ``sweep``
(grid-search the regularization weight), ``contour`` (emit the 2-d
product-bound grid), and ``report`` (re-render tables/curves from a saved
report.json).

Every run writes a fully resolved ``config_used.json`` into the output
directory; re-running with ``--config config_used.json`` reproduces the
run bit-for-bit. Exit codes: 0 success, 2 usage errors, 1 runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import NoiseSpec, apply_noise, load_csv
from .data import split as split_dataset
from .data import standardize as standardize_dataset
from .experiment import (
    atomic_write_text,
    contour_grid,
    grid_search,
    load_report_json,
    run_experiment,
    table_text,
    curves_csv,
    report_table,
    write_contour_csv,
    write_outputs,
)
from .network import load_model, lipschitz_upper_bound, predict, mae_metric, save_model, spectral_norms
from .optimizer import TrainConfig
from .regularization import RegularizationMode

_MODE_NAMES = {
    "none": "none",
    "layer": "layer_sum",
    "lipschitz": "lipschitz_product",
    "maxnorm": "max_norm",
}
_ALL_KINDS = ["none", "layer_sum", "lipschitz_product", "max_norm"]

# JSON keys in config_used.json, where they differ from argparse dests
_ALIASES = {"lam": "lambda"}

_TRAIN_DEFAULTS = {
    "dataset": None,
    "target": None,
    "modes": "all",
    "lam": 1.0,
    "maxnorm_cap": 10.0,
    "epochs": 200,
    "batch_size": 50,
    "learning_rate": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "seed": 0,
    "noise_seed": None,
    "shuffle": True,
    "train_fraction": 0.8,
    "etas": "0,0.2,0.4,0.6",
    "hidden": "20,20,20",
    "standardize": True,
    "symmetric_noise": False,
    "scalar_noise": False,
    "out": "lipreg_out",
}

_SWEEP_DEFAULTS = dict(_TRAIN_DEFAULTS)
_SWEEP_DEFAULTS.update({
    "modes": "lipschitz",
    "lambda_grid": "0.01,0.1,1,10,100",
    "seeds": "0,1,2,3,4",
    "etas": "0",
    "jobs": 1,
})
del _SWEEP_DEFAULTS["lam"]

_EVALUATE_DEFAULTS = {
    "model": None,
    "dataset": None,
    "target": None,
    "etas": "0,0.2,0.4,0.6",
    "noise_seed": 0,
    "standardize": True,
    "symmetric_noise": False,
    "scalar_noise": False,
    "out": "lipreg_out",
}

_CONTOUR_DEFAULTS = {
    "range": 3.0,
    "resolution": 301,
    "out": "lipreg_out",
}

_REPORT_DEFAULTS = {
    "report": None,
    "out": "lipreg_out",
}


def _float_list(value):
    if isinstance(value, str):
        return [float(tok) for tok in value.split(",") if tok.strip()]
    return [float(v) for v in value]


def _int_list(value):
    if isinstance(value, str):
        return [int(tok) for tok in value.split(",") if tok.strip()]
    return [int(v) for v in value]


def _mode_kinds(value, parser):
    if isinstance(value, str):
        names = [tok.strip() for tok in value.split(",") if tok.strip()]
    else:
        names = list(value)
    kinds = []
    for name in names:
        if name == "all":
            kinds.extend(_ALL_KINDS)
        elif name in _MODE_NAMES:
            kinds.append(_MODE_NAMES[name])
        elif name in _ALL_KINDS:
            kinds.append(name)
        else:
            parser.error(
                f"unknown mode {name!r} (choose from none, layer, lipschitz, maxnorm, all)"
            )
    seen = []
    for kind in kinds:
        if kind not in seen:
            seen.append(kind)
    return seen


def _target_column(value):
    if isinstance(value, (int, np.integer)):
        return int(value)
    try:
        return int(value)
    except (TypeError, ValueError):
        return value


def _load_config(path, parser):
    if not os.path.exists(path):
        parser.error(f"config file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            parser.error(f"could not parse config {path}: {exc.msg} "
                         f"(line {exc.lineno})")
    if not isinstance(doc, dict):
        parser.error(f"config {path} must hold a JSON object")
    return doc


def _resolve(args, defaults, config):
    values = {}
    for dest, default in defaults.items():
        cli = getattr(args, dest, None)
        key = _ALIASES.get(dest, dest)
        if cli is not None:
            values[dest] = cli
        elif config is not None and key in config:
            values[dest] = config[key]
        else:
            values[dest] = default
    return values


def _write_config_used(out_dir, command, values):
    os.makedirs(out_dir, exist_ok=True)
    doc = {"command": command}
    for dest, value in values.items():
        doc[_ALIASES.get(dest, dest)] = value
    atomic_write_text(os.path.join(out_dir, "config_used.json"),
                      json.dumps(doc, indent=2) + "\n")


def _require_file(parser, path, flag):
    if path is None:
        parser.error(f"{flag} is required (directly or via --config)")
    if not os.path.exists(path):
        parser.error(f"{flag}: file not found: {path}")


def _prepare_dataset(values):
    ds = load_csv(values["dataset"], _target_column(values["target"]))
    ds = split_dataset(ds, values["train_fraction"], values["seed"])
    if values["standardize"]:
        ds = standardize_dataset(ds)
    return ds


def _train_config(values, mode):
    return TrainConfig(
        mode=mode,
        epochs=values["epochs"],
        batch_size=values["batch_size"],
        learning_rate=values["learning_rate"],
        beta1=values["beta1"],
        beta2=values["beta2"],
        epsilon=values["epsilon"],
        seed=values["seed"],
        shuffle=values["shuffle"],
    )


def cmd_train(args, parser) -> int:
    config = _load_config(args.config, parser) if args.config else None
    values = _resolve(args, _TRAIN_DEFAULTS, config)
    _require_file(parser, values["dataset"], "--dataset")
    if values["target"] is None:
        parser.error("--target is required (directly or via --config)")
    kinds = _mode_kinds(values["modes"], parser)
    etas = _float_list(values["etas"])
    hidden = _int_list(values["hidden"])
    if not etas:
        parser.error("--etas must name at least one noise level")
    if not hidden:
        parser.error("--hidden must name at least one layer width")
    if values["noise_seed"] is None:
        values["noise_seed"] = values["seed"]
    values["modes"] = kinds
    values["etas"] = etas
    values["hidden"] = hidden
    _write_config_used(values["out"], "train", values)

    ds = _prepare_dataset(values)
    modes = [RegularizationMode(kind, lam=values["lam"],
                                max_norm_cap=values["maxnorm_cap"])
             for kind in kinds]
    cfg = _train_config(values, modes[0])
    reports = run_experiment(
        cfg, ds, modes, etas, hidden=hidden,
        noise_seed=values["noise_seed"],
        noise_symmetric=values["symmetric_noise"],
        noise_scalar_u=values["scalar_noise"],
    )
    write_outputs(reports, values["out"])
    for report in reports:
        save_model(report.model,
                   os.path.join(values["out"], f"model_{report.mode.kind}.json"))
    print(table_text(reports), end="")
    return 0


def cmd_evaluate(args, parser) -> int:
    config = _load_config(args.config, parser) if args.config else None
    values = _resolve(args, _EVALUATE_DEFAULTS, config)
    _require_file(parser, values["model"], "--model")
    _require_file(parser, values["dataset"], "--dataset")
    if values["target"] is None:
        parser.error("--target is required (directly or via --config)")
    etas = _float_list(values["etas"])
    values["etas"] = etas
    _write_config_used(values["out"], "evaluate", values)

    net = load_model(values["model"])
    ds = load_csv(values["dataset"], _target_column(values["target"]))
    X, y = ds.X, ds.y
    if X.shape[1] != net.input_dim:
        raise ValueError(
            f"model expects input dim {net.input_dim}, "
            f"dataset has {X.shape[1]} features"
        )
    bounds = (X.min(axis=0), X.max(axis=0))
    if values["standardize"]:
        mu = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale == 0.0, 1.0, scale)
    else:
        mu, scale = 0.0, 1.0

    clean_mae = mae_metric(predict(net, (X - mu) / scale)[:, 0], y)
    rows = [(0.0, clean_mae)] if 0.0 not in etas else []
    for eta in etas:
        spec = NoiseSpec(eta, seed=values["noise_seed"],
                         symmetric=values["symmetric_noise"],
                         scalar_u=values["scalar_noise"])
        Xn = apply_noise(X, spec, bounds)
        rows.append((eta, mae_metric(predict(net, (Xn - mu) / scale)[:, 0], y)))
    rows.sort(key=lambda r: r[0])

    estimates = spectral_norms(net)
    norms = [est.sigma for est in estimates]
    lhat = lipschitz_upper_bound(net, estimates)

    print(f"clean MAE: {clean_mae:.6g}")
    for eta, mae in rows:
        print(f"MAE at eta={eta:g}: {mae:.6g}")
    print("layer spectral norms: " + ", ".join(f"{v:.6g}" for v in norms))
    print(f"Lipschitz bound L_hat: {lhat:.6g}")

    lines = ["eta,mae"] + [f"{eta:.6g},{mae:.6g}" for eta, mae in rows]
    atomic_write_text(os.path.join(values["out"], "evaluation.csv"),
                      "\n".join(lines) + "\n")
    doc = {
        "clean_mae": clean_mae,
        "mae_by_eta": {format(eta, "g"): mae for eta, mae in rows},
        "layer_norms": [float(v) for v in norms],
        "lipschitz_bound": float(lhat),
    }
    atomic_write_text(os.path.join(values["out"], "evaluation.json"),
                      json.dumps(doc) + "\n")
    return 0


def cmd_sweep(args, parser) -> int:
    config = _load_config(args.config, parser) if args.config else None
    values = _resolve(args, _SWEEP_DEFAULTS, config)
    _require_file(parser, values["dataset"], "--dataset")
    if values["target"] is None:
        parser.error("--target is required (directly or via --config)")
    kinds = _mode_kinds(values["modes"], parser)
    if len(kinds) != 1 or kinds[0] not in ("layer_sum", "lipschitz_product"):
        parser.error("sweep needs exactly one penalized mode "
                     "(--mode layer or --mode lipschitz)")
    lambda_grid = _float_list(values["lambda_grid"])
    seeds = _int_list(values["seeds"])
    etas = _float_list(values["etas"])
    hidden = _int_list(values["hidden"])
    if not lambda_grid:
        parser.error("--lambda-grid must name at least one value")
    if not seeds:
        parser.error("--seeds must name at least one seed")
    if values["noise_seed"] is None:
        values["noise_seed"] = values["seed"]
    values["modes"] = kinds
    values["lambda_grid"] = lambda_grid
    values["seeds"] = seeds
    values["etas"] = etas
    values["hidden"] = hidden
    _write_config_used(values["out"], "sweep", values)

    ds = _prepare_dataset(values)
    mode = RegularizationMode(kinds[0], lam=lambda_grid[0])
    cfg = _train_config(values, mode)
    result = grid_search(cfg, ds, mode, lambda_grid, seeds, eta_levels=etas,
                         hidden=hidden, noise_seed=values["noise_seed"],
                         jobs=values["jobs"])

    lines = ["lambda,seed,clean_val_mae,lhat"]
    for (lam, seed), report in result.grid.items():
        lines.append(f"{lam:.6g},{seed},{report.records[-1].val_mae[0.0]:.6g},"
                     f"{report.lipschitz_bound:.6g}")
    atomic_write_text(os.path.join(values["out"], "sweep.csv"),
                      "\n".join(lines) + "\n")
    summary = {
        "mode": kinds[0],
        "selected_lambda": result.selected_lambda,
        "selection": {format(lam, "g"): mae for lam, mae in result.selection.items()},
    }
    atomic_write_text(os.path.join(values["out"], "sweep.json"),
                      json.dumps(summary, indent=2) + "\n")
    print(f"selected lambda for {kinds[0]}: {result.selected_lambda:g}")
    for lam in lambda_grid:
        print(f"  lambda={lam:g}: mean clean val MAE {result.selection[lam]:.6g}")
    return 0


def cmd_contour(args, parser) -> int:
    config = _load_config(args.config, parser) if args.config else None
    values = _resolve(args, _CONTOUR_DEFAULTS, config)
    if not values["range"] > 0:
        parser.error("--range must be positive")
    if values["resolution"] < 2:
        parser.error("--resolution must be at least 2")
    _write_config_used(values["out"], "contour", values)
    r = float(values["range"])
    grid = contour_grid((-r, r), (-r, r), values["resolution"])
    write_contour_csv(os.path.join(values["out"], "contour.csv"), grid)
    print(f"wrote {values['resolution']}x{values['resolution']} contour grid "
          f"to {os.path.join(values['out'], 'contour.csv')}")
    return 0


def cmd_report(args, parser) -> int:
    config = _load_config(args.config, parser) if args.config else None
    values = _resolve(args, _REPORT_DEFAULTS, config)
    _require_file(parser, values["report"], "--report")
    _write_config_used(values["out"], "report", values)
    reports = load_report_json(values["report"])
    csv_text, txt_text = report_table(reports)
    atomic_write_text(os.path.join(values["out"], "table.csv"), csv_text)
    atomic_write_text(os.path.join(values["out"], "table.txt"), txt_text)
    atomic_write_text(os.path.join(values["out"], "curves.csv"), curves_csv(reports))
    print(txt_text, end="")
    return 0


def _add_common_train_flags(sub):
    sub.add_argument("--dataset", help="CSV file with one numeric target column")
    sub.add_argument("--target", help="target column name or index")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--beta1", type=float)
    sub.add_argument("--beta2", type=float)
    sub.add_argument("--epsilon", type=float)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--noise-seed", dest="noise_seed", type=int)
    sub.add_argument("--train-fraction", dest="train_fraction", type=float)
    sub.add_argument("--etas", help="comma-separated noise levels")
    sub.add_argument("--hidden", help="comma-separated hidden layer widths")
    sub.add_argument("--shuffle", action=argparse.BooleanOptionalAction, default=None)
    sub.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                     default=None, help="z-score features with training stats")
    sub.add_argument("--symmetric-noise", dest="symmetric_noise",
                     action=argparse.BooleanOptionalAction, default=None,
                     help="draw noise from U([-1,1]) instead of U([0,1])")
    sub.add_argument("--scalar-noise", dest="scalar_noise",
                     action=argparse.BooleanOptionalAction, default=None,
                     help="one uniform draw per sample instead of per feature")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipreg",
        description="Train and evaluate small ReLU networks under "
                    "spectral-norm, Lipschitz-product, and max-norm "
                    "regularization.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="train one or more formulations")
    _add_common_train_flags(train)
    train.add_argument("--mode", dest="modes",
                       help="comma list of none,layer,lipschitz,maxnorm or 'all'")
    train.add_argument("--lambda", dest="lam", type=float,
                       help="regularization weight for penalized modes")
    train.add_argument("--maxnorm-cap", dest="maxnorm_cap", type=float)
    train.add_argument("--out")
    train.add_argument("--config", help="load defaults from a config_used.json")
    train.set_defaults(func=cmd_train)

    evaluate = subs.add_parser("evaluate", help="noise-sweep a saved model")
    evaluate.add_argument("--model", help="model JSON written by train")
    evaluate.add_argument("--dataset")
    evaluate.add_argument("--target")
    evaluate.add_argument("--etas")
    evaluate.add_argument("--noise-seed", dest="noise_seed", type=int)
    evaluate.add_argument("--standardize", action=argparse.BooleanOptionalAction,
                          default=None)
    evaluate.add_argument("--symmetric-noise", dest="symmetric_noise",
                          action=argparse.BooleanOptionalAction, default=None)
    evaluate.add_argument("--scalar-noise", dest="scalar_noise",
                          action=argparse.BooleanOptionalAction, default=None)
    evaluate.add_argument("--out")
    evaluate.add_argument("--config")
    evaluate.set_defaults(func=cmd_evaluate)

    sweep = subs.add_parser("sweep", help="grid-search the regularization weight")
    _add_common_train_flags(sweep)
    sweep.add_argument("--mode", dest="modes", help="layer or lipschitz")
    sweep.add_argument("--lambda-grid", dest="lambda_grid",
                       help="comma-separated lambda values")
    sweep.add_argument("--seeds", help="comma-separated training seeds")
    sweep.add_argument("--jobs", type=int, help="parallel grid cells")
    sweep.add_argument("--out")
    sweep.add_argument("--config")
    sweep.set_defaults(func=cmd_sweep)

    contour = subs.add_parser("contour", help="emit the |W1|*|W2| grid")
    contour.add_argument("--range", type=float,
                         help="half-width R of the [-R, R]^2 grid")
    contour.add_argument("--resolution", type=int)
    contour.add_argument("--out")
    contour.add_argument("--config")
    contour.set_defaults(func=cmd_contour)

    report = subs.add_parser("report", help="re-render outputs from report.json")
    report.add_argument("--report", help="path to a report.json")
    report.add_argument("--out")
    report.add_argument("--config")
    report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
