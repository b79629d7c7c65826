"""Experiment orchestration.

Trains the four formulations under a paired protocol (shared split,
initialization, and frozen noise realizations), sweeps noise levels on the
held-out data each epoch, grid-searches the regularization weight, and
renders the outputs: per-epoch curves, the norms table, the 2-d
product-bound contour grid, and a full JSON report.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, NoiseSpec
from .linalg import SpectralTracker
from .network import (
    Network,
    init_network,
    lipschitz_upper_bound,
    mae_metric,
    mse_loss,
    network_from_dict,
    network_to_dict,
    predict,
    spectral_norms,
)
from .optimizer import AdamState, TrainConfig, train_epoch
from .regularization import RegularizationMode

REPORT_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (20, 20, 20)
DEFAULT_ETAS = (0.0, 0.2, 0.4, 0.6)
DEFAULT_LAMBDA_GRID = (1e-2, 1e-1, 1.0, 10.0, 100.0)


@dataclass
class EpochRecord:
    """Metrics recorded after one training epoch."""

    epoch: int
    train_loss: float
    train_mae: float
    val_mae: dict  # eta -> MAE on the frozen noisy test set


@dataclass
class TrainReport:
    """Everything one training run produced."""

    mode: RegularizationMode
    records: list
    layer_norms: list
    lipschitz_bound: float
    config: dict
    wall_time_s: float
    model: Network


@dataclass
class SweepResult:
    """Grid-search outcome over (lambda, seed) cells for one mode."""

    grid: dict  # (lambda, seed) -> TrainReport
    selected_lambda: float
    selection: dict  # lambda -> mean clean validation MAE over seeds


def _fmt(x) -> str:
    return format(float(x), ".6g")


def atomic_write_text(path, text: str):
    """Write a file via a temp-then-rename so readers never see partials."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def train_model(dataset: Dataset, cfg: TrainConfig, eta_levels=(),
                hidden=DEFAULT_HIDDEN, noise_seed=None,
                noise_symmetric: bool = False,
                noise_scalar_u: bool = False) -> TrainReport:
    """Train one network under ``cfg`` and record the full report.

    Noisy validation inputs are frozen before the first epoch, one
    realization per eta level (all levels share the same underlying uniform
    draw, scaled by eta, so the per-epoch curves differ only through the
    model). Everything random is derived from ``cfg.seed``; two calls with
    the same arguments produce bit-identical parameters.
    """
    dataset._require_split()
    eta_levels = [float(e) for e in eta_levels]
    if noise_seed is None:
        noise_seed = cfg.seed

    X_train = dataset.train_inputs()
    y_train = dataset.train_targets()
    y_test = dataset.test_targets()
    val_sets = {
        eta: dataset.noisy_test_inputs(
            NoiseSpec(eta, seed=noise_seed, symmetric=noise_symmetric,
                      scalar_u=noise_scalar_u))
        for eta in eta_levels
    }

    sizes = [dataset.n_features, *hidden, 1]
    init_ss, shuffle_ss, power_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    net = init_network(sizes, np.random.default_rng(init_ss))
    state = AdamState.for_network(net)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    tracker = SpectralTracker(len(net.layers), tol=cfg.power_tol,
                              max_iter=cfg.power_max_iter,
                              rng=np.random.default_rng(power_ss))

    t0 = time.perf_counter()
    records = []
    for epoch in range(1, cfg.epochs + 1):
        train_epoch(net, X_train, y_train, state, cfg, shuffle_rng, tracker)
        # post-epoch metrics over the full slices, so a later standalone
        # evaluation of the saved model reproduces the last record exactly
        pred_train = predict(net, X_train)[:, 0]
        val_mae = {
            eta: mae_metric(predict(net, Xv)[:, 0], y_test)
            for eta, Xv in val_sets.items()
        }
        records.append(EpochRecord(
            epoch,
            mse_loss(pred_train, y_train),
            mae_metric(pred_train, y_train),
            val_mae,
        ))
    wall = time.perf_counter() - t0

    estimates = spectral_norms(net)
    norms = [float(e.sigma) for e in estimates]
    config = {
        "mode": cfg.mode.kind,
        "lambda": cfg.mode.lam,
        "max_norm_cap": cfg.mode.max_norm_cap,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "shuffle": cfg.shuffle,
        "power_tol": cfg.power_tol,
        "power_max_iter": cfg.power_max_iter,
        "hidden": [int(h) for h in hidden],
        "eta_levels": eta_levels,
        "noise_seed": noise_seed,
        "noise_symmetric": noise_symmetric,
        "noise_scalar_u": noise_scalar_u,
        "standardized": dataset.standardized,
        "n_train": int(len(dataset.train_idx)),
        "n_test": int(len(dataset.test_idx)),
        "n_features": dataset.n_features,
    }
    return TrainReport(
        mode=cfg.mode,
        records=records,
        layer_norms=norms,
        lipschitz_bound=lipschitz_upper_bound(net, estimates),
        config=config,
        wall_time_s=wall,
        model=net,
    )


def run_experiment(cfg: TrainConfig, dataset: Dataset, modes, eta_levels,
                   hidden=DEFAULT_HIDDEN, noise_seed=None,
                   noise_symmetric: bool = False,
                   noise_scalar_u: bool = False):
    """Train every mode under identical conditions (paired comparison).

    All runs share the data split, the initialization seed, and the frozen
    per-eta noise realizations; only the regularization differs. Returns
    one TrainReport per mode, in input order.
    """
    eta_levels = [float(e) for e in eta_levels]
    if not eta_levels:
        raise ValueError("eta_levels must be non-empty")
    if noise_seed is None:
        noise_seed = cfg.seed
    return [
        train_model(dataset, replace(cfg, mode=mode), eta_levels,
                    hidden=hidden, noise_seed=noise_seed,
                    noise_symmetric=noise_symmetric,
                    noise_scalar_u=noise_scalar_u)
        for mode in modes
    ]


def _grid_cell(args):
    dataset, cfg, eta_levels, hidden, noise_seed = args
    return train_model(dataset, cfg, eta_levels, hidden=hidden,
                       noise_seed=noise_seed)


def grid_search(cfg: TrainConfig, dataset: Dataset, mode: RegularizationMode,
                lambda_grid, seeds, eta_levels=(0.0,), hidden=DEFAULT_HIDDEN,
                noise_seed=None, jobs: int = 1) -> SweepResult:
    """Train every (lambda, seed) cell and select the best lambda.

    Selection minimizes the mean clean-validation MAE (final epoch, eta=0)
    across seeds; ties go to the first grid entry. Cells are independent,
    so ``jobs > 1`` runs them in a process pool.
    """
    lambda_grid = [float(l) for l in lambda_grid]
    if not lambda_grid:
        raise ValueError("lambda_grid must be non-empty")
    if not mode.penalized:
        raise ValueError("grid search needs a penalized mode "
                         "(layer_sum or lipschitz_product)")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("seeds must be non-empty")
    eta_levels = [float(e) for e in eta_levels]
    if 0.0 not in eta_levels:
        eta_levels = [0.0] + eta_levels

    cells = [(lam, seed) for lam in lambda_grid for seed in seeds]
    args = [
        (dataset, replace(cfg, mode=replace(mode, lam=lam), seed=seed),
         eta_levels, hidden, noise_seed)
        for lam, seed in cells
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_grid_cell, args))
    else:
        reports = [_grid_cell(a) for a in args]

    grid = dict(zip(cells, reports))
    selection = {
        lam: float(np.mean([grid[(lam, s)].records[-1].val_mae[0.0] for s in seeds]))
        for lam in lambda_grid
    }
    selected = min(lambda_grid, key=lambda lam: selection[lam])
    return SweepResult(grid=grid, selected_lambda=selected, selection=selection)


# ---------------------------------------------------------------------------
# the 2-d coupling picture: contours of |W1| * |W2|


def classify_point(w1: float, w2: float):
    """Product bound and region membership for the two-weight toy network.

    Returns (lhat, in_unit_square, in_product_region) where the regions are
    |W1| <= 1 and |W2| <= 1, respectively |W1| * |W2| <= 1.
    """
    lhat = abs(float(w1)) * abs(float(w2))
    in_square = abs(float(w1)) <= 1.0 and abs(float(w2)) <= 1.0
    return lhat, in_square, lhat <= 1.0


@dataclass
class ContourGrid:
    """Evaluation of the product bound over a rectangular weight grid."""

    w1: np.ndarray  # axis values, shape (resolution,)
    w2: np.ndarray
    lhat: np.ndarray  # (len(w1), len(w2))
    in_square: np.ndarray  # bool, same shape
    in_product: np.ndarray

    def rows(self):
        """Yield (w1, w2, lhat, in_square, in_product) in row-major order."""
        for i, a in enumerate(self.w1):
            for j, b in enumerate(self.w2):
                yield (float(a), float(b), float(self.lhat[i, j]),
                       bool(self.in_square[i, j]), bool(self.in_product[i, j]))


def contour_grid(w1_range, w2_range, resolution: int) -> ContourGrid:
    """Evaluate |W1| * |W2| and both feasible regions on a regular grid."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    w1 = np.linspace(float(w1_range[0]), float(w1_range[1]), resolution)
    w2 = np.linspace(float(w2_range[0]), float(w2_range[1]), resolution)
    A1 = np.abs(w1)[:, None]
    A2 = np.abs(w2)[None, :]
    lhat = A1 * A2
    in_square = (A1 <= 1.0) & (A2 <= 1.0)
    return ContourGrid(w1, w2, lhat, in_square, lhat <= 1.0)


# ---------------------------------------------------------------------------
# renderings


def _table_cells(reports):
    n_layers = len(reports[0].layer_norms)
    if any(len(r.layer_norms) != n_layers for r in reports):
        raise ValueError("reports have differing layer counts")
    header = ["quantity"] + [r.mode.label for r in reports]
    rows = []
    for l in range(n_layers):
        rows.append([f"||W{l + 1}||"] + [_fmt(r.layer_norms[l]) for r in reports])
    rows.append(["L_hat"] + [_fmt(r.lipschitz_bound) for r in reports])
    return header, rows


def table_csv(reports) -> str:
    """Norms table (one column per mode) as CSV text."""
    header, rows = _table_cells(reports)
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(row) + "\n")
    return out.getvalue()


def table_text(reports) -> str:
    """Norms table as aligned plain text."""
    header, rows = _table_cells(reports)
    widths = [max(len(row[c]) for row in [header] + rows) for c in range(len(header))]
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def report_table(reports):
    """Both renderings of the norms table: ``(csv_text, aligned_text)``."""
    if not reports:
        raise ValueError("need at least one report")
    return table_csv(reports), table_text(reports)


def _eta_columns(reports):
    etas = sorted(reports[0].records[0].val_mae)
    for r in reports:
        for rec in r.records:
            if sorted(rec.val_mae) != etas:
                raise ValueError("reports disagree on eta levels")
    return etas


def curves_csv(reports) -> str:
    """Per-epoch training and noisy-validation curves as CSV text."""
    if not reports:
        raise ValueError("need at least one report")
    etas = _eta_columns(reports)
    out = io.StringIO()
    cols = ["epoch", "mode", "train_loss", "train_mae"]
    cols += [f"mae_eta_{format(e, 'g')}" for e in etas]
    out.write(",".join(cols) + "\n")
    for r in reports:
        for rec in r.records:
            row = [str(rec.epoch), r.mode.kind, _fmt(rec.train_loss), _fmt(rec.train_mae)]
            row += [_fmt(rec.val_mae[e]) for e in etas]
            out.write(",".join(row) + "\n")
    return out.getvalue()


def contour_csv(grid: ContourGrid) -> str:
    """Contour grid as CSV text with 0/1 region flags."""
    out = io.StringIO()
    out.write("W1,W2,lhat,in_square,in_product\n")
    for w1, w2, lhat, sq, pr in grid.rows():
        out.write(f"{_fmt(w1)},{_fmt(w2)},{_fmt(lhat)},{int(sq)},{int(pr)}\n")
    return out.getvalue()


def report_to_dict(report: TrainReport) -> dict:
    return {
        "mode": {
            "kind": report.mode.kind,
            "lambda": report.mode.lam,
            "max_norm_cap": report.mode.max_norm_cap,
        },
        "config": report.config,
        "wall_time_s": report.wall_time_s,
        "layer_norms": [float(v) for v in report.layer_norms],
        "lipschitz_bound": float(report.lipschitz_bound),
        "epochs": [
            {
                "epoch": rec.epoch,
                "train_loss": rec.train_loss,
                "train_mae": rec.train_mae,
                "val_mae": {format(e, "g"): v for e, v in sorted(rec.val_mae.items())},
            }
            for rec in report.records
        ],
        "model": network_to_dict(report.model),
    }


def report_from_dict(doc: dict) -> TrainReport:
    mode = RegularizationMode(doc["mode"]["kind"], lam=doc["mode"]["lambda"],
                              max_norm_cap=doc["mode"]["max_norm_cap"])
    records = [
        EpochRecord(
            entry["epoch"], entry["train_loss"], entry["train_mae"],
            {float(k): v for k, v in entry["val_mae"].items()},
        )
        for entry in doc["epochs"]
    ]
    return TrainReport(
        mode=mode,
        records=records,
        layer_norms=list(doc["layer_norms"]),
        lipschitz_bound=doc["lipschitz_bound"],
        config=dict(doc["config"]),
        wall_time_s=doc["wall_time_s"],
        model=network_from_dict(doc["model"], source="report model"),
    )


def reports_json(reports) -> str:
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "reports": [report_to_dict(r) for r in reports],
    }
    return json.dumps(doc, allow_nan=False)


def load_report_json(path):
    """Read back a report file written by :func:`write_outputs`."""
    with open(path, "r") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != REPORT_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported report format_version")
    return [report_from_dict(entry) for entry in doc["reports"]]


def write_outputs(reports, out_dir):
    """Emit curves.csv, table.csv, table.txt, and report.json under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    csv_text, txt_text = report_table(reports)
    atomic_write_text(os.path.join(out_dir, "curves.csv"), curves_csv(reports))
    atomic_write_text(os.path.join(out_dir, "table.csv"), csv_text)
    atomic_write_text(os.path.join(out_dir, "table.txt"), txt_text)
    atomic_write_text(os.path.join(out_dir, "report.json"), reports_json(reports))


def write_contour_csv(path, grid: ContourGrid):
    atomic_write_text(path, contour_csv(grid))
