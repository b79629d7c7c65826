"""Regression dataset handling.

CSV ingestion, seeded train/test splitting, per-feature range statistics,
optional standardization, and the bounded uniform noise model used for
robustness evaluation: delta = eta * (x_max - x_min) * u with u drawn
uniformly from [0, 1].

Noise is always injected in the original feature space; standardization
(when enabled) is applied afterwards, mirroring physically perturbed
inputs. Datasets therefore keep their features in original scale and
expose model-space views through ``train_inputs``/``test_inputs``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np


class CsvFormatError(ValueError):
    """Raised for malformed CSV content or a bad target-column selection."""


@dataclass(frozen=True)
class NoiseSpec:
    """Bounded uniform input noise at level ``eta``.

    Per feature j the perturbation is eta * (max_j - min_j) * u with
    u ~ U([0, 1]) (one-sided; ``symmetric`` switches to U([-1, 1])).
    ``scalar_u`` draws a single u per sample instead of one per feature.
    """

    eta: float
    seed: int = 0
    symmetric: bool = False
    scalar_u: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.eta) and 0.0 <= self.eta <= 1.0):
            raise ValueError("eta must lie in [0, 1]")


@dataclass
class Dataset:
    """Feature matrix, targets, split indices, and training statistics.

    ``X`` stays in original feature scale; ``feature_min``/``feature_max``
    are per-feature bounds over the training portion only (no test-set
    leakage), and ``mu``/``scale`` hold the training-set standardization
    statistics when ``standardized`` is set.
    """

    X: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    feature_min: np.ndarray | None = None
    feature_max: np.ndarray | None = None
    mu: np.ndarray | None = None
    scale: np.ndarray | None = None
    standardized: bool = False

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d matrix of samples by features")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y must hold one target per row of X")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def _require_split(self):
        if self.train_idx is None or self.test_idx is None:
            raise ValueError("dataset has no split yet; call split() first")

    def transform(self, A: np.ndarray) -> np.ndarray:
        """Map original-scale features into model space."""
        if self.standardized:
            return (A - self.mu) / self.scale
        return np.array(A, dtype=float, copy=True)

    def train_inputs(self) -> np.ndarray:
        self._require_split()
        return self.transform(self.X[self.train_idx])

    def test_inputs(self) -> np.ndarray:
        self._require_split()
        return self.transform(self.X[self.test_idx])

    def train_targets(self) -> np.ndarray:
        self._require_split()
        return self.y[self.train_idx].copy()

    def test_targets(self) -> np.ndarray:
        self._require_split()
        return self.y[self.test_idx].copy()

    def noisy_test_inputs(self, spec: NoiseSpec) -> np.ndarray:
        """Model-space test inputs perturbed in original scale first."""
        self._require_split()
        if self.feature_min is None or self.feature_max is None:
            raise ValueError("dataset has no feature bounds; use split() "
                             "or compute feature_bounds() first")
        noisy = apply_noise(self.X[self.test_idx], spec,
                            (self.feature_min, self.feature_max))
        return self.transform(noisy)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path, target_column) -> Dataset:
    """Read a numeric CSV into an unsplit Dataset.

    An optional single header row is auto-detected (any non-numeric cell in
    the first row). ``target_column`` selects the target by header name or
    by integer column index; all other columns become features in file
    order.
    """
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if not rows:
        raise CsvFormatError(f"{path}: file holds no data")

    names = None
    data_rows = rows
    first_line = 1
    if any(not _looks_numeric(cell) for cell in rows[0]):
        names = [cell.strip() for cell in rows[0]]
        data_rows = rows[1:]
        first_line = 2
    if len(data_rows) < 2:
        raise CsvFormatError(f"{path}: need at least 2 data rows")

    n_cols = len(data_rows[0])
    values = np.empty((len(data_rows), n_cols))
    for r, row in enumerate(data_rows):
        if len(row) != n_cols:
            raise CsvFormatError(
                f"{path}: row {first_line + r} has {len(row)} fields, expected {n_cols}"
            )
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path}: row {first_line + r}, column {c + 1}: "
                    f"{cell.strip()!r} is not numeric"
                ) from None
    if not np.isfinite(values).all():
        raise CsvFormatError(f"{path}: non-finite values are not allowed")

    if isinstance(target_column, (int, np.integer)) and not isinstance(target_column, bool):
        t = int(target_column)
        if t < -n_cols or t >= n_cols:
            raise CsvFormatError(
                f"{path}: target column index {t} out of range for {n_cols} columns"
            )
        t %= n_cols
    else:
        if names is None:
            raise CsvFormatError(
                f"{path}: no header row, select the target column by index"
            )
        if target_column not in names:
            raise CsvFormatError(
                f"{path}: target column {target_column!r} not found; "
                f"available: {', '.join(names)}"
            )
        t = names.index(target_column)

    X = np.delete(values, t, axis=1)
    y = values[:, t]
    if X.shape[1] == 0:
        raise CsvFormatError(f"{path}: no feature columns besides the target")
    return Dataset(X, y)


def split(ds: Dataset, train_fraction: float, seed: int) -> Dataset:
    """Assign a seeded train/test split and record training feature bounds.

    The training portion holds round(train_fraction * n) samples.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = ds.n_samples
    k = int(math.floor(train_fraction * n + 0.5))
    if k < 1 or k >= n:
        raise ValueError(
            f"train_fraction {train_fraction} leaves an empty portion for n={n}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    out = replace(ds, train_idx=train_idx, test_idx=test_idx)
    out.feature_min, out.feature_max = feature_bounds(out)
    return out


def feature_bounds(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature min/max over the training portion only."""
    ds._require_split()
    Xtr = ds.X[ds.train_idx]
    return Xtr.min(axis=0), Xtr.max(axis=0)


def standardize(ds: Dataset) -> Dataset:
    """Z-score features with training-portion statistics.

    Zero-variance features are centered but not divided (a warning is
    emitted). The original-scale features and the (mu, scale) pair are
    retained, so noise can still be injected in original scale.
    """
    ds._require_split()
    Xtr = ds.X[ds.train_idx]
    mu = Xtr.mean(axis=0)
    scale = Xtr.std(axis=0)
    flat = scale == 0.0
    if flat.any():
        warnings.warn(
            f"features {np.flatnonzero(flat).tolist()} have zero variance on "
            f"the training portion; centering only",
            stacklevel=2,
        )
        scale = scale.copy()
        scale[flat] = 1.0
    return replace(ds, mu=mu, scale=scale, standardized=True)


def apply_noise(x, spec: NoiseSpec, bounds, rng=None) -> np.ndarray:
    """Perturb inputs with bounded uniform noise in original feature space.

    ``x`` may be one sample (1-d) or a matrix of samples (2-d); ``bounds``
    is the (feature_min, feature_max) pair. Each call is reproducible from
    ``spec.seed`` unless an explicit generator is supplied.
    """
    x = np.asarray(x, dtype=float)
    fmin = np.asarray(bounds[0], dtype=float)
    fmax = np.asarray(bounds[1], dtype=float)
    if fmin.shape != fmax.shape or fmin.ndim != 1:
        raise ValueError("bounds must be a pair of equal-length vectors")
    if np.any(fmin > fmax):
        raise ValueError("feature_min must not exceed feature_max")
    if x.ndim not in (1, 2) or x.shape[-1] != fmin.shape[0]:
        raise ValueError(
            f"inputs with {x.shape[-1] if x.ndim else 0} features do not match "
            f"bounds of dim {fmin.shape[0]}"
        )
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.scalar_u:
        u_shape = x.shape[:-1] + (1,) if x.ndim == 2 else ()
    else:
        u_shape = x.shape
    u = rng.uniform(-1.0, 1.0, size=u_shape) if spec.symmetric else rng.random(u_shape)
    return x + spec.eta * (fmax - fmin) * u


def make_synthetic_regression(n_samples: int = 506, n_features: int = 13,
                              seed: int = 0, noise_std: float = 1.0):
    """Deterministic synthetic regression data at housing-dataset scale.

    Features span several orders of magnitude (like raw tabular survey
    data) and the target mixes smooth nonlinear effects of the latent
    factors with Gaussian observation noise. Returns ``(X, y)``.
    """
    if n_features < 8:
        raise ValueError("need at least 8 features")
    rng = np.random.default_rng(seed)
    z = rng.random((n_samples, n_features))
    scales = 10.0 ** rng.uniform(-1.0, 2.5, size=n_features)
    offsets = rng.uniform(-2.0, 2.0, size=n_features) * scales
    X = z * scales + offsets
    y = (
        22.0
        + 10.0 * z[:, 0] * z[:, 1]
        - 8.0 * z[:, 2]
        + 5.0 * np.sin(3.0 * np.pi * z[:, 3])
        + 4.0 * (z[:, 4] - 0.5) ** 2
        + 3.0 * z[:, 5]
        - 2.0 * z[:, 6] * z[:, 2]
        + 2.0 * z[:, 7]
        + noise_std * rng.standard_normal(n_samples)
    )
    return X, y


def save_csv(path, X, y, feature_names=None, target_name: str = "target"):
    """Write features and targets as a headed CSV (full float precision)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with one target per row")
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise ValueError("one feature name per column required")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(feature_names) + [target_name])
        for row, target in zip(X, y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(target))])
