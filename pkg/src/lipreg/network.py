"""Feed-forward ReLU networks built on plain numpy arrays.

Covers forward evaluation (single sample and batched), mean-squared loss
and mean-absolute metrics, exact reverse-mode gradients, the layer-norm
product bound on the network Lipschitz constant, and JSON persistence.

Evaluation functions never mutate the network, so concurrent forward and
backward passes over a shared model are safe; parameter updates mutate
layer arrays in place and need exclusive access.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .linalg import power_iteration, DEFAULT_TOL, DEFAULT_MAX_ITER

MODEL_FORMAT_VERSION = 1

# both activations are 1-Lipschitz, which keeps the product bound valid
ACTIVATIONS = ("relu", "linear")


class ModelLoadError(ValueError):
    """Raised when a model file cannot be parsed or fails validation."""


@dataclass
class Layer:
    """One affine layer ``x -> f(W x + b)`` with ``W`` of shape (out, in)."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.W.ndim != 2 or self.b.ndim != 1:
            raise ValueError("layer weights must be a matrix and biases a vector")
        if self.W.shape[0] != self.b.shape[0]:
            raise ValueError(
                f"bias dim {self.b.shape[0]} does not match weight rows {self.W.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]


@dataclass
class Network:
    """Ordered layers forming the mapping input -> output."""

    layers: list
    input_dim: int

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        prev = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != prev:
                raise ValueError(
                    f"layer {i} expects input dim {layer.in_dim}, "
                    f"but the previous width is {prev}"
                )
            prev = layer.out_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def weights(self):
        return [layer.W for layer in self.layers]


@dataclass
class ForwardTrace:
    """Cache of one forward pass, kept around for backpropagation."""

    input: np.ndarray
    pre_activations: list
    activations: list

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class Gradients:
    """Per-layer weight and bias gradients, shape-congruent with a Network."""

    dW: list
    db: list

    @classmethod
    def zeros_like(cls, net: Network) -> "Gradients":
        return cls(
            [np.zeros_like(layer.W) for layer in net.layers],
            [np.zeros_like(layer.b) for layer in net.layers],
        )


def init_network(sizes, rng, hidden_activation: str = "relu") -> Network:
    """Build a network with the given layer widths.

    ``sizes`` lists the input width followed by every layer's output width.
    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero;
    hidden layers use ``hidden_activation`` and the output layer is linear
    (regression targets can be negative, and both choices are 1-Lipschitz so
    the norm-product bound is unaffected).
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output width")
    if any(s < 1 for s in sizes):
        raise ValueError("layer widths must be positive")
    layers = []
    for l in range(1, len(sizes)):
        fan_in, fan_out = sizes[l - 1], sizes[l]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        activation = "linear" if l == len(sizes) - 1 else hidden_activation
        layers.append(Layer(W, b, activation))
    return Network(layers, input_dim=sizes[0])


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        # subgradient at exactly 0 is taken as 0
        return (z > 0.0).astype(float)
    return np.ones_like(z)


def forward(net: Network, x) -> ForwardTrace:
    """Propagate one input vector through the network, caching every layer."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d input vector, got shape {x.shape}")
    if x.shape[0] != net.input_dim:
        raise ValueError(
            f"input dim {x.shape[0]} does not match network input dim {net.input_dim}"
        )
    pre = []
    act = []
    cur = x
    for layer in net.layers:
        z = layer.W @ cur + layer.b
        cur = _activate(z, layer.activation)
        pre.append(z)
        act.append(cur)
    return ForwardTrace(x, pre, act)


def predict(net: Network, X) -> np.ndarray:
    """Network outputs for a batch ``X`` of shape (n, input_dim).

    A single 1-d input is also accepted and yields the 1-d output vector.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return forward(net, X).output
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(
            f"expected inputs of shape (n, {net.input_dim}), got {X.shape}"
        )
    cur = X
    for layer in net.layers:
        cur = _activate(cur @ layer.W.T + layer.b, layer.activation)
    return cur


def mse_loss(pred, target) -> float:
    """Mean squared difference between two equally shaped arrays."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("cannot average over an empty array")
    return float(np.mean((pred - target) ** 2))


def mae_metric(pred, target) -> float:
    """Mean absolute difference between two equally shaped arrays."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("cannot average over an empty array")
    return float(np.mean(np.abs(pred - target)))


def _check_trace(net: Network, trace: ForwardTrace):
    if len(trace.pre_activations) != len(net.layers) or len(trace.activations) != len(net.layers):
        raise ValueError("trace does not match the network's layer count")
    if trace.input.shape[0] != net.input_dim:
        raise ValueError("trace input dim does not match the network")
    for i, layer in enumerate(net.layers):
        if trace.pre_activations[i].shape[0] != layer.out_dim:
            raise ValueError(f"trace layer {i} has stale shape")


def backward(net: Network, trace: ForwardTrace, target) -> Gradients:
    """Exact gradients of ``mse_loss(output, target)`` for every W and b.

    ``trace`` must come from :func:`forward` on this network.
    """
    _check_trace(net, trace)
    target = np.asarray(target, dtype=float)
    out = trace.output
    if target.shape != out.shape:
        raise ValueError(
            f"target shape {target.shape} does not match output shape {out.shape}"
        )
    n_layers = len(net.layers)
    dW = [None] * n_layers
    db = [None] * n_layers
    grad_x = 2.0 * (out - target) / out.shape[0]
    for l in range(n_layers - 1, -1, -1):
        layer = net.layers[l]
        delta = grad_x * _activation_grad(trace.pre_activations[l], layer.activation)
        x_prev = trace.activations[l - 1] if l > 0 else trace.input
        dW[l] = np.outer(delta, x_prev)
        db[l] = delta.copy()
        if l > 0:
            grad_x = layer.W.T @ delta
    return Gradients(dW, db)


def batch_gradients(net: Network, X, y):
    """Mean data-loss gradients over a batch, plus the batch loss and MAE.

    Computes the gradient of ``mean_i mse_loss(g(x_i), y_i)`` in one batched
    pass; equals the average of per-sample :func:`backward` results. Returns
    ``(Gradients, loss, mae)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(
            f"expected inputs of shape (n, {net.input_dim}), got {X.shape}"
        )
    if y.ndim == 1:
        if net.output_dim != 1:
            raise ValueError("1-d targets require a single-output network")
        Y = y[:, None]
    else:
        Y = y
    if Y.shape != (X.shape[0], net.output_dim):
        raise ValueError(
            f"targets of shape {y.shape} do not match {X.shape[0]} samples "
            f"with output dim {net.output_dim}"
        )

    n = X.shape[0]
    pre = []
    act = []
    cur = X
    for layer in net.layers:
        z = cur @ layer.W.T + layer.b
        cur = _activate(z, layer.activation)
        pre.append(z)
        act.append(cur)
    out = act[-1]

    diff = out - Y
    loss = float(np.mean(diff * diff))
    mae = float(np.mean(np.abs(diff)))

    n_layers = len(net.layers)
    dW = [None] * n_layers
    db = [None] * n_layers
    grad = 2.0 * diff / (n * net.output_dim)
    for l in range(n_layers - 1, -1, -1):
        layer = net.layers[l]
        delta = grad * _activation_grad(pre[l], layer.activation)
        x_prev = act[l - 1] if l > 0 else X
        dW[l] = delta.T @ x_prev
        db[l] = delta.sum(axis=0)
        if l > 0:
            grad = delta @ layer.W
    return Gradients(dW, db), loss, mae


def spectral_norms(net: Network, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, rng=None):
    """Fresh converged spectral estimates, one per layer."""
    if rng is None:
        rng = np.random.default_rng(0)
    return [power_iteration(layer.W, tol=tol, max_iter=max_iter, rng=rng)
            for layer in net.layers]


def lipschitz_upper_bound(net: Network, estimates) -> float:
    """Product of per-layer spectral norms.

    With 1-Lipschitz activations (ReLU, linear) this bounds how much the
    network can expand the distance between any two inputs.
    """
    estimates = list(estimates)
    if len(estimates) != len(net.layers):
        raise ValueError(
            f"need one estimate per layer: got {len(estimates)} for "
            f"{len(net.layers)} layers"
        )
    bound = 1.0
    for est in estimates:
        bound *= float(est.sigma)
    return bound


def network_to_dict(net: Network) -> dict:
    """JSON-ready description of a network (row-major weights)."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "input_dim": net.input_dim,
        "layers": [
            {
                "rows": layer.out_dim,
                "cols": layer.in_dim,
                "activation": layer.activation,
                "W": [float(v) for v in layer.W.ravel()],
                "b": [float(v) for v in layer.b],
            }
            for layer in net.layers
        ],
    }


def network_from_dict(doc, source: str = "model") -> Network:
    """Validate and rebuild a network from its JSON description."""
    if not isinstance(doc, dict):
        raise ModelLoadError(f"{source}: expected a JSON object at the top level")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelLoadError(
            f"{source}: unsupported format_version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    input_dim = doc.get("input_dim")
    if not isinstance(input_dim, int) or input_dim < 1:
        raise ModelLoadError(f"{source}: input_dim must be a positive integer")
    spec = doc.get("layers")
    if not isinstance(spec, list) or not spec:
        raise ModelLoadError(f"{source}: layers must be a non-empty list")

    layers = []
    for i, entry in enumerate(spec):
        where = f"{source}: layer {i}"
        if not isinstance(entry, dict):
            raise ModelLoadError(f"{where}: expected an object")
        rows = entry.get("rows")
        cols = entry.get("cols")
        if not isinstance(rows, int) or not isinstance(cols, int) or rows < 1 or cols < 1:
            raise ModelLoadError(f"{where}: rows and cols must be positive integers")
        activation = entry.get("activation")
        if activation not in ACTIVATIONS:
            raise ModelLoadError(f"{where}: unknown activation {activation!r}")
        w_list = entry.get("W")
        b_list = entry.get("b")
        if not isinstance(w_list, list) or len(w_list) != rows * cols:
            raise ModelLoadError(
                f"{where}: W must hold rows*cols = {rows * cols} numbers"
            )
        if not isinstance(b_list, list) or len(b_list) != rows:
            raise ModelLoadError(f"{where}: b must hold rows = {rows} numbers")
        try:
            W = np.asarray(w_list, dtype=float).reshape(rows, cols)
            b = np.asarray(b_list, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelLoadError(f"{where}: non-numeric entry ({exc})") from exc
        if not np.isfinite(W).all() or not np.isfinite(b).all():
            raise ModelLoadError(f"{where}: parameters must be finite")
        layers.append(Layer(W, b, activation))

    try:
        return Network(layers, input_dim=input_dim)
    except ValueError as exc:
        raise ModelLoadError(f"{source}: inconsistent layer shapes: {exc}") from exc


def save_model(net: Network, path):
    """Write the network as JSON with full round-trip precision (atomic)."""
    doc = network_to_dict(net)
    text = json.dumps(doc, allow_nan=False)
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


def load_model(path) -> Network:
    """Parse and validate a model file written by :func:`save_model`."""
    path = os.fspath(path)
    with open(path, "r") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelLoadError(
                f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
    return network_from_dict(doc, source=path)
