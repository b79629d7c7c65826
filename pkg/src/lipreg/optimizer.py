"""Adam updates and the minibatch epoch loop.

The epoch loop combines the mean data-loss gradient with the penalty
gradient of the active formulation: penalized modes optimize
(1/lambda) * loss + penalty, max-norm mode projects weight rows after
every step, and the unregularized mode is plain Adam on the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SpectralTracker
from .network import Gradients, Network, batch_gradients
from .regularization import RegularizationMode, maxnorm_project, penalty_gradient, penalty_value


@dataclass
class TrainConfig:
    """Hyperparameters of one training run.

    ``power_tol``/``power_max_iter`` budget the per-minibatch spectral
    refresh; warm starts carry convergence across steps, so a modest budget
    tracks the norms closely at a fraction of the fully-converged cost.
    """

    mode: RegularizationMode
    epochs: int = 200
    batch_size: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    power_tol: float = 1e-6
    power_max_iter: int = 30

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if not self.power_tol > 0.0 or self.power_max_iter < 1:
            raise ValueError("power iteration budget must be positive")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: Gradients
    v: Gradients
    t: int = 0

    @classmethod
    def for_network(cls, net: Network) -> "AdamState":
        return cls(Gradients.zeros_like(net), Gradients.zeros_like(net))


@dataclass
class EpochMetrics:
    """Size-weighted means over one epoch's minibatches.

    ``loss``/``mae`` are computed on each batch's forward pass before that
    batch's update (so with learning rate 0 they equal a plain evaluation).
    ``objective`` is the post-epoch value being minimized: (1/lambda)*loss
    plus the penalty for penalized modes, the plain loss otherwise.
    """

    loss: float
    mae: float
    objective: float


def _check_congruent(net: Network, grads: Gradients):
    if len(grads.dW) != len(net.layers) or len(grads.db) != len(net.layers):
        raise ValueError("gradients do not match the network's layer count")
    for i, layer in enumerate(net.layers):
        if grads.dW[i].shape != layer.W.shape or grads.db[i].shape != layer.b.shape:
            raise ValueError(f"gradient shapes for layer {i} do not match the network")


def adam_step(net: Network, grads: Gradients, state: AdamState, cfg: TrainConfig):
    """One Adam update, applied to the network parameters in place.

    m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; parameters move by
    -lr * m_hat / (sqrt(v_hat) + eps) with the usual bias corrections.
    Refuses to half-apply a broken update: all gradient entries are checked
    finite before anything is touched.
    """
    _check_congruent(net, grads)
    for i in range(len(net.layers)):
        for name, g in (("weight", grads.dW[i]), ("bias", grads.db[i])):
            if not np.isfinite(g).all():
                bad = np.argwhere(~np.isfinite(g))[0]
                raise ValueError(
                    f"non-finite {name} gradient in layer {i} at entry "
                    f"{tuple(int(j) for j in bad)}; update aborted"
                )
    state.t += 1
    bias1 = 1.0 - cfg.beta1 ** state.t
    bias2 = 1.0 - cfg.beta2 ** state.t
    params = []
    for i, layer in enumerate(net.layers):
        params.append((layer.W, grads.dW[i], state.m.dW[i], state.v.dW[i]))
        params.append((layer.b, grads.db[i], state.m.db[i], state.v.db[i]))
    for theta, g, m, v in params:
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def minibatch_indices(n: int, batch_size: int, rng, shuffle: bool = True):
    """Yield index batches covering 0..n-1 exactly once per epoch.

    The last batch may be smaller than ``batch_size``.
    """
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_epoch(net: Network, X, y, state: AdamState, cfg: TrainConfig,
                rng, tracker: SpectralTracker | None = None) -> EpochMetrics:
    """Run one epoch of minibatch Adam over the training slice (X, y).

    For the penalized modes the spectral estimates are refreshed once per
    minibatch (warm-started through ``tracker``) before the penalty gradient
    is added; max-norm mode projects the weight rows after every step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("training slice is empty")
    if cfg.batch_size > n:
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds the training-set size {n}"
        )
    mode = cfg.mode
    if mode.penalized and tracker is None:
        tracker = SpectralTracker(len(net.layers), tol=cfg.power_tol,
                                  max_iter=cfg.power_max_iter)

    loss_sum = 0.0
    mae_sum = 0.0
    for idx in minibatch_indices(n, cfg.batch_size, rng, cfg.shuffle):
        grads, batch_loss, batch_mae = batch_gradients(net, X[idx], y[idx])
        if mode.penalized:
            estimates = tracker.refresh(net.weights())
            pen = penalty_gradient(mode, net, estimates)
            total = Gradients(
                [dw / mode.lam + pw for dw, pw in zip(grads.dW, pen.dW)],
                [db / mode.lam for db in grads.db],
            )
        else:
            total = grads
        adam_step(net, total, state, cfg)
        if mode.kind == "max_norm":
            maxnorm_project(net, mode.max_norm_cap)
        loss_sum += batch_loss * len(idx)
        mae_sum += batch_mae * len(idx)

    loss = loss_sum / n
    mae = mae_sum / n
    if mode.penalized:
        objective = loss / mode.lam + penalty_value(
            mode, net, tracker.refresh(net.weights())
        )
    else:
        objective = loss
    return EpochMetrics(loss, mae, objective)
