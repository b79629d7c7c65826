"""The four training formulations.

Penalty values and analytic gradients for the two spectral-norm
regularizers (decoupled per-layer sum and cross-layer product), plus the
hard max-norm projection on neuron weight rows. The product form is the
interesting one: each layer's gradient is scaled by the other layers'
norms, so one layer may grow while others shrink at a constant bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Gradients, Network

KINDS = ("none", "layer_sum", "lipschitz_product", "max_norm")

_LABELS = {
    "none": "no reg",
    "layer_sum": "layer reg",
    "lipschitz_product": "lipschitz reg",
    "max_norm": "max norm",
}


@dataclass(frozen=True)
class RegularizationMode:
    """Tagged choice of training formulation with its hyperparameters.

    ``lam`` weights the data loss as (1/lam) * loss + penalty, so larger
    lam means stronger regularization. It only matters for the penalized
    kinds; ``max_norm_cap`` only matters for max_norm.
    """

    kind: str
    lam: float = 1.0
    max_norm_cap: float = 10.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularization kind {self.kind!r}")
        if self.kind in ("layer_sum", "lipschitz_product"):
            if not (math.isfinite(self.lam) and self.lam > 0.0):
                raise ValueError("lambda must be positive and finite")
        if self.kind == "max_norm" and not self.max_norm_cap > 0.0:
            raise ValueError("max-norm cap must be positive")

    @classmethod
    def none(cls) -> "RegularizationMode":
        return cls("none")

    @classmethod
    def layer_sum(cls, lam: float) -> "RegularizationMode":
        return cls("layer_sum", lam=lam)

    @classmethod
    def lipschitz_product(cls, lam: float) -> "RegularizationMode":
        return cls("lipschitz_product", lam=lam)

    @classmethod
    def max_norm(cls, cap: float = 10.0) -> "RegularizationMode":
        return cls("max_norm", max_norm_cap=cap)

    @property
    def penalized(self) -> bool:
        """True for the kinds that add a penalty term to the loss."""
        return self.kind in ("layer_sum", "lipschitz_product")

    @property
    def label(self) -> str:
        return _LABELS[self.kind]


def _check_estimates(net: Network, estimates) -> list:
    estimates = list(estimates)
    if len(estimates) != len(net.layers):
        raise ValueError(
            f"need one spectral estimate per layer: got {len(estimates)} "
            f"for {len(net.layers)} layers"
        )
    return estimates


def penalty_value(mode: RegularizationMode, net: Network, estimates) -> float:
    """Penalty term of the training objective for the given formulation."""
    estimates = _check_estimates(net, estimates)
    if mode.kind == "layer_sum":
        return float(sum(e.sigma for e in estimates))
    if mode.kind == "lipschitz_product":
        value = 1.0
        for e in estimates:
            value *= float(e.sigma)
        return value
    return 0.0


def penalty_gradient(mode: RegularizationMode, net: Network, estimates) -> Gradients:
    """Gradient of the penalty with respect to every weight matrix.

    Uses the analytic subgradient of a spectral norm, u v^T for the top
    singular pair; exact wherever the top singular value is simple. For the
    product form layer l picks up the coefficient prod_{k != l} sigma_k,
    which is what couples the layers. Biases never enter a spectral norm,
    so their gradients are identically zero.
    """
    estimates = _check_estimates(net, estimates)
    grads = Gradients.zeros_like(net)
    if mode.kind == "layer_sum":
        for l, est in enumerate(estimates):
            grads.dW[l] = np.outer(est.u, est.v)
    elif mode.kind == "lipschitz_product":
        sigmas = [float(e.sigma) for e in estimates]
        n = len(sigmas)
        # prefix/suffix products keep zero factors exact (no division)
        prefix = [1.0] * (n + 1)
        for i in range(n):
            prefix[i + 1] = prefix[i] * sigmas[i]
        suffix = [1.0] * (n + 1)
        for i in range(n - 1, -1, -1):
            suffix[i] = sigmas[i] * suffix[i + 1]
        for l, est in enumerate(estimates):
            coeff = prefix[l] * suffix[l + 1]
            grads.dW[l] = coeff * np.outer(est.u, est.v)
    return grads


def maxnorm_project(net: Network, cap: float) -> Network:
    """Clip every neuron's incoming-weight row to L2 norm at most ``cap``.

    Mutates the network in place (intended to run right after an optimizer
    step). Rows already within the cap are untouched bit-for-bit; violating
    rows are rescaled, preserving their direction. The rescale loop repeats
    on the rare rows that land a rounding ulp above the cap so the
    postcondition holds exactly in floating point.
    """
    if not cap > 0.0:
        raise ValueError("cap must be positive")
    for layer in net.layers:
        W = layer.W
        while True:
            norms = np.sqrt(np.einsum("ij,ij->i", W, W))
            mask = norms > cap
            if not mask.any():
                break
            W[mask] *= (cap / norms[mask])[:, None]
    return net
