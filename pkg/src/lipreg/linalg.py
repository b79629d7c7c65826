"""Dense linear algebra kernels for small networks.

Provides matrix-vector products with shape checking, spectral norm
estimation by alternating power iteration (with warm starts so the cost
amortizes across optimizer steps), and a slow cyclic-Jacobi eigenvalue
oracle that computes the exact spectral norm for cross-checking the
iterative path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000

# the oracle is a test-scale reference, not a production path
ORACLE_MAX_DIM = 64


@dataclass
class SpectralEstimate:
    """Top singular triple of a matrix.

    ``sigma`` approximates the operator norm ||W||_2; ``u`` and ``v`` are the
    corresponding left/right singular directions (unit norm once converged).
    ``iterations`` counts alternating update steps, ``converged`` records
    whether the stopping test was met before the iteration budget ran out.
    """

    sigma: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    converged: bool


def _as_matrix(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got array of shape {W.shape}")
    return W


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got array of shape {x.shape}")
    return x


def matvec(W, x) -> np.ndarray:
    """Dense matrix-vector product ``W x`` with explicit shape checking."""
    W = _as_matrix(W)
    x = _as_vector(x)
    if W.shape[1] != x.shape[0]:
        raise ValueError(
            f"shape mismatch: matrix is {W.shape[0]}x{W.shape[1]}, "
            f"vector has dim {x.shape[0]}"
        )
    return W @ x


def _random_unit(rng, n: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(n)
        norm = np.linalg.norm(v)
        if norm > 0.0 and np.isfinite(norm):
            return v / norm


def power_iteration(
    W,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_start=None,
    rng=None,
) -> SpectralEstimate:
    """Estimate the operator norm of ``W`` by alternating power iteration.

    Each step updates ``v <- normalize(W^T u)`` then ``u <- normalize(W v)``
    with ``sigma = ||W v||``; iteration stops once successive sigma estimates
    differ by less than ``tol * max(1, sigma)`` or ``max_iter`` is reached.

    ``warm_start`` seeds the right singular direction; pass the ``v`` of a
    previous estimate to re-converge in a couple of iterations when the
    matrix has only drifted slightly. Cold starts draw a random unit vector
    from ``rng`` (a seeded default generator when omitted).

    An all-zero matrix is a documented degenerate case: sigma 0, converged,
    canonical basis vectors for u and v.
    """
    W = _as_matrix(W)
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    m, n = W.shape

    if not W.any():
        u = np.zeros(m)
        v = np.zeros(n)
        u[0] = 1.0
        v[0] = 1.0
        return SpectralEstimate(0.0, u, v, 0, True)

    if rng is None:
        rng = np.random.default_rng(0)

    v = None
    if warm_start is not None:
        v0 = _as_vector(warm_start)
        if v0.shape[0] != n:
            raise ValueError(
                f"warm_start has dim {v0.shape[0]}, expected {n}"
            )
        norm = np.linalg.norm(v0)
        if norm > 0.0 and np.isfinite(norm):
            v = v0 / norm
    if v is None:
        v = _random_unit(rng, n)

    Wv = W @ v
    sigma = float(np.linalg.norm(Wv))
    while sigma == 0.0:
        # start direction fell in the null space; W is nonzero so a random
        # direction escapes it almost surely
        v = _random_unit(rng, n)
        Wv = W @ v
        sigma = float(np.linalg.norm(Wv))
    u = Wv / sigma

    converged = False
    iterations = 0
    for k in range(1, max_iter + 1):
        iterations = k
        vt = W.T @ u
        norm_vt = np.linalg.norm(vt)
        if norm_vt == 0.0:
            # unreachable for u in the range of W; guard with a restart
            v = _random_unit(rng, n)
            Wv = W @ v
            norm_wv = np.linalg.norm(Wv)
            if norm_wv > 0.0:
                u = Wv / norm_wv
            continue
        v = vt / norm_vt
        Wv = W @ v
        new_sigma = float(np.linalg.norm(Wv))
        if new_sigma > 0.0:
            u = Wv / new_sigma
        if abs(new_sigma - sigma) < tol * max(1.0, new_sigma):
            sigma = new_sigma
            converged = True
            break
        sigma = new_sigma

    return SpectralEstimate(sigma, u, v, iterations, converged)


def eigen_oracle(W) -> float:
    """Exact spectral norm sqrt(lambda_max(W^T W)) via cyclic Jacobi sweeps.

    Deterministic machine-precision reference used to validate
    :func:`power_iteration` in tests. Limited to small matrices.
    """
    W = _as_matrix(W)
    m, n = W.shape
    if m > ORACLE_MAX_DIM or n > ORACLE_MAX_DIM:
        raise ValueError(
            f"eigen_oracle accepts matrices up to {ORACLE_MAX_DIM}x{ORACLE_MAX_DIM}, "
            f"got {m}x{n}"
        )
    # W^T W and W W^T share their nonzero spectrum; diagonalize the smaller
    A = W.T @ W if n <= m else W @ W.T
    k = A.shape[0]
    if k == 1:
        return math.sqrt(max(float(A[0, 0]), 0.0))

    A = A.copy()
    scale = float(np.linalg.norm(A))
    if scale == 0.0:
        return 0.0
    stop = np.finfo(float).eps * scale
    # entries below this leave lambda_max perturbed by well under eps*scale
    skip = stop / (2.0 * k)

    for _sweep in range(60):
        off = A - np.diag(np.diag(A))
        if float(np.linalg.norm(off)) <= stop:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                # the rotation annihilates this pair by construction
                A[p, q] = 0.0
                A[q, p] = 0.0

    return math.sqrt(max(float(np.max(np.diag(A))), 0.0))


class SpectralTracker:
    """Per-layer spectral estimates amortized with warm-started power iteration.

    Weight matrices drift slowly between optimizer steps, so the previous
    right singular direction is an excellent initial guess and re-estimation
    typically converges in one or two iterations.
    """

    def __init__(self, n_layers: int, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, rng=None):
        self.tol = tol
        self.max_iter = max_iter
        self.rng = np.random.default_rng(0) if rng is None else rng
        self._warm = [None] * n_layers

    def refresh(self, weights) -> list[SpectralEstimate]:
        """Re-estimate the spectral norm of each matrix in ``weights``."""
        weights = list(weights)
        if len(weights) != len(self._warm):
            raise ValueError(
                f"tracker was built for {len(self._warm)} layers, got {len(weights)}"
            )
        estimates = []
        for i, W in enumerate(weights):
            est = power_iteration(W, tol=self.tol, max_iter=self.max_iter,
                                  warm_start=self._warm[i], rng=self.rng)
            self._warm[i] = est.v
            estimates.append(est)
        return estimates
