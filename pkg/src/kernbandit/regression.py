"""Kernel-ridge / GP posterior on scattered points.

The state stores the lower Cholesky factor of K + lambda I and is never
mutated: ``update`` returns a new state whose factor extends the old one by
one row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import FactorizationFailure
from .kernels import JITTER, KernelSpec, kernel_matrix, matern_eval

DEFAULT_REGULARIZER = 0.25


@dataclass(frozen=True)
class PosteriorState:
    kernel: KernelSpec
    points: np.ndarray
    targets: np.ndarray
    regularizer: float
    chol: np.ndarray
    alpha: np.ndarray  # (K + lambda I)^{-1} y

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def noise(self) -> float:
        """Diagonal term actually factored: the regularizer plus jitter."""
        return self.regularizer + JITTER

    def predict(self, x):
        """Posterior mean and variance at ``x`` (scalar or 1-d array)."""
        scalar = np.ndim(x) == 0
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        prior = matern_eval(self.kernel, 0.0)
        if self.n == 0:
            mean = np.zeros_like(xs)
            var = np.full_like(xs, prior)
        else:
            Kx = kernel_matrix(self.kernel, self.points, xs)
            mean = Kx.T @ self.alpha
            v = solve_triangular(self.chol, Kx, lower=True, check_finite=False)
            var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
        if scalar:
            return float(mean[0]), float(var[0])
        return mean, var

    def info_gain(self) -> float:
        """0.5 * log det(I + K / lambda) for the observed points."""
        if self.n == 0:
            return 0.0
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol)))
        return 0.5 * (logdet - self.n * np.log(self.noise))

    def update(self, x: float, y: float) -> "PosteriorState":
        return update(self, x, y)


def _cholesky(A):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(f"K + lambda I not positive definite: {exc}") from None


def fit(kernel: KernelSpec, points, targets, regularizer: float = DEFAULT_REGULARIZER) -> PosteriorState:
    points = np.asarray(points, dtype=float).reshape(-1).copy()
    targets = np.asarray(targets, dtype=float).reshape(-1).copy()
    if len(points) != len(targets):
        raise ValueError("points and targets differ in length")
    if regularizer < 0:
        raise ValueError("regularizer must be non-negative")
    n = len(points)
    if n == 0:
        empty = np.zeros((0, 0))
        return PosteriorState(kernel, points, targets, float(regularizer), empty, np.zeros(0))
    A = kernel_matrix(kernel, points, points)
    A[np.diag_indices(n)] += regularizer + JITTER
    L = _cholesky(A)
    alpha = cho_solve((L, True), targets, check_finite=False)
    return PosteriorState(kernel, points, targets, float(regularizer), L, alpha)


def update(state: PosteriorState, x: float, y: float) -> PosteriorState:
    """Append one observation by extending the Cholesky factor by a row.

    Falls back to a full refit when the new pivot is not positive.
    """
    n = state.n
    if n == 0:
        return fit(state.kernel, [x], [y], state.regularizer)
    kx = kernel_matrix(state.kernel, state.points, [x])[:, 0]
    row = solve_triangular(state.chol, kx, lower=True, check_finite=False)
    pivot = matern_eval(state.kernel, 0.0) + state.noise - row @ row
    points = np.append(state.points, x)
    targets = np.append(state.targets, y)
    if not pivot > 0:
        return fit(state.kernel, points, targets, state.regularizer)
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = state.chol
    L[n, :n] = row
    L[n, n] = np.sqrt(pivot)
    alpha = cho_solve((L, True), targets, check_finite=False)
    return PosteriorState(state.kernel, points, targets, state.regularizer, L, alpha)


def empty_state(kernel: KernelSpec, regularizer: float = DEFAULT_REGULARIZER) -> PosteriorState:
    return fit(kernel, [], [], regularizer)

