"""Gaussian-process regression of the dynamics residual.

One squared-exponential kernel is shared across all output dimensions, so a
single Cholesky factor of ``K + sigma_noise^2 I`` serves every component of
the vector-valued residual.  Queries run in O(N) for the mean and O(N^2)
for the variance against the cached factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class GpFitError(RuntimeError):
    """Kernel matrix factorization failed; raise the noise floor."""


@dataclass(frozen=True)
class GpHyper:
    sigma_f: float = 1.0
    lengthscale: float = 1.0
    sigma_noise: float = 0.1


@dataclass(frozen=True)
class Measurement:
    """One finite-difference residual target tagged with its episode."""

    s: np.ndarray
    y: np.ndarray
    episode: int = 0


def kernel(s: np.ndarray, s2: np.ndarray, hyper: GpHyper) -> float:
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if s.shape != s2.shape:
        raise ValueError("kernel inputs must have equal dimension")
    d2 = float(np.sum((s - s2) ** 2))
    return hyper.sigma_f**2 * np.exp(-d2 / (2.0 * hyper.lengthscale**2))


def kernel_matrix(xa: np.ndarray, xb: np.ndarray, hyper: GpHyper) -> np.ndarray:
    d2 = (
        np.sum(xa**2, axis=1)[:, None]
        + np.sum(xb**2, axis=1)[None, :]
        - 2.0 * xa @ xb.T
    )
    return hyper.sigma_f**2 * np.exp(-np.maximum(d2, 0.0) / (2.0 * hyper.lengthscale**2))


@dataclass
class GpModel:
    hyper: GpHyper
    x_train: np.ndarray  # (N, d)
    y_train: np.ndarray  # (N, n_out)
    chol_lower: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None  # (N, n_out)

    @property
    def n_train(self) -> int:
        return int(self.x_train.shape[0])


def fit(data: Sequence[Measurement], hyper: GpHyper, cap: Optional[int] = None) -> GpModel:
    """Factorize ``K + sigma_noise^2 I`` once; the model then serves queries.

    An empty dataset yields the prior model (mean 0, std sigma_f).
    """
    if cap is not None and len(data) > cap:
        raise ValueError(f"training set exceeds cap ({len(data)} > {cap})")
    if not data:
        return GpModel(hyper, np.zeros((0, 1)), np.zeros((0, 1)))
    x = np.array([np.asarray(m.s, dtype=float).reshape(-1) for m in data])
    y = np.array([np.asarray(m.y, dtype=float).reshape(-1) for m in data])
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise GpFitError("non-finite training data")
    k = kernel_matrix(x, x, hyper)
    k[np.diag_indices_from(k)] += hyper.sigma_noise**2
    try:
        chol, _ = cho_factor(k, lower=True)
    except np.linalg.LinAlgError as exc:
        raise GpFitError(
            "kernel matrix not positive definite (duplicate inputs with zero "
            "noise?); raise sigma_noise"
        ) from exc
    alpha = cho_solve((chol, True), y)
    return GpModel(hyper, x, y, np.tril(chol), alpha)


def posterior(model: GpModel, s_query: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation per output dimension."""
    s_query = np.asarray(s_query, dtype=float).reshape(-1)
    if model.n_train == 0:
        n_out = model.y_train.shape[1] if model.y_train.size else s_query.shape[0]
        return np.zeros(n_out), np.full(n_out, model.hyper.sigma_f)
    kvec = kernel_matrix(model.x_train, s_query[None, :], model.hyper)[:, 0]
    mean = kvec @ model.alpha
    v = solve_triangular(model.chol_lower, kvec, lower=True)
    var = model.hyper.sigma_f**2 - float(v @ v)
    std = float(np.sqrt(max(var, 0.0)))
    return mean, np.full(mean.shape[0], std)


def confidence_bounds(
    model: GpModel, s_query: np.ndarray, k_delta: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension interval ``[mu - k_delta sigma, mu + k_delta sigma]``."""
    if k_delta <= 0:
        raise ValueError("k_delta must be positive")
    mean, std = posterior(model, s_query)
    return mean - k_delta * std, mean + k_delta * std


def residual_from_transition(
    spec, s: np.ndarray, a: np.ndarray, s_next: np.ndarray, dt: float, episode: int = 0
) -> Measurement:
    """Finite-difference residual target ``(s' - s)/dt - f(.) - g(.) a``.

    The nominal model is evaluated at the interval midpoint ``(s + s')/2``,
    which cancels the first-order discretization bias of the difference
    quotient; the target is attributed to the midpoint for the same reason.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    s_next = np.asarray(s_next, dtype=float)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a)) and np.all(np.isfinite(s_next))):
        raise ValueError("non-finite transition")
    s_mid = 0.5 * (s + s_next)
    g = np.atleast_2d(np.asarray(spec.gain(s_mid), dtype=float))
    if g.shape[0] != s.shape[0]:
        g = g.reshape(s.shape[0], -1)
    y = (s_next - s) / dt - np.asarray(spec.nominal_drift(s_mid), dtype=float) - g @ a
    return Measurement(s=s_mid, y=y, episode=episode)


def subsample(buffer: Sequence[Measurement], n_max: int, rng: np.random.Generator) -> List[Measurement]:
    """Uniform random subset of size ``min(n_max, len(buffer))``."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if len(buffer) <= n_max:
        return list(buffer)
    idx = rng.choice(len(buffer), size=n_max, replace=False)
    return [buffer[int(i)] for i in idx]


def log_marginal_likelihood(model: GpModel) -> float:
    """Sum of the per-output-dimension Gaussian evidence terms."""
    if model.n_train == 0:
        return 0.0
    n, n_out = model.y_train.shape
    logdet = 2.0 * float(np.sum(np.log(np.diag(model.chol_lower))))
    fit_term = float(np.sum(model.y_train * model.alpha))
    return -0.5 * fit_term - 0.5 * n_out * (logdet + n * np.log(2.0 * np.pi))


def grid_search_hyper(
    data: Sequence[Measurement],
    sigma_fs: Sequence[float] = (0.5, 1.0, 2.0, 5.0),
    lengthscales: Sequence[float] = (0.3, 0.7, 1.0, 2.0),
    sigma_noises: Sequence[float] = (0.05, 0.1, 0.3),
) -> GpHyper:
    """Pick the grid point maximizing the log marginal likelihood."""
    if not data:
        raise ValueError("cannot search hyperparameters without data")
    best: Tuple[float, GpHyper] | None = None
    for sf in sigma_fs:
        for ls in lengthscales:
            for sn in sigma_noises:
                hyper = GpHyper(sf, ls, sn)
                try:
                    lml = log_marginal_likelihood(fit(data, hyper))
                except GpFitError:
                    continue
                if best is None or lml > best[0]:
                    best = (lml, hyper)
    assert best is not None
    return best[1]
