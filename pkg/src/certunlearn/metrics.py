"""Accuracy and certifiability measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from certunlearn.errors import DomainError
from certunlearn.glm import ModelSpec, loss_value
from certunlearn.noise import NoiseSpec, log_density, sample_isotropic_laplace


@dataclass(frozen=True)
class GedEstimate:
    mean: float
    std_error: float
    n_test: int


def loss_gaps(spec: ModelSpec, beta_a, beta_b, X0, y0) -> np.ndarray:
    """Pointwise ``|l(y0 | x0 @ a) - l(y0 | x0 @ b)|``."""
    X0 = np.atleast_2d(X0)
    y0 = np.atleast_1d(y0)
    return np.abs(loss_value(spec.loss, y0, X0 @ beta_a) - loss_value(spec.loss, y0, X0 @ beta_b))


def ged_estimate(spec: ModelSpec, beta_exact, beta_perturbed, test_sampler, n_test: int, rng) -> GedEstimate:
    """Monte Carlo generalization error divergence over fresh test points.

    The noise inside ``beta_perturbed`` is held fixed; only ``(x0, y0)`` are
    averaged over.
    """
    if n_test < 2:
        raise DomainError("n_test must be >= 2")
    X0, y0 = test_sampler(rng, n_test)
    gaps = loss_gaps(spec, beta_exact, beta_perturbed, X0, y0)
    return GedEstimate(float(gaps.mean()), float(gaps.std(ddof=1) / math.sqrt(n_test)), n_test)


def in_sample_error(spec: ModelSpec, beta_perturbed, beta_exact, dataset, M) -> float:
    """Mean loss gap over the forgotten rows."""
    idx = np.asarray(list(M), dtype=int)
    if idx.size == 0:
        raise DomainError("in-sample error needs a nonempty forget set")
    return float(loss_gaps(spec, beta_perturbed, beta_exact, dataset.X[idx], dataset.y[idx]).mean())


@dataclass(frozen=True)
class CertReport:
    delta_norm: float
    scale: float
    epsilon: float
    satisfied: bool
    max_observed_log_ratio: float

    @property
    def log_ratio_bound(self) -> float:
        return self.epsilon * self.delta_norm / self.scale


def log_ratio(u, beta_tilde, beta_exact, scale: float, epsilon: float):
    """``log p_b(u - beta_tilde) - log p_b(u - beta_exact)`` for the Laplace law."""
    u = np.asarray(u, dtype=float)
    spec = NoiseSpec(u.shape[-1], scale, epsilon)
    return log_density(spec, u - beta_tilde) - log_density(spec, u - beta_exact)


def violating_probe(beta_tilde, beta_exact, distance: float = 1e3) -> np.ndarray:
    """Point on the line through both centres, beyond ``beta_exact``, where
    ``log p_b(u - beta_exact) - log p_b(u - beta_tilde)`` attains its maximum
    ``(epsilon / r) * ||beta_tilde - beta_exact||``."""
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    beta_exact = np.asarray(beta_exact, dtype=float)
    delta = beta_tilde - beta_exact
    norm = np.linalg.norm(delta)
    if norm == 0:
        return beta_exact.copy()
    return beta_exact - distance * delta / norm


def certify_check(beta_tilde, beta_exact, scale: float, epsilon: float, n_probe: int, rng) -> CertReport:
    """Check ``||beta_tilde - beta_exact|| <= scale`` and probe the density ratio.

    The norm condition is exact: it holds iff the perturbed output's density
    ratio against the perturbed exact retrain stays within ``exp(+-epsilon)``.
    The probes draw ``u`` from the perturbed law centred at ``beta_tilde``
    and record the largest absolute log ratio seen, a guard on the density code.
    """
    if scale <= 0:
        raise DomainError("scale must be positive")
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    beta_exact = np.asarray(beta_exact, dtype=float)
    delta_norm = float(np.linalg.norm(beta_tilde - beta_exact))
    max_ratio = 0.0
    if n_probe > 0:
        spec = NoiseSpec(beta_tilde.shape[0], scale, epsilon)
        u = beta_tilde + sample_isotropic_laplace(spec, rng, size=n_probe)
        max_ratio = float(np.max(np.abs(log_ratio(u, beta_tilde, beta_exact, scale, epsilon))))
    return CertReport(
        delta_norm=delta_norm,
        scale=float(scale),
        epsilon=float(epsilon),
        satisfied=delta_norm <= scale,
        max_observed_log_ratio=max_ratio,
    )
