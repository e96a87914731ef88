"""Newton-step unlearning and the perturbed Newton estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from certunlearn.errors import DomainError
from certunlearn.glm import loss_d123
from certunlearn.noise import NoiseSpec, sample_isotropic_laplace
from certunlearn.solver import Objective, spd_solve


@dataclass(frozen=True)
class RemovalRequest:
    """Rows to forget, as 0-based indices into the training set."""

    M: tuple[int, ...]
    n: int | None = None

    def __post_init__(self):
        M = tuple(int(i) for i in self.M)
        if len(set(M)) != len(M):
            raise DomainError("removal indices must be distinct")
        if self.n is not None:
            if any(i < 0 or i >= self.n for i in M):
                raise DomainError(f"removal index out of range [0, {self.n})")
            if len(M) > self.n - 1:
                raise DomainError("at least one row must remain after removal")
        object.__setattr__(self, "M", tuple(sorted(M)))

    @property
    def m(self) -> int:
        return len(self.M)

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> RemovalRequest:
        if not 0 <= m <= n - 1:
            raise DomainError(f"need 0 <= m <= n - 1, got m={m}, n={n}")
        return cls(tuple(rng.choice(n, size=m, replace=False).tolist()), n=n)


@dataclass
class UnlearnResult:
    iterates: list[np.ndarray]
    noise: np.ndarray
    perturbed: np.ndarray
    scale_used: float
    epsilon: float
    request: RemovalRequest = field(default=None)

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def last(self) -> np.ndarray:
        return self.iterates[-1]


def newton_step(obj_without_M: Objective, beta) -> np.ndarray:
    """One Newton iteration on the (leave-M-out) objective, Hessian refactorized at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    g = obj_without_M.gradient(beta)
    return beta - spd_solve(obj_without_M.hessian(beta), g)


def newton_path(obj_without_M: Objective, beta_hat, steps: int) -> list[np.ndarray]:
    iterates = [np.array(beta_hat, dtype=float)]
    for _ in range(steps):
        iterates.append(newton_step(obj_without_M, iterates[-1]))
    return iterates


def unlearn(
    obj: Objective,
    beta_hat,
    req: RemovalRequest,
    steps: int,
    noise_scale: float,
    epsilon: float,
    rng: np.random.Generator,
) -> UnlearnResult:
    """Run ``steps`` Newton iterations from ``beta_hat`` on the objective without
    ``req.M``, then add one isotropic Laplace draw with density slope
    ``epsilon / noise_scale`` (no noise when ``noise_scale == 0``)."""
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if noise_scale < 0:
        raise DomainError("noise scale must be >= 0")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    RemovalRequest(req.M, n=obj.n)
    iterates = newton_path(obj.without(req.M), beta_hat, steps)
    b = sample_isotropic_laplace(NoiseSpec(obj.p, noise_scale, epsilon), rng)
    return UnlearnResult(
        iterates=iterates,
        noise=b,
        perturbed=iterates[-1] + b,
        scale_used=float(noise_scale),
        epsilon=float(epsilon),
        request=req,
    )


def segment_hessian(obj: Objective, a, b, quadrature_points: int = 64) -> np.ndarray:
    """Hessian of ``obj`` averaged over the segment from ``a`` to ``b`` (Gauss-Legendre)."""
    if quadrature_points < 1:
        raise DomainError("quadrature_points must be >= 1")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_points)
    ts, ws = 0.5 * (nodes + 1.0), 0.5 * weights
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    H = np.zeros((obj.p, obj.p))
    for t, w in zip(ts, ws):
        H += w * obj.hessian(t * a + (1.0 - t) * b)
    return H


def exact_loo_identity_residual(
    obj: Objective,
    beta_hat,
    beta_hat_wo_M,
    req: RemovalRequest,
    quadrature_points: int = 64,
) -> float:
    """Residual of the exact leave-M-out identity

        beta_wo_M - beta_hat = Gbar_wo_M^{-1} sum_{i in M} l'_i(beta_hat) x_i

    with ``Gbar_wo_M`` the leave-M-out Hessian averaged along the segment
    between the two fits.
    """
    if quadrature_points < 1:
        raise DomainError("quadrature_points must be >= 1")
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_hat_wo_M = np.asarray(beta_hat_wo_M, dtype=float)
    diff = beta_hat_wo_M - beta_hat
    if req.m == 0:
        return float(np.linalg.norm(diff))
    idx = np.asarray(req.M)
    d1, _, _ = loss_d123(obj.spec.loss, obj.y[idx], obj.X[idx] @ beta_hat)
    rhs = obj.X[idx].T @ np.atleast_1d(d1)
    G_bar = segment_hessian(obj.without(req.M), beta_hat, beta_hat_wo_M, quadrature_points)
    return float(np.linalg.norm(diff - spd_solve(G_bar, rhs)))


def min_steps_real(m: int, n: int) -> float:
    """Real-valued threshold ``1 + log2((a + 1) / (1 - 3a))``, ``a = log(m + 1) / log(n)``."""
    if m < 0 or n < 2:
        raise DomainError("need m >= 0 and n >= 2")
    alpha = math.log(m + 1) / math.log(n)
    if alpha >= 1.0 / 3.0:
        raise DomainError(
            f"alpha = log(m+1)/log(n) = {alpha:.4f} >= 1/3: the step rule needs m = o(n^(1/3))"
        )
    return 1.0 + math.log2((alpha + 1.0) / (1.0 - 3.0 * alpha))


def recommended_steps(m: int, n: int) -> int:
    """Smallest integer step count strictly above the threshold of ``min_steps_real``."""
    return math.floor(min_steps_real(m, n)) + 1
