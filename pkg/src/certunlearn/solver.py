"""Exact R-ERM training and the objective/gradient/Hessian shared with unlearning.

The objective over the active rows is

    L(beta) = sum_{i in active} l(y_i | x_i @ beta) + lam * r(beta)

and ``fit`` minimizes it by damped Newton with Armijo backtracking. Removed
rows are handled with a boolean mask so that leave-M-out objectives share
the design matrix of the full one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from certunlearn.errors import DomainError, NumericalError
from certunlearn.glm import ModelSpec, loss_d123, loss_value, reg_grad_hess

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
SHRINK = 0.5
MAX_BACKTRACK = 60


@dataclass(frozen=True, eq=False)
class Objective:
    spec: ModelSpec
    X: np.ndarray
    y: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DomainError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if self.active is None:
            active = np.ones(X.shape[0], dtype=bool)
        else:
            active = np.asarray(self.active, dtype=bool)
            if active.shape != y.shape:
                raise DomainError("active mask must have one entry per row")
        if not active.any():
            raise DomainError("objective has no active rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "active", active)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def without(self, removed) -> Objective:
        """Objective with the rows in ``removed`` dropped from the active set."""
        idx = np.asarray(list(removed), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise DomainError("removal index out of range")
        active = self.active.copy()
        active[idx] = False
        return Objective(self.spec, self.X, self.y, active)

    def _check_beta(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.p,):
            raise DomainError(f"beta has shape {beta.shape}, expected ({self.p},)")
        return beta

    def value(self, beta) -> float:
        beta = self._check_beta(beta)
        z = self.X[self.active] @ beta
        losses = loss_value(self.spec.loss, self.y[self.active], z)
        return float(np.sum(losses) + self.spec.lam * self.spec.reg.value(beta))

    def gradient(self, beta) -> np.ndarray:
        beta = self._check_beta(beta)
        d1, _, _ = loss_d123(self.spec.loss, self.y, self.X @ beta)
        d1 = np.where(self.active, d1, 0.0)
        g_reg, _ = reg_grad_hess(self.spec.reg, beta)
        return self.X.T @ d1 + self.spec.lam * g_reg

    def hessian(self, beta) -> np.ndarray:
        beta = self._check_beta(beta)
        _, d2, _ = loss_d123(self.spec.loss, self.y, self.X @ beta)
        w = np.where(self.active, d2, 0.0)
        _, h_reg = reg_grad_hess(self.spec.reg, beta)
        H = self.X.T @ (w[:, None] * self.X)
        H[np.diag_indices_from(H)] += self.spec.lam * h_reg
        return H


def objective_eval(obj: Objective, beta) -> float:
    return obj.value(beta)


def gradient(obj: Objective, beta) -> np.ndarray:
    return obj.gradient(beta)


def hessian(obj: Objective, beta) -> np.ndarray:
    return obj.hessian(beta)


def spd_solve(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``H x = rhs`` by Cholesky, retrying once with a small diagonal jitter."""
    try:
        factor = linalg.cho_factor(H, lower=True, check_finite=True)
    except linalg.LinAlgError:
        jitter = 1e-12 * np.trace(H) / H.shape[0]
        log.warning("Cholesky failed; retrying with jitter %.3g", jitter)
        try:
            factor = linalg.cho_factor(H + jitter * np.eye(H.shape[0]), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("Hessian is not numerically positive definite") from exc
    return linalg.cho_solve(factor, rhs)


@dataclass
class FitResult:
    beta: np.ndarray
    grad_norm: float
    iterations: int
    converged: bool


def default_tol(p: int) -> float:
    return 1e-10 * np.sqrt(p)


def fit(
    obj: Objective,
    init=None,
    tol_abs: float | None = None,
    max_iter: int = 100,
    polish: int = 0,
) -> FitResult:
    """Minimize the objective by damped Newton with Armijo backtracking.

    Stops once ``||grad|| <= tol_abs`` (default ``1e-10 * sqrt(p)``), then
    takes up to ``polish`` further Newton steps for as long as each one at
    least halves the gradient norm. Polishing drives a fit used as an
    exact-retrain reference down to the roundoff floor, which matters when
    the errors being measured are themselves far below ``tol_abs``.
    Non-convergence is reported through ``FitResult.converged``, never raised.
    """
    tol = default_tol(obj.p) if tol_abs is None else float(tol_abs)
    if tol <= 0:
        raise DomainError("tol_abs must be positive")
    beta = np.zeros(obj.p) if init is None else obj._check_beta(init).copy()

    f = obj.value(beta)
    g = obj.gradient(beta)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > tol and it < max_iter:
        it += 1
        d = -spd_solve(obj.hessian(beta), g)
        slope = float(g @ d)
        # roundoff allowance: near the optimum f changes below machine precision
        slack = 16 * np.finfo(float).eps * (1.0 + abs(f))
        step = 1.0
        for _ in range(MAX_BACKTRACK):
            cand = beta + step * d
            f_cand = obj.value(cand)
            if f_cand <= f + ARMIJO_C * step * slope + slack:
                break
            step *= SHRINK
        else:
            log.warning("line search stalled at iteration %d (grad norm %.3g)", it, gnorm)
            break
        beta, f = cand, f_cand
        g = obj.gradient(beta)
        gnorm = float(np.linalg.norm(g))
    converged = gnorm <= tol
    if converged:
        for _ in range(polish):
            cand = beta - spd_solve(obj.hessian(beta), g)
            g_cand = obj.gradient(cand)
            g_cand_norm = float(np.linalg.norm(g_cand))
            if not g_cand_norm <= 0.5 * gnorm:
                break
            beta, g, gnorm = cand, g_cand, g_cand_norm
            it += 1
    return FitResult(beta=beta, grad_norm=gnorm, iterations=it, converged=converged)
