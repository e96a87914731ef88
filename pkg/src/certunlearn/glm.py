"""Loss families and separable regularizers.

Every loss is a function of a scalar response ``y`` and a linear predictor
``z = x @ beta``. The Newton machinery only needs the value and the first
three derivatives in ``z``; new families plug in by providing those four.
All functions broadcast over numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from certunlearn.errors import DomainError


class LossFamily(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


# sup |l'''| of the logistic loss, attained where sigma(1 - sigma)(1 - 2 sigma) peaks
LOGISTIC_THIRD_DERIV_MAX = 1.0 / (6.0 * np.sqrt(3.0))


def _check_inputs(loss: LossFamily, y, z):
    loss = LossFamily(loss)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise DomainError("loss inputs must be finite")
    if loss is LossFamily.LOGISTIC and not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError("logistic loss requires y in {0, 1}")
    return loss, y, z


def _softplus(z):
    return np.logaddexp(0.0, z)


def loss_value(loss: LossFamily, y, z):
    """Return l(y | z), elementwise."""
    loss, y, z = _check_inputs(loss, y, z)
    if loss is LossFamily.SQUARED:
        out = 0.5 * (y - z) ** 2
    else:
        out = y * _softplus(-z) + (1.0 - y) * _softplus(z)
    return out if out.ndim else float(out)


def loss_d123(loss: LossFamily, y, z):
    """Return the first three z-derivatives ``(d1, d2, d3)`` of the loss."""
    loss, y, z = _check_inputs(loss, y, z)
    if loss is LossFamily.SQUARED:
        d1 = z - y
        d2 = np.ones_like(d1)
        d3 = np.zeros_like(d1)
    else:
        s = expit(z)
        d1 = s - y
        d2 = s * (1.0 - s)
        d3 = d2 * (1.0 - 2.0 * s)
    if d1.ndim == 0:
        return float(d1), float(d2), float(d3)
    return d1, d2, d3


@dataclass(frozen=True)
class Regularizer:
    """Ridge penalty ``lam * ||beta||^2``.

    ``nu`` is the declared strong-convexity constant fed to the theory
    formulas. It is configuration, not derived from the Hessian (which is
    ``2 I`` for ridge, so any ``0 < nu <= 2`` is a valid lower bound).
    """

    lam: float = 1.0
    nu: float = 1.0
    kind: str = "ridge"

    def __post_init__(self):
        if self.kind != "ridge":
            raise DomainError(f"unsupported regularizer {self.kind!r}")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise DomainError("lambda must be positive (strong convexity)")
        if not (0 < self.nu <= 2):
            raise DomainError("nu must lie in (0, 2] for ridge")

    def value(self, beta: np.ndarray) -> float:
        return float(beta @ beta)


# Lipschitz constant of the ridge Hessian diagonal (it is constant)
RIDGE_HESSIAN_LIPSCHITZ = 0.0


def reg_grad_hess(reg: Regularizer, beta) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian diagonal of the unscaled penalty ``r(beta)``."""
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise DomainError("beta must be finite")
    return 2.0 * beta, np.full(beta.shape, 2.0)


@dataclass(frozen=True)
class ModelSpec:
    loss: LossFamily = LossFamily.LOGISTIC
    reg: Regularizer = Regularizer()

    def __post_init__(self):
        object.__setattr__(self, "loss", LossFamily(self.loss))

    @property
    def lam(self) -> float:
        return self.reg.lam

    @property
    def nu(self) -> float:
        return self.reg.nu
