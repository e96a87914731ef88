"""Isotropic Laplace perturbation and noise-scale calibration.

The isotropic Laplace law on R^p has density proportional to
``exp(-C ||b||)`` with ``C = epsilon / r``. Its norm is Gamma(p, rate C) and
its direction is uniform on the sphere, which is how we sample it.

Two ways to pick ``r``:

* :func:`theoretical_scale` evaluates the closed-form logistic-ridge bound.
  It is very conservative at desk scale but needs no computation.
* :func:`empirical_scale` takes the worst Newton error over random forget
  sets and inflates it by ``sqrt(log C(n, m) / log m0)`` as a proxy for the
  maximum over all C(n, m) sets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from certunlearn.errors import DomainError, NumericalError

# extra Newton steps past tolerance for exact-retrain references
EXACT_POLISH = 4


@dataclass(frozen=True)
class NoiseSpec:
    p: int
    r: float
    epsilon: float

    def __post_init__(self):
        if int(self.p) < 1:
            raise DomainError("dimension p must be >= 1")
        if not self.r >= 0:
            raise DomainError("noise scale r must be >= 0")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")

    @property
    def rate(self) -> float:
        """Density slope ``C = epsilon / r`` (infinite when r = 0)."""
        return math.inf if self.r == 0 else self.epsilon / self.r


def sample_isotropic_laplace(spec: NoiseSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the isotropic Laplace law; ``size`` adds a leading batch axis."""
    shape = (spec.p,) if size is None else (size, spec.p)
    if spec.r == 0:
        return np.zeros(shape)
    norms = rng.gamma(shape=spec.p, scale=spec.r / spec.epsilon, size=None if size is None else size)
    direction = rng.standard_normal(shape)
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    return direction * (norms if size is None else norms[:, None])


def log_normalizer(p: int, rate: float) -> float:
    """log of ``C^p Gamma(p/2) / (2 pi^(p/2) Gamma(p))``."""
    return p * math.log(rate) + gammaln(p / 2) - math.log(2.0) - (p / 2) * math.log(math.pi) - gammaln(p)


def log_density(spec: NoiseSpec, b) -> float | np.ndarray:
    """Exact log density at ``b`` (a vector, or a batch of vectors on the last axis)."""
    if spec.r == 0:
        raise DomainError("log density undefined for the point mass r = 0")
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != spec.p:
        raise DomainError(f"expected vectors of length {spec.p}")
    out = log_normalizer(spec.p, spec.rate) - spec.rate * np.linalg.norm(b, axis=-1)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# closed-form logistic-ridge constants (C_X = 1, s = 1, C_y = 1, C_rr = 0)


@dataclass(frozen=True)
class TheoryConstants:
    lam: float
    gamma0: float
    n: int
    p: int
    m: int
    t: int
    nu: float = 1.0
    c: float = 3.0

    def __post_init__(self):
        if self.lam <= 0 or self.gamma0 <= 0 or self.nu <= 0:
            raise DomainError("lambda, gamma0 and nu must be positive")
        if self.n < 2 or self.p < 1 or self.m < 0 or self.t < 1:
            raise DomainError("need n >= 2, p >= 1, m >= 0, t >= 1")
        if self.c != 3.0:
            # the explicit chain below is the c = 3 specialization
            raise DomainError("only the tail constant c = 3 is supported")

    @property
    def polylog1(self) -> float:
        return 4.0 * math.sqrt(2.0 * self.gamma0 / self.lam * math.log(self.n))

    @property
    def C_l(self) -> float:
        return self.polylog1 + 8.0 / self.lam

    @property
    def polylog5(self) -> float:
        sg = math.sqrt(self.gamma0)
        return 4.0 * (sg + 3.0) / self.lam * math.sqrt(self.m * (2 * self.m + 3) / self.p * math.log(self.n))

    @property
    def C_ll(self) -> float:
        return 4.0 + 8.0 / self.lam + self.polylog1 + self.polylog5

    @property
    def C_xx(self) -> float:
        sg = math.sqrt(self.gamma0)
        return (sg + 3.0) / self.lam * math.sqrt(self.m / self.p * (1.0 + 4.0 * (self.c + 1.0) * math.log(self.n)))

    @property
    def C2(self) -> float:
        return (math.sqrt(self.gamma0) + 4.0) ** 2 * self.C_ll

    @property
    def C1(self) -> float:
        return 2.0 / (math.sqrt(3.0) * self.lam**2) * self.C2 * self.C_l**2 * self.C_xx

    @property
    def contraction(self) -> float:
        """``C2 m^3 / (2 lam nu n)``, the per-step shrink base."""
        return self.C2 * self.m**3 / (2.0 * self.lam * self.nu * self.n)


def theoretical_scale(tc: TheoryConstants) -> float:
    """``C1^(2^(t-1)) * (C2 m^3 / (2 lam nu n))^(2^(t-2))``."""
    return tc.C1 ** (2.0 ** (tc.t - 1)) * tc.contraction ** (2.0 ** (tc.t - 2))


def log_theoretical_scale(tc: TheoryConstants) -> float:
    return 2.0 ** (tc.t - 1) * math.log(tc.C1) + 2.0 ** (tc.t - 2) * math.log(tc.contraction)


def lemma_one_step_scale(tc: TheoryConstants) -> float:
    """Alternative one-step radius ``C1 m^(3/2) / sqrt(n)`` (no sqrt(C2 / 2 lam nu) factor)."""
    return tc.C1 * tc.m**1.5 / math.sqrt(tc.n)


# ---------------------------------------------------------------------------
# empirical calibration


def log_binom(n: int, m: int) -> float:
    return float(gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1))


def rescale_factor(n: int, m: int, m0: int) -> float:
    return math.sqrt(log_binom(n, m) / math.log(m0))


def sample_subsets(n: int, m: int, m0: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """``m0`` distinct size-``m`` subsets of ``range(n)``, uniformly at random."""
    total = math.comb(n, m)
    if total < m0:
        raise DomainError(f"only {total} distinct subsets of size {m} exist, need m0={m0}")
    if total <= 4 * m0:
        every = list(itertools.combinations(range(n), m))
        pick = np.sort(rng.choice(total, size=m0, replace=False))
        return [every[k] for k in pick]
    seen: dict[tuple[int, ...], None] = {}
    while len(seen) < m0:
        seen.setdefault(tuple(sorted(rng.choice(n, size=m, replace=False).tolist())), None)
    return list(seen)


@dataclass
class Calibration:
    raw_max: dict[int, float]
    factor: float
    subsets: list[tuple[int, ...]] = field(repr=False)

    def scale(self, steps: int) -> float:
        return self.raw_max[steps] * self.factor


def calibrate(
    X,
    y,
    spec,
    m: int,
    steps,
    m0: int,
    rng: np.random.Generator,
    beta_hat=None,
) -> Calibration:
    """Worst Newton error ``max ||beta_wo_M - beta_tilde^(T)||`` over ``m0`` random
    forget sets, for every T in ``steps`` at once, plus the rescale factor."""
    from certunlearn.solver import Objective, fit
    from certunlearn.unlearn import newton_path

    if m0 < 2:
        raise DomainError("m0 must be >= 2")
    steps = sorted({int(s) for s in np.atleast_1d(steps)})
    obj = Objective(spec, X, y)
    if not 1 <= m <= obj.n - 1:
        raise DomainError("need 1 <= m <= n - 1")
    if beta_hat is None:
        beta_hat = _converged(fit(obj)).beta
    subsets = sample_subsets(obj.n, m, m0, rng)
    worst = {s: 0.0 for s in steps}
    for M in subsets:
        sub = obj.without(M)
        path = newton_path(sub, beta_hat, max(steps))
        exact = _converged(fit(sub, init=beta_hat, polish=EXACT_POLISH)).beta
        for s in steps:
            worst[s] = max(worst[s], float(np.linalg.norm(exact - path[s])))
    return Calibration(raw_max=worst, factor=rescale_factor(obj.n, m, m0), subsets=subsets)


def empirical_scale(dataset, spec, m: int, steps: int, m0: int, rng: np.random.Generator, beta_hat=None) -> float:
    """Rescaled worst-case T-step Newton error; see :func:`calibrate`."""
    cal = calibrate(dataset.X, dataset.y, spec, m, steps, m0, rng, beta_hat=beta_hat)
    return cal.scale(int(steps))


def _converged(res):
    if not res.converged:
        raise NumericalError(f"exact retrain did not converge (grad norm {res.grad_norm:.3g})")
    return res
