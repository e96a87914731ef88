from __future__ import annotations

import math

import numpy as np
import pytest

from certunlearn.data import Dataset, fresh_point_sampler, generate_linear
from certunlearn.errors import DomainError
from certunlearn.glm import LossFamily, ModelSpec, Regularizer, loss_value
from certunlearn.metrics import (
    certify_check,
    ged_estimate,
    in_sample_error,
    log_ratio,
    loss_gaps,
    violating_probe,
)

SQ = ModelSpec(LossFamily.SQUARED, Regularizer(1.0))
LOG = ModelSpec(LossFamily.LOGISTIC, Regularizer(1.0))


def _gaussian_abs_product(s1, s2, rho):
    """E|UV| for zero-mean jointly Gaussian U, V."""
    return 2 * s1 * s2 / math.pi * (math.sqrt(1 - rho**2) + rho * math.asin(rho))


def test_ged_identical_models_is_zero(rng):
    ds = generate_linear(50, 5, 1.0, rng)
    beta = rng.normal(size=5)
    est = ged_estimate(SQ, beta, beta, fresh_point_sampler(ds, LossFamily.SQUARED), 100, rng)
    assert est.mean == 0.0 and est.std_error == 0.0 and est.n_test == 100


def test_ged_squared_loss_closed_form():
    rng = np.random.default_rng(0)
    n, p, sigma = 200, 6, 0.8
    ds = generate_linear(n, p, sigma, rng)
    a = rng.normal(size=p)
    b = a + 0.3 * rng.normal(size=p)
    # gap = |U V| / 2 with U = x'(b - a), V = x'(2 beta* - a - b) + 2 sigma e, x ~ N(0, I/n)
    d, w = b - a, 2 * ds.beta_star - a - b
    s1 = np.linalg.norm(d) / math.sqrt(n)
    s2 = math.sqrt(w @ w / n + 4 * sigma**2)
    rho = (d @ w / n) / (s1 * s2)
    population = 0.5 * _gaussian_abs_product(s1, s2, rho)
    est = ged_estimate(SQ, a, b, fresh_point_sampler(ds, LossFamily.SQUARED, sigma), 100_000, rng)
    assert abs(est.mean - population) <= 3 * est.std_error


def test_ged_standard_error_definition(rng):
    ds = generate_linear(30, 4, 1.0, rng)
    sampler = fresh_point_sampler(ds, LossFamily.SQUARED)
    a, b = rng.normal(size=4), rng.normal(size=4)
    est = ged_estimate(SQ, a, b, sampler, 500, np.random.default_rng(3))
    X0, y0 = sampler(np.random.default_rng(3), 500)
    gaps = np.abs(loss_value(LossFamily.SQUARED, y0, X0 @ a) - loss_value(LossFamily.SQUARED, y0, X0 @ b))
    assert est.mean == pytest.approx(gaps.mean(), rel=1e-14)
    assert est.std_error == pytest.approx(gaps.std(ddof=1) / math.sqrt(500), rel=1e-12)


def test_ged_deterministic_and_rejects_tiny_n(rng):
    ds = generate_linear(30, 4, 1.0, rng)
    sampler = fresh_point_sampler(ds, LossFamily.SQUARED)
    a, b = rng.normal(size=4), rng.normal(size=4)
    e1 = ged_estimate(SQ, a, b, sampler, 300, np.random.default_rng(8))
    e2 = ged_estimate(SQ, a, b, sampler, 300, np.random.default_rng(8))
    assert e1 == e2
    with pytest.raises(DomainError):
        ged_estimate(SQ, a, b, sampler, 1, rng)


def test_ged_triangle_inequality_same_draws(rng):
    ds = generate_linear(40, 5, 1.0, rng)
    sampler = fresh_point_sampler(ds, LossFamily.SQUARED)
    a, b, c = (rng.normal(size=5) for _ in range(3))
    g = lambda u, v: ged_estimate(SQ, u, v, sampler, 2000, np.random.default_rng(42)).mean
    assert g(a, c) <= g(a, b) + g(b, c) + 1e-12


def test_in_sample_error(rng):
    n, p = 30, 4
    X = rng.normal(size=(n, p))
    y = rng.integers(0, 2, n).astype(float)
    ds = Dataset(X, y)
    a, b = rng.normal(size=p), rng.normal(size=p)
    assert in_sample_error(LOG, a, a, ds, [1, 2]) == 0.0
    single = in_sample_error(LOG, a, b, ds, [7])
    assert single == pytest.approx(abs(loss_value(LossFamily.LOGISTIC, y[7], X[7] @ a) - loss_value(LossFamily.LOGISTIC, y[7], X[7] @ b)))
    M = [0, 4, 9, 22]
    direct = np.mean([abs(loss_value(LossFamily.LOGISTIC, y[i], X[i] @ a) - loss_value(LossFamily.LOGISTIC, y[i], X[i] @ b)) for i in M])
    assert in_sample_error(LOG, a, b, ds, M) == pytest.approx(direct, rel=1e-13)
    with pytest.raises(DomainError):
        in_sample_error(LOG, a, b, ds, [])


def test_loss_gaps_accepts_single_point(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    x = rng.normal(size=3)
    assert loss_gaps(SQ, a, b, x, 1.0).shape == (1,)


# -- certification ------------------------------------------------------------


def _pair(rng, p, dist):
    exact = rng.normal(size=p)
    d = rng.normal(size=p)
    return exact + dist * d / np.linalg.norm(d), exact


def test_certify_identical():
    rng = np.random.default_rng(0)
    b = rng.normal(size=5)
    rep = certify_check(b, b, 1.0, 0.1, 100, rng)
    assert rep.delta_norm == 0 and rep.satisfied and rep.max_observed_log_ratio == 0.0


@pytest.mark.parametrize("factor,satisfied", [(0.5, True), (1.0, True), (2.0, False)])
def test_certify_cases(factor, satisfied):
    rng = np.random.default_rng(int(factor * 10))
    r, eps = 0.3, 0.2
    tilde, exact = _pair(rng, 10, factor * r)
    rep = certify_check(tilde, exact, r, eps, 1000, rng)
    assert rep.satisfied is satisfied
    assert rep.max_observed_log_ratio <= rep.log_ratio_bound * (1 + 1e-9)
    assert rep.log_ratio_bound == pytest.approx(eps * factor, rel=1e-12)
    if satisfied:
        assert rep.max_observed_log_ratio <= eps * (1 + 1e-9)


def test_violating_probe_exceeds_epsilon():
    rng = np.random.default_rng(3)
    r, eps = 0.3, 0.2
    tilde, exact = _pair(rng, 10, 2 * r)
    u = violating_probe(tilde, exact)
    # at u the exact-centred density dominates by the factor exp(2 eps)
    lr = log_ratio(u, exact, tilde, r, eps)
    assert lr > eps
    assert lr == pytest.approx(2 * eps, rel=1e-9)
    assert log_ratio(u, tilde, exact, r, eps) == pytest.approx(-lr, rel=1e-12)


def test_certify_rejects_nonpositive_scale(rng):
    with pytest.raises(DomainError):
        certify_check(np.zeros(2), np.zeros(2), 0.0, 0.1, 10, rng)


def test_certify_deterministic():
    tilde, exact = _pair(np.random.default_rng(1), 6, 0.4)
    a = certify_check(tilde, exact, 1.0, 0.5, 200, np.random.default_rng(5))
    b = certify_check(tilde, exact, 1.0, 0.5, 200, np.random.default_rng(5))
    assert a == b


@pytest.mark.parametrize("seed", range(10))
def test_probe_maximum_never_exceeds_bound(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 30))
    r = float(rng.uniform(0.01, 3))
    tilde, exact = _pair(rng, p, float(rng.uniform(0, 5)) * r)
    rep = certify_check(tilde, exact, r, 0.1, 500, rng)
    assert rep.max_observed_log_ratio <= rep.log_ratio_bound * (1 + 1e-9) + 1e-12
