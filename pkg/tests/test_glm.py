from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certunlearn.errors import DomainError
from certunlearn.glm import (
    LOGISTIC_THIRD_DERIV_MAX,
    RIDGE_HESSIAN_LIPSCHITZ,
    LossFamily,
    ModelSpec,
    Regularizer,
    loss_d123,
    loss_value,
    reg_grad_hess,
)

SQ, LOG = LossFamily.SQUARED, LossFamily.LOGISTIC


def test_squared_loss_values():
    assert loss_value(SQ, 3.0, 1.0) == 2.0
    assert loss_value(SQ, 5.0, 5.0) == 0.0


def test_logistic_loss_at_zero_margin():
    assert loss_value(LOG, 1.0, 0.0) == pytest.approx(math.log(2), rel=1e-15)
    assert loss_value(LOG, 0.0, 0.0) == pytest.approx(math.log(2), rel=1e-15)


def test_logistic_derivatives_at_zero():
    d1, d2, d3 = loss_d123(LOG, 0.0, 0.0)
    assert (d1, d2) == (0.5, 0.25)
    assert d3 == pytest.approx(0.0, abs=1e-16)


def test_squared_derivatives():
    assert loss_d123(SQ, 7.0, 4.0) == (-3.0, 1.0, 0.0)


@pytest.mark.parametrize("z", [50.0, 800.0, 1e6])
def test_logistic_saturation_does_not_overflow(z):
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        d1, d2, d3 = loss_d123(LOG, 1.0, z)
        v = loss_value(LOG, 1.0, z)
    assert -1e-20 < d1 <= 0.0 and d1 == pytest.approx(0.0, abs=1e-20)
    assert 0.0 <= d2 < 1e-20
    assert abs(d3) < 1e-20
    assert 0.0 <= v < 1e-20
    # the opposite side grows linearly rather than overflowing
    assert loss_value(LOG, 0.0, z) == pytest.approx(z, rel=1e-12)


def test_logistic_matches_direct_formula_on_moderate_inputs():
    z = np.linspace(-30, 30, 121)
    for y in (0.0, 1.0):
        direct = y * np.log1p(np.exp(-z)) + (1 - y) * np.log1p(np.exp(z))
        np.testing.assert_allclose(loss_value(LOG, np.full_like(z, y), z), direct, rtol=1e-13, atol=1e-300)


def test_vectorized_matches_scalar(rng):
    y = rng.integers(0, 2, 20).astype(float)
    z = rng.normal(size=20) * 4
    vec = loss_d123(LOG, y, z)
    for i in range(20):
        sc = loss_d123(LOG, y[i], z[i])
        for k in range(3):
            assert vec[k][i] == sc[k]


@pytest.mark.parametrize("y", [0.5, 2.0, -1.0])
def test_logistic_rejects_non_binary_response(y):
    with pytest.raises(DomainError):
        loss_value(LOG, y, 0.0)
    with pytest.raises(DomainError):
        loss_d123(LOG, y, 0.0)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_inputs_rejected(bad):
    for loss in (SQ, LOG):
        with pytest.raises(DomainError):
            loss_value(loss, 1.0, bad)
        with pytest.raises(DomainError):
            loss_d123(loss, 0.0, bad)
    with pytest.raises(DomainError):
        loss_value(SQ, bad, 0.0)


def _central(f, z, h):
    return (f(z + h) - f(z - h)) / (2 * h)


@pytest.mark.parametrize("loss", [SQ, LOG])
def test_finite_differences(loss):
    rng = np.random.default_rng(7)
    for _ in range(100):
        z = float(rng.normal() * 3)
        y = float(rng.integers(0, 2)) if loss is LOG else float(rng.normal() * 3)
        h = 1e-5 * max(1.0, abs(z))
        d1, d2, d3 = loss_d123(loss, y, z)
        fd1 = _central(lambda t: loss_value(loss, y, t), z, h)
        fd2 = _central(lambda t: loss_d123(loss, y, t)[0], z, h)
        fd3 = _central(lambda t: loss_d123(loss, y, t)[1], z, h)
        assert abs(fd1 - d1) <= 1e-6 * max(abs(d1), 1e-3)
        assert abs(fd2 - d2) <= 1e-5 * max(abs(d2), 1e-3)
        assert abs(fd3 - d3) <= 1e-4 * max(abs(d3), 1e-3)


@settings(max_examples=300, deadline=None)
@given(y=st.sampled_from([0.0, 1.0]), z=st.floats(-1e6, 1e6, allow_nan=False))
def test_logistic_bounds(y, z):
    d1, d2, d3 = loss_d123(LOG, y, z)
    assert abs(d1) <= 1 + abs(y)
    assert 0 <= d2 <= 0.25
    assert abs(d3) <= LOGISTIC_THIRD_DERIV_MAX + 1e-15
    assert abs(d3) <= 6
    assert loss_value(LOG, y, z) >= 0


@settings(max_examples=200, deadline=None)
@given(y=st.floats(-1e3, 1e3), z=st.floats(-1e3, 1e3))
def test_squared_nonnegative(y, z):
    assert loss_value(SQ, y, z) >= 0


def test_third_derivative_maximum_is_attained():
    # |s(1-s)(1-2s)| peaks where s = 1/2 +- 1/(2 sqrt 3)
    z = math.log((3 + math.sqrt(3)) / (3 - math.sqrt(3)))
    assert abs(loss_d123(LOG, 0.0, z)[2]) == pytest.approx(LOGISTIC_THIRD_DERIV_MAX, rel=1e-12)


def test_ridge_gradient_and_hessian():
    reg = Regularizer(1.0)
    g, h = reg_grad_hess(reg, np.zeros(3))
    np.testing.assert_array_equal(g, np.zeros(3))
    np.testing.assert_array_equal(h, 2 * np.ones(3))
    g, h = reg_grad_hess(reg, np.array([1.0, -2.0]))
    np.testing.assert_array_equal(g, [2.0, -4.0])
    np.testing.assert_array_equal(h, [2.0, 2.0])
    assert RIDGE_HESSIAN_LIPSCHITZ == 0.0
    assert reg.value(np.array([1.0, -2.0])) == 5.0


def test_ridge_rejects_non_finite_beta():
    with pytest.raises(DomainError):
        reg_grad_hess(Regularizer(1.0), np.array([1.0, math.nan]))


@pytest.mark.parametrize("kwargs", [{"lam": 0.0}, {"lam": -1.0}, {"lam": 1.0, "nu": 0.0}, {"lam": 1.0, "nu": 2.5}, {"lam": 1.0, "kind": "lasso"}])
def test_regularizer_validation(kwargs):
    with pytest.raises(DomainError):
        Regularizer(**kwargs)


def test_model_spec_defaults():
    spec = ModelSpec(LossFamily("logistic"), Regularizer(0.5))
    assert spec.lam == 0.5 and spec.nu == 1.0
    assert spec.loss is LOG
