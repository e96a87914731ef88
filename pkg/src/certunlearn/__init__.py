"""Certified data removal for ridge-regularized generalized linear models.

Train by exact R-ERM, unlearn a forget set with a few Newton steps started
at the full-data optimum, then hide the residual with isotropic Laplace
noise whose scale is either calibrated empirically or taken from the
closed-form logistic-ridge bound.
"""

from certunlearn.glm import LossFamily, ModelSpec, Regularizer, loss_d123, loss_value, reg_grad_hess
from certunlearn.solver import FitResult, Objective, fit
from certunlearn.unlearn import RemovalRequest, UnlearnResult, newton_step, recommended_steps, unlearn
from certunlearn.noise import NoiseSpec, TheoryConstants, empirical_scale, log_density, sample_isotropic_laplace, theoretical_scale
from certunlearn.metrics import CertReport, GedEstimate, certify_check, ged_estimate, in_sample_error
from certunlearn.data import Dataset, generate_linear, generate_logistic

__version__ = "0.1.0"

__all__ = [
    "CertReport",
    "Dataset",
    "FitResult",
    "GedEstimate",
    "LossFamily",
    "ModelSpec",
    "NoiseSpec",
    "Objective",
    "Regularizer",
    "RemovalRequest",
    "TheoryConstants",
    "UnlearnResult",
    "certify_check",
    "empirical_scale",
    "fit",
    "ged_estimate",
    "generate_linear",
    "generate_logistic",
    "in_sample_error",
    "log_density",
    "loss_d123",
    "loss_value",
    "newton_step",
    "recommended_steps",
    "reg_grad_hess",
    "sample_isotropic_laplace",
    "theoretical_scale",
    "unlearn",
]
