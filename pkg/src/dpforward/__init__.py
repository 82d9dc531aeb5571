"""Calibration, sampling, accounting and verification for matrix Gaussian DP mechanisms."""

from dpforward.accounting import (
    CompositionLedger,
    PlrvSpec,
    compose_basic,
    compose_gaussian_self,
    delta_for_epsilon,
    epsilon_for_delta,
    monte_carlo_delta_estimate,
    plrv_tail_probabilities,
    verify_gaussian,
)
from dpforward.mechanisms import (
    GaussianCalibration,
    MvgParams,
    PrivacyBudget,
    amgm_calibrate,
    amgm_sample,
    classical_gm_sigma,
    compute_B,
    mvg_iid_sigma,
    mvg_product_bound,
    privacy_curve,
    rr_perturb,
)
from dpforward.numerics import RandomStream
from dpforward.sensitivity import ClipSpec, SensitivityBound

__version__ = "0.1.0"

__all__ = [
    "ClipSpec",
    "CompositionLedger",
    "GaussianCalibration",
    "MvgParams",
    "PlrvSpec",
    "PrivacyBudget",
    "RandomStream",
    "SensitivityBound",
    "amgm_calibrate",
    "amgm_sample",
    "classical_gm_sigma",
    "compose_basic",
    "compose_gaussian_self",
    "compute_B",
    "delta_for_epsilon",
    "epsilon_for_delta",
    "monte_carlo_delta_estimate",
    "mvg_iid_sigma",
    "mvg_product_bound",
    "plrv_tail_probabilities",
    "privacy_curve",
    "rr_perturb",
    "verify_gaussian",
]
