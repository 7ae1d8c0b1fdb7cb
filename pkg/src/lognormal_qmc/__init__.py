"""Randomly shifted lattice rules with product weights for lognormal diffusion problems."""

from .config import SHIPPED_MODELS, ExperimentConfig, default_model
from .exceptions import (ArtifactError, AssumptionViolation, CoercivityError, DomainError,
                         FDStepError, ParameterError)
from .fem import (DiffusionFunctional, FemSolution, Mesh1D, assemble_solve, derivative_bound_check,
                  functional_G, strang_truncation_gap, v_norm, v_norm_diff)
from .harness import (Experiment, cbc_cost_benchmark, fit_rate, mc_baseline, qmc_estimate,
                      rms_shift_error, run_convergence, truncation_study)
from .lattice import (CBCLatticeRule, LatticeRule, cbc_construct, gaussian_nodes,
                      inverse_normal_cdf, lattice_points, worst_case_error)
from .wavelet import (FieldRealization, LevelIndex, WaveletField, WaveletModel, basis_eval,
                      besov_norm, besov_threshold, check_assumption_b1, coefficient_eval,
                      covariance, enumerate_indices, field_eval, rho_of_index, rho_sequence,
                      sigma_level)
from .weights import ProductWeights, WeightScheme, choose_lambda, product_gamma, varsigma

__version__ = "0.1.0"
