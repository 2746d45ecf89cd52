"""Gibbs samplers for the latent variable model.

The parameter-expanded sampler works in an overparameterized model whose
residual variances (sigma2) and factor variances (psi2) float freely; draws
are mapped back to the identified scale afterwards (see postprocess).  The
standard sampler pins both at one and samples the identified model directly;
it is kept as the mixing baseline.

A full iteration updates, in order: latent responses, factor scores,
loadings, factor precisions, residual precisions, then the regression block
when covariates are present.  The latent-response sweep is the hot loop and
lives in _kernels.
"""

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .data import MixedOutcomeMatrix, normal_score_init
from .model import (
    FactorStructure,
    Hyperparameters,
    RegressionSpec,
    WorkingState,
    default_hyperparameters,
    validate_structure,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("parameter_expanded", "standard_gibbs")


class StructureInvalid(ValueError):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings; defaults follow the reference simulation protocol
    (50,000 iterations, 10,000 burn-in, keep every 10th draw)."""

    n_iterations: int = 50_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0
    algorithm: str = "parameter_expanded"

    def __post_init__(self):
        if self.n_iterations <= 0:
            raise ValueError("n_iterations must be positive")
        if not (0 <= self.burn_in < self.n_iterations):
            raise ValueError("burn_in must lie in [0, n_iterations)")
        if self.thin <= 0:
            raise ValueError("thin must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if self.n_kept < 100:
            warnings.warn(
                f"only {self.n_kept} post-burn-in draws will be kept; "
                "chains this short are unlikely to support inference",
                stacklevel=2,
            )

    @property
    def n_kept(self):
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass
class ChainOutput:
    """Recorded working-model snapshots plus run metadata.

    Latent responses are stored float32 (they are only consumed by the
    predictive checks); every parameter block is float64.
    """

    z_star: np.ndarray        # M x I x J, float32
    h_star: np.ndarray        # M x I x Q
    lambda_star: np.ndarray   # M x J x Q
    sigma2: np.ndarray        # M x J
    psi2: np.ndarray          # M x Q
    alpha: np.ndarray         # M
    beta_star: Optional[np.ndarray]  # M x P when regression is enabled
    config: SamplerConfig
    structure: FactorStructure
    hyper: Hyperparameters
    covariate_names: tuple = ()
    n_repairs: int = 0

    @property
    def n_draws(self):
        return self.lambda_star.shape[0]

    @property
    def regression_enabled(self):
        return self.beta_star is not None

    def working_state(self, m: int) -> WorkingState:
        return WorkingState(
            z_star=self.z_star[m].astype(np.float64),
            h_star=self.h_star[m].copy(),
            lambda_star=self.lambda_star[m].copy(),
            sigma2=self.sigma2[m].copy(),
            psi2=self.psi2[m].copy(),
            beta_star=None if self.beta_star is None else self.beta_star[m].copy(),
            alpha=float(self.alpha[m]),
        )

    def inferential_z(self, m: int) -> np.ndarray:
        """Latent responses of snapshot m rescaled to the identified model."""
        return self.z_star[m].astype(np.float64) / np.sqrt(self.sigma2[m])[None, :]


def _eta_prior_mean(state: WorkingState, regression: Optional[RegressionSpec], n_rows, n_factors):
    m_eta = np.zeros((n_rows, n_factors))
    if regression is not None and regression.enabled:
        m_eta[:, 0] = state.alpha + regression.x @ state.beta_star
    return m_eta


def factor_posterior_moments(state: WorkingState, m_eta: np.ndarray):
    """Mean matrix (I x Q) and shared covariance of the factor-score update."""
    lam = state.lambda_star
    lam_w = lam / state.sigma2[:, None]          # Sigma^-1 Lambda
    prec = np.diag(1.0 / state.psi2) + lam.T @ lam_w
    cf = cho_factor(prec, lower=True)
    cov = cho_solve(cf, np.eye(prec.shape[0]))
    rhs = state.z_star @ lam_w + m_eta / state.psi2[None, :]
    mean = cho_solve(cf, rhs.T).T
    return mean, cov


def draw_factors(state: WorkingState, regression: Optional[RegressionSpec],
                 rng: np.random.Generator) -> np.ndarray:
    """Update every factor-score row from its normal full conditional."""
    n_rows, n_factors = state.h_star.shape
    m_eta = _eta_prior_mean(state, regression, n_rows, n_factors)
    mean, cov = factor_posterior_moments(state, m_eta)
    chol = np.linalg.cholesky(cov)
    state.h_star = mean + rng.standard_normal((n_rows, n_factors)) @ chol.T
    return state.h_star


def loading_posterior_moments(state: WorkingState, structure: FactorStructure,
                              hyper: Hyperparameters, j: int):
    """Mean and covariance of the free loadings of outcome row j."""
    free = structure.mask[j]
    n_free = int(free.sum())
    if n_free == 0:
        return np.empty(0), np.empty((0, 0))
    h_free = state.h_star[:, free]
    s_inv = 1.0 / hyper.s_lambda
    prec = s_inv * np.eye(n_free) + (h_free.T @ h_free) / state.sigma2[j]
    cf = cho_factor(prec, lower=True)
    cov = cho_solve(cf, np.eye(n_free))
    rhs = s_inv * hyper.m_lambda * np.ones(n_free) + (h_free.T @ state.z_star[:, j]) / state.sigma2[j]
    mean = cho_solve(cf, rhs)
    return mean, cov


def draw_loadings(state: WorkingState, structure: FactorStructure,
                  hyper: Hyperparameters, rng: np.random.Generator) -> np.ndarray:
    """Update the free loadings row by row; structural zeros are untouched."""
    for j in range(structure.n_outcomes):
        free = structure.mask[j]
        n_free = int(free.sum())
        if n_free == 0:
            continue
        mean, cov = loading_posterior_moments(state, structure, hyper, j)
        chol = np.linalg.cholesky(cov)
        state.lambda_star[j, free] = mean + chol @ rng.standard_normal(n_free)
    return state.lambda_star


def psi_posterior_params(state: WorkingState, hyper: Hyperparameters,
                         regression: Optional[RegressionSpec]):
    """(shape, rate vector) of the Gamma update for the factor precisions.

    Under the covariate hierarchy the primary factor scores are centered at
    alpha + x_i beta before squaring; the uncentered form is only correct
    for a zero prior mean.
    """
    n_rows, n_factors = state.h_star.shape
    m_eta = _eta_prior_mean(state, regression, n_rows, n_factors)
    resid = state.h_star - m_eta
    shape = hyper.phi_psi + 0.5 * n_rows
    rate = hyper.nu_psi + 0.5 * np.sum(resid * resid, axis=0)
    return shape, rate


def draw_psi_inverse(state: WorkingState, hyper: Hyperparameters,
                     regression: Optional[RegressionSpec],
                     rng: np.random.Generator) -> np.ndarray:
    shape, rate = psi_posterior_params(state, hyper, regression)
    state.psi2 = 1.0 / rng.gamma(shape, 1.0 / rate)
    return state.psi2


def sigma_posterior_params(state: WorkingState, hyper: Hyperparameters):
    """(shape, rate vector) of the Gamma update for the residual precisions."""
    resid = state.z_star - state.h_star @ state.lambda_star.T
    shape = hyper.phi_sigma + 0.5 * state.z_star.shape[0]
    rate = hyper.nu_sigma + 0.5 * np.sum(resid * resid, axis=0)
    return shape, rate


def draw_sigma_inverse(state: WorkingState, hyper: Hyperparameters,
                       rng: np.random.Generator) -> np.ndarray:
    shape, rate = sigma_posterior_params(state, hyper)
    state.sigma2 = 1.0 / rng.gamma(shape, 1.0 / rate)
    return state.sigma2


def regression_posterior_moments(state: WorkingState, spec: RegressionSpec,
                                 hyper: Hyperparameters):
    """Mean and covariance of the coefficient update given the current alpha."""
    x = spec.x
    psi1_prec = 1.0 / state.psi2[0]
    p = x.shape[1]
    prec = psi1_prec * (x.T @ x) + np.eye(p) / hyper.s_beta
    cf = cho_factor(prec, lower=True)
    cov = cho_solve(cf, np.eye(p))
    rhs = psi1_prec * (x.T @ (state.h_star[:, 0] - state.alpha))
    rhs = rhs + hyper.m_beta / hyper.s_beta
    mean = cho_solve(cf, rhs)
    return mean, cov


def draw_regression(state: WorkingState, spec: RegressionSpec,
                    hyper: Hyperparameters, rng: np.random.Generator,
                    sample_alpha: bool = True):
    """Update the coefficients, then the location working parameter."""
    mean, cov = regression_posterior_moments(state, spec, hyper)
    chol = np.linalg.cholesky(cov)
    state.beta_star = mean + chol @ rng.standard_normal(mean.shape[0])
    if sample_alpha:
        n_rows = spec.x.shape[0]
        psi1_prec = 1.0 / state.psi2[0]
        if hyper.s_alpha2 == 0.0:
            state.alpha = hyper.m_alpha
        else:
            prec_a = psi1_prec * n_rows + 1.0 / hyper.s_alpha2
            var_a = 1.0 / prec_a
            mean_a = var_a * (
                psi1_prec * np.sum(state.h_star[:, 0] - spec.x @ state.beta_star)
                + hyper.m_alpha / hyper.s_alpha2
            )
            state.alpha = mean_a + np.sqrt(var_a) * rng.standard_normal()
    return state.beta_star, state.alpha


def _latent_sweep(state: WorkingState, y: MixedOutcomeMatrix,
                  rng: np.random.Generator) -> int:
    mu = state.h_star @ state.lambda_star.T
    sd = np.sqrt(state.sigma2)
    seed_state = _kernels.draw_kernel_seed(rng)
    return _kernels.scan_latent_responses(state.z_star, y.level_codes,
                                          y.n_levels, mu, sd, seed_state)


def draw_latent_responses(state: WorkingState, y: MixedOutcomeMatrix,
                          rng: np.random.Generator) -> np.ndarray:
    """Resample every latent response cell by cell (column-major, ascending
    row), each from its truncated normal full conditional."""
    repairs = _latent_sweep(state, y, rng)
    if repairs:
        logger.warning("latent scan repaired %d numerically empty intervals", repairs)
    return state.z_star


def initial_state(y: MixedOutcomeMatrix, structure: FactorStructure,
                  n_covariates: int, rng: np.random.Generator) -> WorkingState:
    """Normal-score latent responses, prior-draw factor scores, zero loadings."""
    n_rows, n_cols = y.values.shape
    n_factors = structure.n_factors
    return WorkingState(
        z_star=normal_score_init(y, rng),
        h_star=rng.standard_normal((n_rows, n_factors)),
        lambda_star=np.zeros((n_cols, n_factors)),
        sigma2=np.ones(n_cols),
        psi2=np.ones(n_factors),
        beta_star=np.zeros(n_covariates),
        alpha=0.0,
    )


def run_chain(y: MixedOutcomeMatrix, structure: FactorStructure,
              hyper: Optional[Hyperparameters] = None,
              regression: Optional[RegressionSpec] = None,
              config: Optional[SamplerConfig] = None) -> ChainOutput:
    """Run one chain and record every kept snapshot.

    Draw t is kept when t > burn_in and (t - burn_in) is a multiple of thin.
    The run is fully deterministic given the seed; identical inputs give
    bit-identical outputs on the same build.
    """
    if hyper is None:
        hyper = default_hyperparameters()
    if config is None:
        config = SamplerConfig()
    report = validate_structure(structure)
    if not report.ok:
        raise StructureInvalid(report)
    if structure.n_outcomes != y.n_cols:
        raise ValueError(
            f"mask has {structure.n_outcomes} rows but data has {y.n_cols} columns"
        )
    reg = regression if (regression is not None and regression.enabled) else None
    if reg is not None and reg.x.shape[0] != y.n_rows:
        raise ValueError(
            f"covariate matrix has {reg.x.shape[0]} rows but data has {y.n_rows}"
        )
    px = config.algorithm == "parameter_expanded"
    rng = np.random.default_rng(int(config.seed))
    n_rows, n_cols = y.values.shape
    n_factors = structure.n_factors
    n_cov = reg.n_covariates if reg is not None else 0
    state = initial_state(y, structure, n_cov, rng)

    n_kept = config.n_kept
    out = ChainOutput(
        z_star=np.empty((n_kept, n_rows, n_cols), dtype=np.float32),
        h_star=np.empty((n_kept, n_rows, n_factors)),
        lambda_star=np.empty((n_kept, n_cols, n_factors)),
        sigma2=np.empty((n_kept, n_cols)),
        psi2=np.empty((n_kept, n_factors)),
        alpha=np.empty(n_kept),
        beta_star=np.empty((n_kept, n_cov)) if reg is not None else None,
        config=config,
        structure=structure,
        hyper=hyper,
        covariate_names=reg.covariate_names if reg is not None else (),
    )

    kept = 0
    total_repairs = 0
    for t in range(1, config.n_iterations + 1):
        try:
            total_repairs += _latent_sweep(state, y, rng)
            draw_factors(state, reg, rng)
            draw_loadings(state, structure, hyper, rng)
            if px:
                draw_psi_inverse(state, hyper, reg, rng)
                draw_sigma_inverse(state, hyper, rng)
            if reg is not None:
                draw_regression(state, reg, hyper, rng, sample_alpha=px)
        except Exception as exc:
            raise RuntimeError(f"sampler failed at iteration {t}: {exc}") from exc
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            out.z_star[kept] = state.z_star
            out.h_star[kept] = state.h_star
            out.lambda_star[kept] = state.lambda_star
            out.sigma2[kept] = state.sigma2
            out.psi2[kept] = state.psi2
            out.alpha[kept] = state.alpha
            if reg is not None:
                out.beta_star[kept] = state.beta_star
            kept += 1
    if total_repairs:
        logger.warning("chain repaired %d numerically empty truncation intervals",
                       total_repairs)
    out.n_repairs = total_repairs
    return out


def run_chain_standard(y: MixedOutcomeMatrix, structure: FactorStructure,
                       hyper: Optional[Hyperparameters] = None,
                       regression: Optional[RegressionSpec] = None,
                       config: Optional[SamplerConfig] = None) -> ChainOutput:
    """Baseline sampler on the identified model (sigma2 = psi2 = 1 fixed)."""
    if config is None:
        config = SamplerConfig(algorithm="standard_gibbs")
    else:
        config = replace(config, algorithm="standard_gibbs")
    return run_chain(y, structure, hyper=hyper, regression=regression, config=config)
