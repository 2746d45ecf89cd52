"""Model specification: factor structure, priors, covariate regression.

The bifactor convention places every outcome on the primary factor (column 0
of the loading mask) and groups of outcomes on secondary factors.  Structural
zeros are enforced exactly: masked loadings are never sampled and stay 0.0
through the whole chain.  Specific means and variances of the latent
responses are not identifiable under the rank likelihood and are pinned to 0
and 1 in the inferential model.
"""

import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .data import DataError


@dataclass(frozen=True)
class FactorStructure:
    """J x Q boolean loading mask; True marks a loading to estimate."""

    mask: np.ndarray
    primary_column: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mask", np.array(self.mask, dtype=bool))
        if self.mask.ndim != 2:
            raise ValueError("loading mask must be J x Q")

    @property
    def n_outcomes(self):
        return self.mask.shape[0]

    @property
    def n_factors(self):
        return self.mask.shape[1]

    @property
    def n_structural_zeros(self):
        return int((~self.mask).sum())

    def free_indices(self):
        """(j, q) pairs of loadings to estimate, row-major order."""
        rows, cols = np.nonzero(self.mask)
        return list(zip(rows.tolist(), cols.tolist()))


@dataclass(frozen=True)
class StructureReport:
    ok: bool
    violations: tuple

    def __str__(self):
        if self.ok:
            return "structure OK"
        return "structure invalid:\n" + "\n".join(f"  - {v}" for v in self.violations)


def validate_structure(structure: FactorStructure) -> StructureReport:
    """Check the identifiability requirements on the loading mask.

    Rotational invariance with unit factor covariance leaves Q(Q-1)/2 free
    rotations, so at least that many structural zeros are required; each
    factor also needs at least one free loading.  Returns a report listing
    every violated rule instead of raising, so callers can print all of them.
    """
    mask = structure.mask
    n_out, n_fac = mask.shape
    violations = []
    required = n_fac * (n_fac - 1) // 2
    zeros = structure.n_structural_zeros
    if zeros < required:
        violations.append(
            f"needs at least {required} structural zeros for {n_fac} factors, found {zeros}"
        )
    for q in range(n_fac):
        if not mask[:, q].any():
            violations.append(f"factor {q} has no free loading (column without free loading)")
    if n_out < 2:
        violations.append("need at least 2 outcomes")
    return StructureReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class Hyperparameters:
    """Priors for the overparameterized working model.

    Gamma priors are (shape, rate) on the precisions; the full conditionals
    add I/2 to the shape and half a sum of squares to the rate.  Loading
    means/variances broadcast over every free loading.
    """

    phi_psi: float = 2.0
    nu_psi: float = 0.5
    phi_sigma: float = 2.0
    nu_sigma: float = 1.0
    m_lambda: float = 0.0
    s_lambda: float = 1.0
    m_beta: float = 0.0
    s_beta: float = 100.0
    m_alpha: float = 0.0
    s_alpha2: float = 100.0

    def __post_init__(self):
        for name in ("phi_psi", "nu_psi", "phi_sigma", "nu_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("s_lambda", "s_beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.s_alpha2 < 0:
            raise ValueError("s_alpha2 must be nonnegative")


def default_hyperparameters() -> Hyperparameters:
    """Defaults under which the induced prior on each free loading is close
    to standard normal; diffuse normals on the regression block."""
    return Hyperparameters()


@dataclass(frozen=True)
class RegressionSpec:
    """Standardized covariates entering the mean of the primary factor."""

    x: np.ndarray
    covariate_names: tuple
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=np.float64))
        if self.x.ndim != 2:
            raise ValueError("covariate matrix must be I x P")
        if np.isnan(self.x).any():
            raise ValueError("missing covariate entries are not supported")
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if len(self.covariate_names) != self.x.shape[1]:
            raise ValueError("covariate_names length mismatch")

    @property
    def n_covariates(self):
        return self.x.shape[1]


@dataclass
class WorkingState:
    """One state of the overparameterized sampler (mutable, single-owner)."""

    z_star: np.ndarray       # I x J latent responses
    h_star: np.ndarray       # I x Q factor scores
    lambda_star: np.ndarray  # J x Q loadings, exact zeros off-mask
    sigma2: np.ndarray       # J residual variances
    psi2: np.ndarray         # Q factor variances
    beta_star: np.ndarray    # P regression coefficients
    alpha: float = 0.0


@dataclass(frozen=True)
class InferentialDraw:
    """Post-transformed draw on the identified scale."""

    lambda_: np.ndarray
    h: np.ndarray
    beta: Optional[np.ndarray] = None


def implied_correlation(lambda_: np.ndarray) -> np.ndarray:
    """Correlation matrix of the latent responses implied by the loadings.

    The covariance is I_J + Lambda Lambda^T; rescaling each row j by
    sqrt(1 + lambda_j . lambda_j) gives the unit-diagonal version that the
    observed-scale transform bakes in.
    """
    lam = np.asarray(lambda_, dtype=np.float64)
    cov = np.eye(lam.shape[0]) + lam @ lam.T
    d = 1.0 / np.sqrt(np.diag(cov))
    corr = cov * d[:, None] * d[None, :]
    np.fill_diagonal(corr, 1.0)
    return corr


@dataclass(frozen=True)
class ModelSpec:
    """Parsed model-specification file."""

    structure: FactorStructure
    hyper: Hyperparameters
    regression_enabled: bool = False
    covariate_columns: tuple = ()
    continuous_columns: tuple = ()


def load_model_spec(path) -> ModelSpec:
    """Read the JSON model file: {Q, mask, hyperparameters?, regression?,
    continuous_columns?}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return model_spec_from_dict(raw)


def model_spec_from_dict(raw: dict) -> ModelSpec:
    try:
        q = int(raw["Q"])
        mask = np.array(raw["mask"])
    except KeyError as exc:
        raise DataError(f"model spec missing required field {exc}")
    if mask.ndim != 2 or mask.shape[1] != q:
        raise DataError(f"mask must be J x Q with Q={q}, got shape {mask.shape}")
    structure = FactorStructure(mask=mask.astype(bool))
    hyper = default_hyperparameters()
    overrides = raw.get("hyperparameters") or {}
    unknown = set(overrides) - set(Hyperparameters.__dataclass_fields__)
    if unknown:
        raise DataError(f"unknown hyperparameters: {sorted(unknown)}")
    if overrides:
        hyper = replace(hyper, **{k: float(v) for k, v in overrides.items()})
    reg = raw.get("regression") or {}
    return ModelSpec(
        structure=structure,
        hyper=hyper,
        regression_enabled=bool(reg.get("enabled", False)),
        covariate_columns=tuple(reg.get("covariate_columns", ())),
        continuous_columns=tuple(raw.get("continuous_columns", ())),
    )


def model_spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "Q": spec.structure.n_factors,
        "mask": spec.structure.mask.astype(int).tolist(),
        "hyperparameters": {
            k: getattr(spec.hyper, k) for k in Hyperparameters.__dataclass_fields__
        },
        "regression": {
            "enabled": spec.regression_enabled,
            "covariate_columns": list(spec.covariate_columns),
        },
        "continuous_columns": list(spec.continuous_columns),
    }
