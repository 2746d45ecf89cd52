"""Synthetic bifactor data for recovery experiments.

Latent responses are generated from the factor model and discretized with
per-column cutoffs drawn uniformly over the empirical latent range, so the
observed codes are ordinal with a controlled number of levels.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .data import MixedOutcomeMatrix
from .model import FactorStructure


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator used, for recovery scoring."""

    eta: np.ndarray
    z: np.ndarray
    lambda_true: np.ndarray
    cutoffs: tuple
    beta_true: Optional[np.ndarray]
    x: Optional[np.ndarray]
    seed: Optional[int]


# 15-outcome, 3-factor benchmark layout: everything on the general factor,
# outcomes 1, 13, 14, 15 on one secondary factor, outcomes 3, 4, 6, 8 on the
# other (1-based outcome numbering)
_BENCHMARK_SECONDARY = ((0, 12, 13, 14), (2, 3, 5, 7))

# level counts spanning binary up to 30 observed values (outcome 9)
BENCHMARK_CUTOFF_COUNTS = (1, 3, 5, 7, 9, 11, 13, 15, 29, 2, 4, 6, 8, 10, 12)


def benchmark_structure(loading: float = 0.6):
    """The built-in recovery benchmark: J=15, Q=3 bifactor mask and the
    default true loadings (free entries filled with ``loading``)."""
    n_out, n_fac = 15, 3
    mask = np.zeros((n_out, n_fac), dtype=bool)
    mask[:, 0] = True
    for q, rows in enumerate(_BENCHMARK_SECONDARY, start=1):
        mask[list(rows), q] = True
    lambda_true = np.where(mask, loading, 0.0)
    return FactorStructure(mask=mask), lambda_true


def generate_bifactor_data(n_rows: int, structure: FactorStructure,
                           lambda_true: np.ndarray,
                           cutoff_counts: Union[int, Sequence[int]],
                           x: Optional[np.ndarray] = None,
                           beta_true: Optional[np.ndarray] = None,
                           seed: Optional[int] = None,
                           column_names: Optional[Sequence[str]] = None):
    """Draw factor scores, latent responses, and discretized outcomes.

    Returns ``(MixedOutcomeMatrix, GroundTruth)``.  With covariates, the
    primary factor mean is shifted by x_i . beta_true.  ``cutoff_counts``
    gives the number of cutoffs per column (scalar broadcasts); a column with
    c cutoffs has at most c + 1 observed levels.
    """
    if n_rows <= 0:
        raise ValueError("I must be positive")
    lambda_true = np.asarray(lambda_true, dtype=np.float64)
    if lambda_true.shape != structure.mask.shape:
        raise ValueError("lambda_true shape does not match the mask")
    if np.any(lambda_true[~structure.mask] != 0.0):
        raise ValueError("lambda_true has nonzero entries on structural zeros")
    n_out, n_fac = lambda_true.shape
    counts = np.broadcast_to(np.asarray(cutoff_counts, dtype=np.int64), (n_out,))
    if np.any(counts < 1):
        raise ValueError("cutoff_counts must be >= 1")
    rng = np.random.default_rng(seed)

    eta = rng.standard_normal((n_rows, n_fac))
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        beta_true = np.asarray(beta_true, dtype=np.float64)
        if x.shape[0] != n_rows:
            raise ValueError("covariate row count mismatch")
        eta[:, 0] += x @ beta_true
    z = eta @ lambda_true.T + rng.standard_normal((n_rows, n_out))

    values = np.empty((n_rows, n_out))
    cutoffs = []
    for j in range(n_out):
        col = z[:, j]
        cuts = np.sort(rng.uniform(col.min(), col.max(), size=counts[j]))
        cutoffs.append(cuts)
        values[:, j] = np.searchsorted(cuts, col)
    y = MixedOutcomeMatrix.from_values(values, column_names=column_names)
    truth = GroundTruth(eta=eta, z=z, lambda_true=lambda_true,
                        cutoffs=tuple(cutoffs), beta_true=beta_true, x=x,
                        seed=seed)
    return y, truth


def ground_truth_record(truth: GroundTruth, mask: np.ndarray) -> dict:
    """JSON-ready sidecar with the pieces recovery scoring needs."""
    return {
        "lambda_true": truth.lambda_true.tolist(),
        "mask": np.asarray(mask, dtype=int).tolist(),
        "beta_true": None if truth.beta_true is None else truth.beta_true.tolist(),
        "cutoffs": [c.tolist() for c in truth.cutoffs],
        "seed": truth.seed,
        "n_rows": int(truth.eta.shape[0]),
    }
