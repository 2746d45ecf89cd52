"""Transform working-model draws to the identified scale and fix reflections.

Reflection invariance lets every factor column switch sign without changing
the likelihood, so raw chains can mix over mirrored modes.  Relabeling picks
per-draw column signs by minimizing squared Frobenius distance to a running
mean reference, iterating until the flip assignment is stable; the loss is
non-increasing so the iteration terminates.  A final deterministic convention
makes each column's largest-magnitude mean loading positive.

Regression coefficients are never sign-flipped; their reported sign is
relative to the post-relabeling orientation of factor 1, and the sign log
records every flip so users can re-orient (beta co-varies with factor 1's
reflection during sampling).
"""

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import InferentialDraw, WorkingState
from .sampler import ChainOutput


def to_inferential(state: WorkingState, regression_enabled: bool = False) -> InferentialDraw:
    """Map one working-model state to the identified parameterization.

    Loadings are rescaled by sqrt(psi2/sigma2), factor scores by 1/sqrt(psi2)
    after removing the location working parameter from the primary column,
    and coefficients by 1/sqrt(psi2[0]).
    """
    psi_sqrt = np.sqrt(state.psi2)
    sig_inv_sqrt = 1.0 / np.sqrt(state.sigma2)
    lam = sig_inv_sqrt[:, None] * state.lambda_star * psi_sqrt[None, :]
    h = state.h_star.copy()
    if regression_enabled:
        h[:, 0] -= state.alpha
    h /= psi_sqrt[None, :]
    beta = None
    if regression_enabled:
        beta = state.beta_star / psi_sqrt[0]
    return InferentialDraw(lambda_=lam, h=h, beta=beta)


@dataclass
class InferentialArrays:
    """Stacked inferential draws for a whole chain."""

    lambda_: np.ndarray          # M x J x Q
    h: np.ndarray                # M x I x Q
    beta: Optional[np.ndarray]   # M x P


def chain_to_inferential(chain: ChainOutput) -> InferentialArrays:
    psi_sqrt = np.sqrt(chain.psi2)                      # M x Q
    sig_inv_sqrt = 1.0 / np.sqrt(chain.sigma2)          # M x J
    lam = sig_inv_sqrt[:, :, None] * chain.lambda_star * psi_sqrt[:, None, :]
    h = chain.h_star.copy()
    beta = None
    if chain.regression_enabled:
        h[:, :, 0] -= chain.alpha[:, None]
        beta = chain.beta_star / psi_sqrt[:, [0]]
    h /= psi_sqrt[:, None, :]
    return InferentialArrays(lambda_=lam, h=h, beta=beta)


@dataclass
class RelabelResult:
    lambda_: np.ndarray            # relabeled M x J x Q
    h: Optional[np.ndarray]        # relabeled M x I x Q (if provided)
    flips: np.ndarray              # M x Q of +-1, total flip applied per draw
    convention_flips: np.ndarray   # Q of +-1, final global column signs
    loss_history: list             # squared Frobenius loss per iteration
    n_iterations: int


def relabel_arrays(lambdas: np.ndarray, hs: Optional[np.ndarray] = None,
                   max_iterations: int = 1000) -> RelabelResult:
    """Iterative sign relabeling on stacked loading draws.

    Each pass flips draw columns toward the element-wise mean reference (a
    column flips exactly when it is closer to the reference negated) and
    recomputes the reference; both half-steps minimize the same squared loss,
    so it never increases.
    """
    if lambdas.ndim != 3:
        raise ValueError("expected draws stacked as M x J x Q")
    if lambdas.shape[0] < 2:
        raise ValueError("need at least 2 draws to relabel")
    lam = lambdas.copy()
    n_draws, _, n_factors = lam.shape
    signs = np.ones((n_draws, n_factors))
    loss_history = []
    n_iter = 0
    # seed by aligning every draw to the first one: the raw mean is a
    # degenerate (zero) reference when reflections are perfectly balanced
    seed_dots = np.einsum("mjq,jq->mq", lam, lam[0])
    seed_flip = np.where(seed_dots < 0.0, -1.0, 1.0)
    lam *= seed_flip[:, None, :]
    signs *= seed_flip
    for n_iter in range(1, max_iterations + 1):
        ref = lam.mean(axis=0)
        dots = np.einsum("mjq,jq->mq", lam, ref)
        flip = dots < 0.0
        if flip.any():
            step = np.where(flip, -1.0, 1.0)
            lam *= step[:, None, :]
            signs *= step
            ref = lam.mean(axis=0)
        loss_history.append(float(((lam - ref[None]) ** 2).sum()))
        if not flip.any():
            break
    else:
        warnings.warn("relabeling did not stabilize; returning last assignment")

    mean = lam.mean(axis=0)
    convention = np.ones(n_factors)
    for q in range(n_factors):
        anchor = int(np.argmax(np.abs(mean[:, q])))
        if mean[anchor, q] < 0:
            convention[q] = -1.0
    lam *= convention[None, None, :]
    signs *= convention[None, :]

    h_out = None
    if hs is not None:
        h_out = hs * signs[:, None, :]
    return RelabelResult(
        lambda_=lam,
        h=h_out,
        flips=signs.astype(np.int8),
        convention_flips=convention.astype(np.int8),
        loss_history=loss_history,
        n_iterations=n_iter,
    )


def relabel_signs(draws: Sequence[InferentialDraw],
                  max_iterations: int = 1000) -> Tuple[List[InferentialDraw], RelabelResult]:
    """Relabel a sequence of draws; returns the new sequence plus the sign log."""
    if len(draws) < 2:
        raise ValueError("need at least 2 draws to relabel")
    shapes = {d.lambda_.shape for d in draws}
    if len(shapes) != 1:
        raise ValueError("draws disagree on loading dimensions")
    zero_patterns = {tuple(map(tuple, (d.lambda_ == 0.0))) for d in draws}
    if len(zero_patterns) > 1:
        raise ValueError("draws disagree on the structural-zero pattern")
    lambdas = np.stack([d.lambda_ for d in draws])
    hs = np.stack([d.h for d in draws])
    result = relabel_arrays(lambdas, hs, max_iterations=max_iterations)
    relabeled = [
        InferentialDraw(lambda_=result.lambda_[m], h=result.h[m], beta=draws[m].beta)
        for m in range(len(draws))
    ]
    return relabeled, result


def _summary_row(name: str, chain: np.ndarray, **extra) -> dict:
    q025, median, q975 = np.quantile(chain, [0.025, 0.5, 0.975])
    row = {
        "parameter": name,
        "mean": float(np.mean(chain)),
        "median": float(median),
        "q2.5": float(q025),
        "q97.5": float(q975),
    }
    row.update(extra)
    return row


def summarize_arrays(lambdas: np.ndarray, betas: Optional[np.ndarray] = None,
                     mask: Optional[np.ndarray] = None,
                     column_names: Optional[Sequence[str]] = None,
                     covariate_names: Optional[Sequence[str]] = None) -> List[dict]:
    """Posterior mean / median / equal-tailed 95% interval per scalar."""
    n_draws, n_out, n_fac = lambdas.shape
    if mask is None:
        mask = np.ones((n_out, n_fac), dtype=bool)
    rows = []
    for j in range(n_out):
        for q in range(n_fac):
            if not mask[j, q]:
                continue
            extra = {}
            if column_names is not None:
                extra["column"] = str(column_names[j])
            rows.append(_summary_row(f"lambda.{j}.{q}", lambdas[:, j, q], **extra))
    if betas is not None:
        for p in range(betas.shape[1]):
            extra = {}
            if covariate_names is not None:
                extra["covariate"] = str(covariate_names[p])
            rows.append(_summary_row(f"beta.{p}", betas[:, p], **extra))
    return rows


def summarize(draws: Sequence[InferentialDraw],
              mask: Optional[np.ndarray] = None,
              column_names: Optional[Sequence[str]] = None,
              covariate_names: Optional[Sequence[str]] = None) -> List[dict]:
    """Summary table over a sequence of (relabeled) draws."""
    if len(draws) == 0:
        raise ValueError("empty draw sequence")
    lambdas = np.stack([d.lambda_ for d in draws])
    betas = None
    if draws[0].beta is not None:
        betas = np.stack([d.beta for d in draws])
    return summarize_arrays(lambdas, betas, mask=mask, column_names=column_names,
                            covariate_names=covariate_names)


def format_summary_table(rows: List[dict]) -> str:
    """Aligned text rendering of a summary table."""
    headers = ["parameter", "mean", "median", "q2.5", "q97.5"]
    cells = [headers]
    for row in rows:
        cells.append([
            str(row["parameter"]),
            f"{row['mean']: .4f}",
            f"{row['median']: .4f}",
            f"{row['q2.5']: .4f}",
            f"{row['q97.5']: .4f}",
        ])
    widths = [max(len(r[c]) for r in cells) for c in range(len(headers))]
    lines = []
    for r, row in enumerate(cells):
        lines.append("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
