"""Posterior predictive checks from replicated data.

Replicates are drawn one per posterior draw: a new latent-response row comes
from N(0, I + Lambda Lambda^T) and is pushed through the empirical link of
the same-iteration latent snapshot, which propagates marginal-distribution
uncertainty into the replicate.  Three check statistics are provided:
per-value marginal counts, leading eigenvalues of the rank (Spearman)
correlation matrix, and all pairwise Kendall tau-b values.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import kendalltau, rankdata

from .data import MixedOutcomeMatrix


@dataclass(frozen=True)
class ReplicatedDataset:
    y_rep: np.ndarray
    draw_index: int


def default_continuous_flags(y: MixedOutcomeMatrix, threshold: float = 0.9) -> np.ndarray:
    """A column is treated as continuous when nearly every observed value is
    unique (> threshold * I distinct values); everything else is discrete."""
    n = y.n_rows
    return np.array([dv.size > threshold * n for dv in y.distinct_values])


def _column_link(z_snap_col, y_col, obs_mask):
    zs = z_snap_col[obs_mask]
    ys = y_col[obs_mask]
    order = np.lexsort((ys, zs))
    return zs[order], ys[order]


def _map_replicates(z_rep, zs, ys, continuous: bool):
    # map replicate latent values through the (z, y) pairs of one column
    idx = np.searchsorted(zs, z_rep)
    out = np.empty(z_rep.shape[0])
    below = idx == 0
    above = idx == zs.shape[0]
    out[below] = ys[0]
    out[above] = ys[-1]
    mid = ~(below | above)
    if mid.any():
        li = idx[mid] - 1
        ri = idx[mid]
        zl, zr = zs[li], zs[ri]
        yl, yr = ys[li], ys[ri]
        same = yl == yr
        res = np.empty(li.shape[0])
        res[same] = yl[same]
        rest = ~same
        if continuous:
            width = zr[rest] - zl[rest]
            frac = np.where(width > 0, (z_rep[mid][rest] - zl[rest]) / np.where(width > 0, width, 1.0), 0.0)
            res[rest] = yl[rest] + frac * (yr[rest] - yl[rest])
        else:
            nearer_left = (z_rep[mid][rest] - zl[rest]) <= (zr[rest] - z_rep[mid][rest])
            res[rest] = np.where(nearer_left, yl[rest], yr[rest])
        out[mid] = res
    return out


def _replicate_rows(lambda_m, z_snapshot, y: MixedOutcomeMatrix,
                    continuous, rng, n_rows: int) -> np.ndarray:
    n_out = lambda_m.shape[0]
    cov = np.eye(n_out) + lambda_m @ lambda_m.T
    chol = np.linalg.cholesky(cov)
    z_rep = rng.standard_normal((n_rows, n_out)) @ chol.T
    out = np.empty((n_rows, n_out))
    for j in range(n_out):
        zs, ys = _column_link(z_snapshot[:, j], y.values[:, j], ~y.missing[:, j])
        out[:, j] = _map_replicates(z_rep[:, j], zs, ys, bool(continuous[j]))
    return out


def replicate_observation(draw, z_snapshot, y: MixedOutcomeMatrix,
                          rng: np.random.Generator,
                          continuous: Optional[np.ndarray] = None) -> np.ndarray:
    """One replicated response row on the observed scale.

    A replicate latent value falling strictly between two latent responses
    that share an observed value takes that value; between differing values
    the nearest latent response wins (columns flagged continuous interpolate
    linearly); outside the latent range the boundary observed value is used.
    """
    lam = draw.lambda_ if hasattr(draw, "lambda_") else np.asarray(draw)
    if continuous is None:
        continuous = default_continuous_flags(y)
    return _replicate_rows(lam, z_snapshot, y, continuous, rng, 1)[0]


def replicate_dataset(draw, z_snapshot, y: MixedOutcomeMatrix,
                      rng: np.random.Generator,
                      continuous: Optional[np.ndarray] = None,
                      draw_index: int = 0) -> ReplicatedDataset:
    """I independent replicated rows from one posterior draw."""
    lam = draw.lambda_ if hasattr(draw, "lambda_") else np.asarray(draw)
    if continuous is None:
        continuous = default_continuous_flags(y)
    y_rep = _replicate_rows(lam, z_snapshot, y, continuous, rng, y.n_rows)
    return ReplicatedDataset(y_rep=y_rep, draw_index=draw_index)


def _kendall_pair(x, y_):
    if x.shape[0] < 2:
        return np.nan
    if np.all(x == x[0]) or np.all(y_ == y_[0]):
        return np.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tau = kendalltau(x, y_, variant="b").statistic
    return float(tau)


def kendall_tau_matrix(values, missing=None) -> np.ndarray:
    """Tie-corrected Kendall tau-b for every column pair, pairwise complete.

    Pairs with a zero tie-corrected denominator come back NaN (undefined)
    and are excluded from predictive intervals downstream.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    if missing is None:
        missing = np.isnan(values)
    n_cols = values.shape[1]
    out = np.eye(n_cols)
    for a in range(n_cols):
        for b in range(a + 1, n_cols):
            ok = ~(missing[:, a] | missing[:, b])
            out[a, b] = out[b, a] = _kendall_pair(values[ok, a], values[ok, b])
    return out


def spearman_matrix(values, missing=None) -> np.ndarray:
    """Rank correlation matrix with average ranks for ties.

    NaN marks undefined entries (constant column in the pairwise-complete
    subset).
    """
    values = np.asarray(values, dtype=np.float64)
    n_rows, n_cols = values.shape
    if missing is None:
        missing = np.isnan(values)
    if not missing.any():
        ranks = np.empty_like(values)
        for j in range(n_cols):
            ranks[:, j] = rankdata(values[:, j], method="average")
        dev = ranks - ranks.mean(axis=0)
        scale = np.sqrt((dev * dev).sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = (dev.T @ dev) / np.outer(scale, scale)
        np.fill_diagonal(corr, 1.0)
        return corr
    out = np.eye(n_cols)
    for a in range(n_cols):
        for b in range(a + 1, n_cols):
            ok = ~(missing[:, a] | missing[:, b])
            if ok.sum() < 2:
                out[a, b] = out[b, a] = np.nan
                continue
            ra = rankdata(values[ok, a], method="average")
            rb = rankdata(values[ok, b], method="average")
            da = ra - ra.mean()
            db = rb - rb.mean()
            denom = np.sqrt((da * da).sum() * (db * db).sum())
            out[a, b] = out[b, a] = (da @ db) / denom if denom > 0 else np.nan
    return out


def rank_correlation_eigenvalues(values, top_k: int, missing=None) -> np.ndarray:
    """Leading eigenvalues (descending) of the Spearman matrix."""
    corr = spearman_matrix(values, missing=missing)
    if np.isnan(corr).any():
        raise ValueError("rank correlation undefined (constant column)")
    if not (1 <= top_k <= corr.shape[0]):
        raise ValueError("need J >= top_k >= 1")
    eig = np.linalg.eigvalsh(corr)[::-1]
    return eig[:top_k]


@dataclass
class PpcReport:
    rows: list
    n_replicates: int
    statistics: tuple
    skipped: dict

    def flagged_rows(self):
        return [r for r in self.rows if r["flagged"]]


def _interval_row(stat_id, observed, reps):
    reps = np.asarray(reps, dtype=np.float64)
    q025, q975 = np.quantile(reps, [0.025, 0.975])
    if np.isnan(observed):
        flagged = False
    else:
        flagged = bool(observed < q025 or observed > q975)
    return {
        "stat_id": stat_id,
        "observed": None if np.isnan(observed) else float(observed),
        "rep_mean": float(reps.mean()),
        "rep_q025": float(q025),
        "rep_q975": float(q975),
        "flagged": flagged,
        "n_replicates": int(reps.shape[0]),
    }


def ppc_report(lambdas, z_snapshots, y: MixedOutcomeMatrix,
               statistics: Sequence[str] = ("marginals", "eigenvalues", "tau"),
               n_replicates: int = 200, top_k: int = 10,
               continuous: Optional[np.ndarray] = None,
               seed: int = 0) -> PpcReport:
    """Observed value, replicate mean and equal-tailed 95% interval for every
    requested statistic; observed values outside their interval are flagged.

    ``lambdas`` is M x J x Q; ``z_snapshots`` must be indexable by draw and
    aligned with it (same iteration).  Replicate draws are spread evenly
    over the chain.
    """
    statistics = tuple(statistics)
    unknown = set(statistics) - {"marginals", "eigenvalues", "tau"}
    if unknown:
        raise ValueError(f"unknown statistics: {sorted(unknown)}")
    n_draws = len(z_snapshots)
    if lambdas.shape[0] != n_draws:
        raise ValueError("draws and latent snapshots are not aligned")
    if not (1 <= n_replicates <= n_draws):
        raise ValueError(
            f"n_replicates must lie in [1, {n_draws}] (available draws)")
    if continuous is None:
        continuous = default_continuous_flags(y)
    rng = np.random.default_rng(seed)
    indices = np.floor(np.arange(n_replicates) * n_draws / n_replicates).astype(int)

    do_marg = "marginals" in statistics
    do_eig = "eigenvalues" in statistics
    do_tau = "tau" in statistics
    n_cols = y.n_cols
    if do_eig and not (1 <= top_k <= n_cols):
        raise ValueError("need J >= top_k >= 1")

    marg_counts = []
    eig_reps = []
    tau_reps = []
    skipped = {"eigenvalues": 0}
    for m in indices:
        rep = _replicate_rows(lambdas[m], z_snapshots[m], y, continuous, rng, y.n_rows)
        if do_marg:
            counts = []
            for j in range(n_cols):
                if continuous[j]:
                    continue
                dv = y.distinct_values[j]
                pos = np.searchsorted(dv, rep[:, j])
                pos = np.clip(pos, 0, dv.size - 1)
                hits = dv[pos] == rep[:, j]
                counts.append(np.bincount(pos[hits], minlength=dv.size))
            marg_counts.append(counts)
        if do_eig:
            try:
                eig_reps.append(rank_correlation_eigenvalues(rep, top_k))
            except ValueError:
                skipped["eigenvalues"] += 1
        if do_tau:
            tau_reps.append(kendall_tau_matrix(rep, missing=np.zeros_like(rep, dtype=bool)))

    rows = []
    if do_marg:
        col_pos = 0
        for j in range(n_cols):
            if continuous[j]:
                continue
            dv = y.distinct_values[j]
            obs_counts = np.bincount(y.level_codes[~y.missing[:, j], j], minlength=dv.size)
            reps = np.stack([marg_counts[r][col_pos] for r in range(len(marg_counts))])
            for v in range(dv.size):
                rows.append(_interval_row(
                    f"marginal.{y.column_names[j]}.{dv[v]:g}",
                    float(obs_counts[v]), reps[:, v]))
            col_pos += 1
    if do_eig:
        if not eig_reps:
            raise ValueError("all replicates had undefined rank correlations")
        obs_eig = rank_correlation_eigenvalues(y.values, top_k, missing=y.missing)
        reps = np.stack(eig_reps)
        for k in range(top_k):
            rows.append(_interval_row(f"eig.{k + 1}", float(obs_eig[k]), reps[:, k]))
    if do_tau:
        obs_tau = kendall_tau_matrix(y.values, missing=y.missing)
        reps = np.stack(tau_reps)
        for a in range(n_cols):
            for b in range(a + 1, n_cols):
                pair = reps[:, a, b]
                ok = ~np.isnan(pair)
                stat_id = f"tau.{y.column_names[a]}.{y.column_names[b]}"
                if not ok.any():
                    skipped[stat_id] = int(pair.shape[0])
                    continue
                if (~ok).any():
                    skipped[stat_id] = int((~ok).sum())
                rows.append(_interval_row(stat_id, obs_tau[a, b], pair[ok]))
    return PpcReport(rows=rows, n_replicates=n_replicates,
                     statistics=statistics, skipped=skipped)
