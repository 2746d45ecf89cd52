"""Mixed-outcome data handling and the rank-consistency machinery.

Only the within-column orderings of the observed responses enter the model,
so ingestion validates orderings rather than outcome types.  Missing cells
are carried as unconstrained latent responses and imputed during sampling,
an extension beyond complete-case analysis; see README.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata


class DataError(ValueError):
    """Raised for unusable input data (parse failures, constant columns)."""


class RankBounds(NamedTuple):
    lower: float
    upper: float


@dataclass(frozen=True)
class MixedOutcomeMatrix:
    """Observed responses with missingness mask and per-column value support.

    ``values`` is I x J float64 with NaN at missing cells, ``missing`` the
    matching boolean mask.  ``distinct_values[j]`` holds the strictly
    increasing observed values of column j; ``level_codes`` maps each cell to
    its index in that sequence (-1 for missing).
    """

    values: np.ndarray
    missing: np.ndarray
    column_names: tuple
    distinct_values: tuple
    level_codes: np.ndarray = field(repr=False, default=None)
    n_levels: np.ndarray = field(repr=False, default=None)

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values, missing=None, column_names=None):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError("outcome matrix must be two-dimensional")
        if missing is None:
            missing = np.isnan(values)
        else:
            missing = np.array(missing, dtype=bool)
            values = values.copy()
            values[missing] = np.nan
        if column_names is None:
            column_names = tuple(f"y{j+1}" for j in range(values.shape[1]))
        else:
            column_names = tuple(str(c) for c in column_names)
        if len(column_names) != values.shape[1]:
            raise DataError("column_names length does not match column count")

        n_rows, n_cols = values.shape
        distinct = []
        level_codes = np.full((n_rows, n_cols), -1, dtype=np.int64)
        n_levels = np.empty(n_cols, dtype=np.int64)
        bad = []
        for j in range(n_cols):
            obs = ~missing[:, j]
            col = values[obs, j]
            if not np.all(np.isfinite(col)):
                raise DataError(f"non-finite value in column '{column_names[j]}'")
            uniq = np.unique(col)
            if uniq.size < 2:
                bad.append(column_names[j])
                distinct.append(uniq)
                continue
            distinct.append(uniq)
            level_codes[obs, j] = np.searchsorted(uniq, col)
            n_levels[j] = uniq.size
        if bad:
            raise DataError(
                "constant column (fewer than 2 distinct observed values): "
                + ", ".join(bad)
            )
        return cls(values=values, missing=missing, column_names=column_names,
                   distinct_values=tuple(distinct), level_codes=level_codes,
                   n_levels=n_levels)


def load_csv(path, missing_token="NA"):
    """Read a comma-delimited outcome file (UTF-8, header row) into a
    :class:`MixedOutcomeMatrix`.

    Cells equal to ``missing_token`` become missing; everything else must
    parse as a finite real.  Parse failures report the offending row and
    column, and columns with fewer than two distinct observed values are
    rejected.
    """
    import csv

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
            # tolerate a leading '#' metadata comment (our own writers emit one)
            while header and header[0].lstrip().startswith("#"):
                header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}")
        rows = list(reader)
    if not rows:
        raise DataError(f"no data rows in {path}")
    header = [h.strip() for h in header]
    n_cols = len(header)
    values = np.empty((len(rows), n_cols), dtype=np.float64)
    missing = np.zeros((len(rows), n_cols), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != n_cols:
            raise DataError(f"row {i + 2}: expected {n_cols} cells, got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing_token or cell == "":
                missing[i, j] = True
                values[i, j] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"unparseable cell at row {i + 2}, column '{header[j]}': {cell!r}")
            if not np.isfinite(v):
                raise DataError(f"non-finite cell at row {i + 2}, column '{header[j]}'")
            values[i, j] = v
    return MixedOutcomeMatrix.from_values(values, missing=missing, column_names=header)


def rank_bounds(y: MixedOutcomeMatrix, z: np.ndarray, i: int, j: int) -> RankBounds:
    """Truncation interval for latent response (i, j) given the rest of Z.

    Lower bound is the largest latent response among cells of column j with a
    smaller observed value, upper bound the smallest among cells with a larger
    observed value; ties and missing cells impose no constraint.
    """
    if y.missing[i, j]:
        return RankBounds(-np.inf, np.inf)
    col_y = y.values[:, j]
    obs = ~y.missing[:, j]
    yij = col_y[i]
    below = obs & (col_y < yij)
    above = obs & (col_y > yij)
    lower = np.max(z[below, j]) if below.any() else -np.inf
    upper = np.min(z[above, j]) if above.any() else np.inf
    return RankBounds(float(lower), float(upper))


def normal_score_init(y: MixedOutcomeMatrix, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Latent responses from van der Waerden normal scores.

    z_ij is the inverse normal CDF of (mid-rank of y_ij)/(n_obs + 1), with
    ranks tied cells averaged, so the result lies in the rank-consistent set
    from the first iteration.  Missing cells get standard normal draws.
    """
    if rng is None:
        rng = np.random.default_rng()
    z = np.empty_like(y.values)
    for j in range(y.n_cols):
        obs = ~y.missing[:, j]
        col = y.values[obs, j]
        ranks = rankdata(col, method="average")
        z[obs, j] = ndtri(ranks / (col.size + 1))
        n_miss = int((~obs).sum())
        if n_miss:
            z[~obs, j] = rng.standard_normal(n_miss)
    return z


def in_rank_set(y: MixedOutcomeMatrix, z: np.ndarray) -> bool:
    """Exhaustive check that Z respects every within-column observed ordering."""
    for j in range(y.n_cols):
        obs = np.flatnonzero(~y.missing[:, j])
        col_y = y.values[obs, j]
        col_z = z[obs, j]
        order = np.argsort(col_y, kind="stable")
        col_y = col_y[order]
        col_z = col_z[order]
        for a in range(len(obs)):
            for b in range(a + 1, len(obs)):
                if col_y[a] < col_y[b] and not (col_z[a] < col_z[b]):
                    return False
    return True
