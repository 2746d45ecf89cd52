"""Chain-quality diagnostics: autocorrelation, ESS, Geweke z-scores.

The integrated autocorrelation time uses Geyer's initial monotone sequence:
autocovariances are summed in adjacent pairs, truncated at the first
nonpositive pair, with the pair sums forced nonincreasing.  The same
truncated estimator provides the spectral variance inside the Geweke test.
"""

from typing import Optional

import numpy as np


class ZeroVarianceError(ValueError):
    """Chain (or window) has no variance; the diagnostic is undefined."""


def _require_variation(x: np.ndarray, what: str = "chain"):
    # exact check: the float mean of a constant chain is not exactly the
    # constant, so a variance threshold alone is unreliable
    if x.shape[0] == 0 or np.all(x == x[0]):
        raise ZeroVarianceError(f"zero variance {what}")


def _autocovariances(dev: np.ndarray, max_lag: int) -> np.ndarray:
    # biased (1/n) normalizer at every lag
    n = dev.shape[0]
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = np.dot(dev[: n - k], dev[k:]) / n
    return out


def autocorrelation(chain, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 0..max_lag (lag 0 is exactly 1)."""
    x = np.asarray(chain, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    if not (1 <= max_lag < x.shape[0]):
        raise ValueError("need chain length > max_lag >= 1")
    _require_variation(x)
    dev = x - np.mean(x)
    gamma = _autocovariances(dev, max_lag)
    if gamma[0] <= 0.0:
        raise ZeroVarianceError("zero variance chain")
    rho = gamma / gamma[0]
    rho[0] = 1.0
    return rho


def _monotone_pair_tau(dev: np.ndarray) -> float:
    """Integrated autocorrelation time via initial-monotone pair sums.

    Returns tau = 1 + 2 * sum_k rho_k under the truncation rule; may be
    nonpositive for strongly antithetic chains (callers clip).
    """
    n = dev.shape[0]
    gamma0 = np.dot(dev, dev) / n
    if gamma0 <= 0.0:
        raise ZeroVarianceError("zero variance chain")

    def gamma(k):
        if k >= n:
            return 0.0
        return np.dot(dev[: n - k], dev[k:]) / n

    total = 0.0
    prev_pair = np.inf
    m = 0
    while True:
        pair = gamma(2 * m) + gamma(2 * m + 1)
        if pair <= 0.0:
            break
        if pair > prev_pair:
            pair = prev_pair
        total += pair
        prev_pair = pair
        m += 1
        if 2 * m >= n:
            break
    return -1.0 + 2.0 * total / gamma0


def effective_sample_size(chain) -> float:
    """n / (1 + 2 sum rho_k) with monotone-pair truncation, clipped to [1, n]."""
    x = np.asarray(chain, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    n = x.shape[0]
    if n < 100:
        raise ValueError("need at least 100 draws for a stable ESS")
    _require_variation(x)
    dev = x - np.mean(x)
    tau = _monotone_pair_tau(dev)
    if tau <= 0.0:
        return float(n)
    return float(min(max(n / tau, 1.0), n))


def _spectral_variance(window: np.ndarray) -> float:
    # spectral density at frequency zero over window length
    _require_variation(window, "window")
    n = window.shape[0]
    dev = window - np.mean(window)
    gamma0 = np.dot(dev, dev) / n
    if gamma0 <= 0.0:
        raise ZeroVarianceError("zero variance window")
    tau = _monotone_pair_tau(dev)
    tau = max(tau, 1.0 / n)
    return gamma0 * tau / n


def geweke(chain, frac_a: float = 0.1, frac_b: float = 0.5) -> float:
    """Z-score comparing the means of the first frac_a and last frac_b of the
    chain, with spectral variance estimates in each window."""
    x = np.asarray(chain, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("chain must be one-dimensional")
    n = x.shape[0]
    if n < 200:
        raise ValueError("need at least 200 draws for the Geweke diagnostic")
    if not (0 < frac_a < 1 and 0 < frac_b < 1 and frac_a + frac_b <= 1):
        raise ValueError("window fractions must be in (0, 1) and not overlap")
    n_a = int(np.floor(frac_a * n))
    n_b = int(np.floor(frac_b * n))
    win_a = x[:n_a]
    win_b = x[n - n_b:]
    var = _spectral_variance(win_a) + _spectral_variance(win_b)
    return float((np.mean(win_a) - np.mean(win_b)) / np.sqrt(var))


def diagnostics_report(chains: dict, max_lag: int = 20,
                       geweke_min: int = 200) -> dict:
    """Per-parameter {ess, geweke_z, rho} dict; degenerate chains are flagged
    rather than raised."""
    report = {}
    for name, chain in chains.items():
        chain = np.asarray(chain, dtype=np.float64)
        entry: dict = {"n_draws": int(chain.shape[0])}
        try:
            entry["ess"] = effective_sample_size(chain)
            lag = min(max_lag, chain.shape[0] - 1)
            entry["rho"] = autocorrelation(chain, lag).tolist()
            if chain.shape[0] >= geweke_min:
                entry["geweke_z"] = geweke(chain)
            else:
                entry["geweke_z"] = None
        except ZeroVarianceError:
            entry["error"] = "zero variance"
        report[name] = entry
    return report


def format_diagnostics_table(report: dict,
                             reference: Optional[dict] = None) -> str:
    """Text table; with a reference report, adds an ESS ratio column."""
    headers = ["parameter", "ess", "geweke_z"]
    if reference is not None:
        headers += ["ess_ref", "ess_ratio"]
    rows = [headers]
    for name, entry in report.items():
        if "error" in entry:
            row = [name, entry["error"], "-"]
            if reference is not None:
                row += ["-", "-"]
            rows.append(row)
            continue
        gz = entry.get("geweke_z")
        row = [name, f"{entry['ess']:.1f}", "-" if gz is None else f"{gz: .3f}"]
        if reference is not None:
            ref = reference.get(name, {})
            if "ess" in ref and ref["ess"] > 0:
                row += [f"{ref['ess']:.1f}", f"{entry['ess'] / ref['ess']:.2f}"]
            else:
                row += ["-", "-"]
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(headers))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
