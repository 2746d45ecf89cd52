"""Fit-directory layout and draw-log formats.

A fit directory contains::

    draws.csv        one row per kept draw; columns are scalar parameters
                     (lambda.<j>.<q> free loadings on the identified scale
                     after relabeling, beta.<p>, alpha, psi2.<q>, sigma2.<j>)
    draws_z.npy      float32 (draws, I, J) latent responses, identified scale
    draws_h.npy      float32 (draws, I, Q) factor scores, relabeled
    summary.json     posterior summaries of the relabeled draws
    signs.json       per-draw sign flips and the global column convention
    diagnostics.json ESS / Geweke / autocorrelation per parameter
    meta.json        tool version, seed, resolved config and its hash
    ppc.json / ppc_plot.csv   written by the ppc command

CSV files open with a single '#' metadata comment line (tool version, seed,
config hash, format version).  All outputs are byte-reproducible for a given
seed, flags, and build: no timestamps are recorded.
"""

import csv
import hashlib
import json
import os
from typing import Optional

import numpy as np

from . import __version__

DRAWS_FORMAT_VERSION = 1


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def meta_comment(seed, digest) -> str:
    return (f"# rankfactor {__version__} draws-format={DRAWS_FORMAT_VERSION} "
            f"seed={seed} config=sha256:{digest[:16]}")


def write_draws_csv(path, names, columns, seed, digest):
    """One row per kept draw; ``columns`` is a same-length list of 1-D arrays."""
    n_draws = columns[0].shape[0]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta_comment(seed, digest) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["draw"] + list(names))
        for m in range(n_draws):
            writer.writerow([m] + [f"{col[m]:.17g}" for col in columns])


def read_draws_csv(path):
    """Returns (parameter names, draws x params float array)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    names = header[1:]
    data = np.array([[float(c) for c in row[1:]] for row in rows])
    return names, data


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_plot_csv(path, rows, seed, digest):
    """Plot-ready PPC rows: stat_id, observed, rep_mean, rep_q025, rep_q975, flagged."""
    fields = ["stat_id", "observed", "rep_mean", "rep_q025", "rep_q975", "flagged"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta_comment(seed, digest) + "\n")
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            obs = "" if row["observed"] is None else f"{row['observed']:.17g}"
            writer.writerow([
                row["stat_id"], obs,
                f"{row['rep_mean']:.17g}", f"{row['rep_q025']:.17g}",
                f"{row['rep_q975']:.17g}", int(row["flagged"]),
            ])


def fit_paths(fit_dir):
    return {
        "draws": os.path.join(fit_dir, "draws.csv"),
        "latent_z": os.path.join(fit_dir, "draws_z.npy"),
        "latent_h": os.path.join(fit_dir, "draws_h.npy"),
        "summary": os.path.join(fit_dir, "summary.json"),
        "signs": os.path.join(fit_dir, "signs.json"),
        "diagnostics": os.path.join(fit_dir, "diagnostics.json"),
        "meta": os.path.join(fit_dir, "meta.json"),
        "ppc": os.path.join(fit_dir, "ppc.json"),
        "ppc_plot": os.path.join(fit_dir, "ppc_plot.csv"),
    }


def draw_log_columns(chain, relabeled_lambda, betas, mask):
    """Column names and arrays for the draw log."""
    names = []
    columns = []
    n_out, n_fac = mask.shape
    for j in range(n_out):
        for q in range(n_fac):
            if mask[j, q]:
                names.append(f"lambda.{j}.{q}")
                columns.append(relabeled_lambda[:, j, q])
    if betas is not None:
        for p in range(betas.shape[1]):
            names.append(f"beta.{p}")
            columns.append(betas[:, p])
    names.append("alpha")
    columns.append(chain.alpha)
    for q in range(n_fac):
        names.append(f"psi2.{q}")
        columns.append(chain.psi2[:, q])
    for j in range(n_out):
        names.append(f"sigma2.{j}")
        columns.append(chain.sigma2[:, j])
    return names, columns


def write_fit_dir(fit_dir, chain, relabel_result, betas, summary_rows,
                  diag_report, meta: dict,
                  latent_z: Optional[np.ndarray] = None):
    """Write every fit artifact (except the PPC pair) into ``fit_dir``."""
    os.makedirs(fit_dir, exist_ok=True)
    paths = fit_paths(fit_dir)
    digest = config_digest(meta.get("config", {}))
    meta = dict(meta)
    meta["tool"] = "rankfactor"
    meta["version"] = __version__
    meta["config_sha256"] = digest
    meta["formats"] = {"draws_csv": DRAWS_FORMAT_VERSION, "latent_npy": 1}
    seed = meta.get("config", {}).get("seed")

    mask = chain.structure.mask
    names, columns = draw_log_columns(chain, relabel_result.lambda_, betas, mask)
    write_draws_csv(paths["draws"], names, columns, seed, digest)

    if latent_z is None:
        latent_z = np.empty(chain.z_star.shape, dtype=np.float32)
        for m in range(chain.n_draws):
            latent_z[m] = chain.inferential_z(m)
    np.save(paths["latent_z"], latent_z)
    h32 = relabel_result.h.astype(np.float32) if relabel_result.h is not None else \
        chain.h_star.astype(np.float32)
    np.save(paths["latent_h"], h32)

    base_meta = {"tool": "rankfactor", "version": __version__,
                 "seed": seed, "config_sha256": digest}
    write_json(paths["summary"], {"meta": base_meta, "parameters": summary_rows})
    write_json(paths["signs"], {
        "meta": base_meta,
        "per_draw_flips": relabel_result.flips.tolist(),
        "convention_flips": relabel_result.convention_flips.tolist(),
        "n_iterations": relabel_result.n_iterations,
        "loss_history": relabel_result.loss_history,
    })
    write_json(paths["diagnostics"], {"meta": base_meta, "parameters": diag_report})
    write_json(paths["meta"], meta)
    return paths
