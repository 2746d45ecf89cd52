"""Command-line interface: simulate / fit / ppc / diagnose.

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 4 numerical
failure.  Heavy imports happen inside the subcommands so that --threads can
cap the numeric thread pools before numpy and numba load.
"""

import argparse
import csv
import fnmatch
import os
import sys

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def _parse_cutoffs(text, n_cols):
    import numpy as np
    from .simulate import BENCHMARK_CUTOFF_COUNTS

    if text == "benchmark":
        if n_cols != len(BENCHMARK_CUTOFF_COUNTS):
            raise CliError("benchmark cutoffs are defined for 15 outcomes")
        return np.array(BENCHMARK_CUTOFF_COUNTS)
    parts = [p for p in text.split(",") if p.strip()]
    try:
        counts = [int(p) for p in parts]
    except ValueError:
        raise CliError(f"--cutoffs must be integers, got {text!r}")
    if len(counts) == 1:
        return np.full(n_cols, counts[0])
    if len(counts) != n_cols:
        raise CliError(f"--cutoffs needs 1 or {n_cols} values, got {len(counts)}")
    return np.array(counts)


def _load_spec(path):
    from .data import DataError
    from .model import load_model_spec

    if not os.path.exists(path):
        raise CliError(f"model spec not found: {path}", EXIT_IO)
    try:
        return load_model_spec(path)
    except DataError as exc:
        raise CliError(f"invalid model spec: {exc}")


def _write_outcome_csv(path, y_values, column_names, meta_line):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(meta_line + "\n")
        writer = csv.writer(fh)
        writer.writerow(column_names)
        for row in y_values:
            writer.writerow([f"{v:.17g}" for v in row])


def cmd_simulate(args):
    import numpy as np

    from . import __version__
    from .model import validate_structure
    from .simulate import generate_bifactor_data, ground_truth_record
    from .storage import config_digest, write_json

    if args.i <= 0:
        raise CliError("I must be positive")
    spec = _load_spec(args.spec)
    report = validate_structure(spec.structure)
    if not report.ok:
        raise CliError(str(report))
    n_cols = spec.structure.n_outcomes
    cutoffs = _parse_cutoffs(args.cutoffs, n_cols)
    lambda_true = np.where(spec.structure.mask, args.loading, 0.0)

    x = None
    beta_true = None
    if args.beta:
        beta_true = np.array([float(b) for b in args.beta.split(",")])
        cov_rng = np.random.default_rng(int(args.seed) + 1)
        x = cov_rng.standard_normal((args.i, beta_true.shape[0]))
        x = (x - x.mean(axis=0)) / x.std(axis=0)

    y, truth = generate_bifactor_data(
        args.i, spec.structure, lambda_true, cutoffs,
        x=x, beta_true=beta_true, seed=int(args.seed))

    config = {"command": "simulate", "spec": os.path.abspath(args.spec),
              "i": args.i, "seed": int(args.seed),
              "cutoffs": cutoffs.tolist(), "loading": args.loading,
              "beta": None if beta_true is None else beta_true.tolist()}
    digest = config_digest(config)
    meta_line = (f"# rankfactor {__version__} simulate seed={args.seed} "
                 f"config=sha256:{digest[:16]}")
    _write_outcome_csv(args.out, y.values, y.column_names, meta_line)
    truth_path = args.truth_out or (os.path.splitext(args.out)[0] + ".truth.json")
    record = ground_truth_record(truth, spec.structure.mask)
    record["meta"] = {"tool": "rankfactor", "version": __version__,
                      "config": config, "config_sha256": digest}
    write_json(truth_path, record)
    if x is not None:
        cov_path = args.covariates_out or (os.path.splitext(args.out)[0] + ".covariates.csv")
        names = [f"x{p + 1}" for p in range(x.shape[1])]
        _write_outcome_csv(cov_path, x, names, meta_line)
    print(f"wrote {args.out} ({args.i} x {n_cols}) and {truth_path}")
    return 0


def _load_covariates(path, covariate_columns, n_rows):
    import numpy as np

    from .data import DataError, load_csv

    if not os.path.exists(path):
        raise CliError(f"covariate file not found: {path}", EXIT_IO)
    try:
        # reuse the outcome reader for parsing; covariates may not be constant
        # columns either, which is fine for standardized regressors
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            while header and header[0].lstrip().startswith("#"):
                header = next(reader)
            header = [h.strip() for h in header]
            rows = [[float(c) for c in row] for row in reader]
    except (ValueError, StopIteration) as exc:
        raise CliError(f"cannot parse covariates: {exc}")
    x = np.array(rows, dtype=np.float64)
    if x.shape[0] != n_rows:
        raise CliError(
            f"covariates have {x.shape[0]} rows but the data has {n_rows}")
    if covariate_columns:
        missing = [c for c in covariate_columns if c not in header]
        if missing:
            raise CliError(f"covariate columns not in file: {missing}")
        idx = [header.index(c) for c in covariate_columns]
        x = x[:, idx]
        header = list(covariate_columns)
    if np.isnan(x).any():
        raise CliError("missing covariate entries are not supported")
    return x, tuple(header)


def cmd_fit(args):
    from .data import DataError, load_csv
    from .diagnostics import diagnostics_report, format_diagnostics_table
    from .model import RegressionSpec, model_spec_to_dict
    from .postprocess import (chain_to_inferential, format_summary_table,
                              relabel_arrays, summarize_arrays)
    from .sampler import SamplerConfig, StructureInvalid, run_chain
    from .storage import write_fit_dir

    if not os.path.exists(args.data):
        raise CliError(f"data file not found: {args.data}", EXIT_IO)
    try:
        y = load_csv(args.data, missing_token=args.missing_token)
    except DataError as exc:
        raise CliError(str(exc))
    spec = _load_spec(args.spec)

    regression = None
    if spec.regression_enabled:
        if not args.covariates:
            raise CliError("model spec enables regression; --covariates is required")
        x, names = _load_covariates(args.covariates, spec.covariate_columns, y.n_rows)
        regression = RegressionSpec(x=x, covariate_names=names, enabled=True)

    algorithm = {"px": "parameter_expanded", "standard": "standard_gibbs"}[args.algorithm]
    config = SamplerConfig(n_iterations=args.iters, burn_in=args.burnin,
                           thin=args.thin, seed=int(args.seed),
                           algorithm=algorithm)
    try:
        chain = run_chain(y, spec.structure, hyper=spec.hyper,
                          regression=regression, config=config)
    except StructureInvalid as exc:
        raise CliError(str(exc))

    inf = chain_to_inferential(chain)
    relabeled = relabel_arrays(inf.lambda_, inf.h)
    summary = summarize_arrays(relabeled.lambda_, inf.beta,
                               mask=chain.structure.mask,
                               column_names=y.column_names,
                               covariate_names=chain.covariate_names or None)

    continuous_declared = [str(c) for c in spec.continuous_columns]
    resolved = {
        "command": "fit",
        "data": os.path.abspath(args.data),
        "spec": os.path.abspath(args.spec),
        "covariates": os.path.abspath(args.covariates) if args.covariates else None,
        "n_iterations": config.n_iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "seed": config.seed,
        "algorithm": config.algorithm,
        "model": model_spec_to_dict(spec),
    }
    meta = {
        "command": "fit",
        "config": resolved,
        "data": {"n_rows": y.n_rows, "n_cols": y.n_cols,
                 "column_names": list(y.column_names)},
        "mask": chain.structure.mask.astype(int).tolist(),
        "covariate_names": list(chain.covariate_names),
        "continuous_columns": continuous_declared,
        "n_latent_repairs": chain.n_repairs,
    }

    from .storage import draw_log_columns
    names, columns = draw_log_columns(chain, relabeled.lambda_, inf.beta,
                                      chain.structure.mask)
    diag_chains = {n: c for n, c in zip(names, columns)
                   if n.startswith(("lambda.", "beta."))}
    diag = diagnostics_report(diag_chains)

    paths = write_fit_dir(args.out_dir, chain, relabeled, inf.beta, summary,
                          diag, meta)
    print(format_summary_table(summary))
    print()
    print(format_diagnostics_table(diag))
    print(f"\nfit artifacts in {args.out_dir}")
    return 0


def _load_fit_dir(fit_dir):
    from .storage import fit_paths, read_draws_csv, read_json

    paths = fit_paths(fit_dir)
    for key in ("draws", "meta"):
        if not os.path.exists(paths[key]):
            raise CliError(f"fit artifact missing: {paths[key]}", EXIT_IO)
    meta = read_json(paths["meta"])
    names, data = read_draws_csv(paths["draws"])
    return paths, meta, names, data


def cmd_ppc(args):
    import numpy as np

    from .data import DataError, load_csv
    from .ppc import default_continuous_flags, ppc_report
    from .storage import config_digest, write_json, write_plot_csv

    paths, meta, names, data = _load_fit_dir(args.fit_dir)
    if not os.path.exists(paths["latent_z"]):
        raise CliError(f"fit artifact missing: {paths['latent_z']}", EXIT_IO)
    try:
        y = load_csv(args.data, missing_token=args.missing_token)
    except (DataError, OSError) as exc:
        raise CliError(str(exc), EXIT_IO if isinstance(exc, OSError) else EXIT_VALIDATION)
    mask = np.array(meta["mask"], dtype=bool)
    if mask.shape[0] != y.n_cols:
        raise CliError("data column count does not match the fitted model")

    lambda_cols = {}
    for pos, name in enumerate(names):
        if name.startswith("lambda."):
            _, j, q = name.split(".")
            lambda_cols[(int(j), int(q))] = pos
    n_draws = data.shape[0]
    lambdas = np.zeros((n_draws, mask.shape[0], mask.shape[1]))
    for (j, q), pos in lambda_cols.items():
        lambdas[:, j, q] = data[:, pos]

    z = np.load(paths["latent_z"]).astype(np.float64)
    if z.shape[0] != n_draws or z.shape[1] != y.n_rows or z.shape[2] != y.n_cols:
        raise CliError("latent snapshots do not match the data dimensions")

    stats = tuple(s.strip() for s in args.stats.split(",") if s.strip())
    declared = set(meta.get("continuous_columns", []))
    continuous = default_continuous_flags(y)
    for j, name in enumerate(y.column_names):
        if name in declared:
            continuous[j] = True

    n_replicates = args.replicates if args.replicates else min(200, n_draws)
    try:
        report = ppc_report(lambdas, z, y, statistics=stats,
                            n_replicates=n_replicates, top_k=args.top_k,
                            continuous=continuous, seed=int(args.seed))
    except ValueError as exc:
        raise CliError(str(exc))

    config = {"command": "ppc", "fit_dir": os.path.abspath(args.fit_dir),
              "data": os.path.abspath(args.data), "stats": list(stats),
              "replicates": n_replicates, "top_k": args.top_k,
              "seed": int(args.seed)}
    digest = config_digest(config)
    payload = {
        "meta": {"tool": "rankfactor", "config": config,
                 "config_sha256": digest},
        "n_replicates": report.n_replicates,
        "statistics": list(report.statistics),
        "skipped": report.skipped,
        "rows": report.rows,
    }
    write_json(paths["ppc"], payload)
    write_plot_csv(paths["ppc_plot"], report.rows, args.seed, digest)
    n_flagged = len(report.flagged_rows())
    print(f"ppc: {len(report.rows)} statistics, {n_flagged} flagged; "
          f"wrote {paths['ppc']} and {paths['ppc_plot']}")
    return 0


def cmd_diagnose(args):
    from .diagnostics import diagnostics_report, format_diagnostics_table
    from .storage import write_json

    paths, meta, names, data = _load_fit_dir(args.fit_dir)
    selected = [n for n in names if fnmatch.fnmatch(n, args.params)]
    if not selected:
        raise CliError(f"no parameter matches {args.params!r}; "
                       f"available: {', '.join(names[:8])} ...")
    chains = {n: data[:, names.index(n)] for n in selected}
    report = diagnostics_report(chains, max_lag=args.max_lag)

    reference = None
    if args.compare_dir:
        _, _, ref_names, ref_data = _load_fit_dir(args.compare_dir)
        ref_chains = {n: ref_data[:, ref_names.index(n)]
                      for n in selected if n in ref_names}
        reference = diagnostics_report(ref_chains, max_lag=args.max_lag)

    payload = {"meta": {"tool": "rankfactor", "fit_dir": os.path.abspath(args.fit_dir),
                        "params": args.params},
               "parameters": report}
    if reference is not None:
        payload["reference"] = {"fit_dir": os.path.abspath(args.compare_dir),
                                "parameters": reference}
    write_json(paths["diagnostics"], payload)
    print(format_diagnostics_table(report, reference))
    print(f"\nwrote {paths['diagnostics']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rankfactor",
        description="Bayesian factor/bifactor models for mixed outcomes "
                    "via the extended rank likelihood")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numeric thread pools (numba / BLAS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic bifactor data")
    p.add_argument("--spec", required=True, help="model spec JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--i", type=int, default=500, help="number of rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoffs", default="7",
                   help="cutoff count per column: single int, comma list, or 'benchmark'")
    p.add_argument("--loading", type=float, default=0.6,
                   help="value filled into the free loadings")
    p.add_argument("--beta", default=None,
                   help="comma list of true coefficients; generates covariates")
    p.add_argument("--covariates-out", default=None)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run a sampler and write the fit directory")
    p.add_argument("--data", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--covariates", default=None)
    p.add_argument("--iters", type=int, default=50_000)
    p.add_argument("--burnin", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--algorithm", choices=("px", "standard"), default="px")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--missing-token", default="NA")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ppc", help="posterior predictive checks for a fit")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--stats", default="marginals,eigenvalues,tau")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-token", default="NA")
    p.set_defaults(func=cmd_ppc)

    p = sub.add_parser("diagnose", help="ESS / Geweke / autocorrelation report")
    p.add_argument("--fit-dir", required=True)
    p.add_argument("--params", default="*", help="glob over parameter names")
    p.add_argument("--compare-dir", default=None,
                   help="second fit dir; adds an ESS ratio column")
    p.add_argument("--max-lag", type=int, default=20)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_VALIDATION
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
