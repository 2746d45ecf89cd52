"""Semiparametric Bayesian factor and bifactor models for mixed outcomes.

Estimation uses only the within-column orderings of the observed responses
(the extended rank likelihood), so binary, count, ordinal, and continuous
outcomes can be modeled together without specifying their marginal
distributions.
"""

__version__ = "0.1.0"

from .data import (DataError, MixedOutcomeMatrix, RankBounds, in_rank_set,
                   load_csv, normal_score_init, rank_bounds)
from .model import (FactorStructure, Hyperparameters, InferentialDraw,
                    ModelSpec, RegressionSpec, StructureReport, WorkingState,
                    default_hyperparameters, implied_correlation,
                    load_model_spec, model_spec_from_dict, model_spec_to_dict,
                    validate_structure)
from .sampler import (ChainOutput, SamplerConfig, StructureInvalid,
                      draw_factors, draw_latent_responses, draw_loadings,
                      draw_psi_inverse, draw_regression, draw_sigma_inverse,
                      run_chain, run_chain_standard)
from .postprocess import (InferentialArrays, RelabelResult,
                          chain_to_inferential, format_summary_table,
                          relabel_arrays, relabel_signs, summarize,
                          summarize_arrays, to_inferential)
from .diagnostics import (ZeroVarianceError, autocorrelation,
                          diagnostics_report, effective_sample_size, geweke)
from .ppc import (PpcReport, ReplicatedDataset, default_continuous_flags,
                  kendall_tau_matrix, ppc_report, rank_correlation_eigenvalues,
                  replicate_dataset, replicate_observation, spearman_matrix)
from .simulate import (BENCHMARK_CUTOFF_COUNTS, GroundTruth,
                       benchmark_structure, generate_bifactor_data)
