import numpy as np
import pytest

from rankfactor.data import in_rank_set
from rankfactor.model import FactorStructure, validate_structure
from rankfactor.ppc import kendall_tau_matrix
from rankfactor.simulate import (BENCHMARK_CUTOFF_COUNTS, benchmark_structure,
                                 generate_bifactor_data, ground_truth_record)


class TestBenchmarkStructure:
    def test_mask_layout(self):
        structure, lam = benchmark_structure()
        mask = structure.mask
        assert mask.shape == (15, 3)
        assert mask[:, 0].all()                       # general factor everywhere
        np.testing.assert_array_equal(np.flatnonzero(mask[:, 1]), [0, 12, 13, 14])
        np.testing.assert_array_equal(np.flatnonzero(mask[:, 2]), [2, 3, 5, 7])
        # row 2 (second outcome): general factor only
        np.testing.assert_array_equal(mask[1], [True, False, False])

    def test_zero_count_and_validity(self):
        structure, _ = benchmark_structure()
        assert structure.n_structural_zeros == 15 * 3 - (15 + 4 + 4)  # 22
        assert validate_structure(structure).ok

    def test_default_loading_fill(self):
        structure, lam = benchmark_structure(loading=0.6)
        assert np.all(lam[structure.mask] == 0.6)
        assert np.all(lam[~structure.mask] == 0.0)


class TestGenerateBifactorData:
    def test_binary_column(self):
        structure, lam = benchmark_structure()
        y, _ = generate_bifactor_data(200, structure, lam, 1, seed=0)
        for j in range(15):
            assert y.distinct_values[j].size == 2

    def test_many_level_column(self):
        structure, lam = benchmark_structure()
        y, _ = generate_bifactor_data(2000, structure, lam,
                                      BENCHMARK_CUTOFF_COUNTS, seed=1)
        # outcome 9 (index 8) has 29 cutoffs -> up to 30 levels
        assert y.distinct_values[8].size <= 30
        assert y.distinct_values[8].size >= 20
        assert y.distinct_values[0].size == 2

    def test_level_counts_bounded(self):
        structure, lam = benchmark_structure()
        counts = np.array(BENCHMARK_CUTOFF_COUNTS)
        y, _ = generate_bifactor_data(100, structure, lam, counts, seed=2)
        for j in range(15):
            assert y.distinct_values[j].size <= counts[j] + 1

    def test_zero_loadings_give_independent_outcomes(self):
        structure = FactorStructure(mask=np.ones((4, 1), dtype=bool))
        lam = np.zeros((4, 1))
        y, _ = generate_bifactor_data(1000, structure, lam, 3, seed=3)
        tau = kendall_tau_matrix(y.values)
        off = tau[~np.eye(4, dtype=bool)]
        assert np.max(np.abs(off)) < 0.06

    def test_truth_z_in_rank_set(self):
        structure, lam = benchmark_structure()
        y, truth = generate_bifactor_data(60, structure, lam,
                                          BENCHMARK_CUTOFF_COUNTS, seed=4)
        assert in_rank_set(y, truth.z)

    def test_covariate_effect_visible(self):
        structure, lam = benchmark_structure()
        rng = np.random.default_rng(5)
        x = rng.standard_normal((800, 1))
        beta = np.array([0.5])
        y, truth = generate_bifactor_data(800, structure, lam,
                                          BENCHMARK_CUTOFF_COUNTS,
                                          x=x, beta_true=beta, seed=5)
        corr = np.corrcoef(x[:, 0], truth.eta[:, 0])[0, 1]
        assert corr > 0.2

    def test_deterministic(self):
        structure, lam = benchmark_structure()
        y1, t1 = generate_bifactor_data(50, structure, lam, 3, seed=9)
        y2, t2 = generate_bifactor_data(50, structure, lam, 3, seed=9)
        np.testing.assert_array_equal(y1.values, y2.values)
        np.testing.assert_array_equal(t1.z, t2.z)

    def test_mask_violation_rejected(self):
        structure, lam = benchmark_structure()
        bad = lam.copy()
        bad[1, 1] = 0.5  # structural zero position
        with pytest.raises(ValueError, match="structural zero"):
            generate_bifactor_data(50, structure, bad, 3, seed=0)

    def test_positive_rows_required(self):
        structure, lam = benchmark_structure()
        with pytest.raises(ValueError, match="positive"):
            generate_bifactor_data(0, structure, lam, 3, seed=0)

    def test_ground_truth_record_roundtrips(self):
        import json
        structure, lam = benchmark_structure()
        y, truth = generate_bifactor_data(30, structure, lam, 2, seed=6)
        record = ground_truth_record(truth, structure.mask)
        blob = json.dumps(record)
        back = json.loads(blob)
        np.testing.assert_allclose(np.array(back["lambda_true"]), lam)
        assert back["seed"] == 6
