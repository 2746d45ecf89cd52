import numpy as np
import pytest

from rankfactor.data import MixedOutcomeMatrix
from rankfactor.model import InferentialDraw
from rankfactor.ppc import (default_continuous_flags, kendall_tau_matrix,
                            ppc_report, rank_correlation_eigenvalues,
                            replicate_dataset, replicate_observation,
                            spearman_matrix)


def kendall_tau_b_oracle(x, y):
    """Exhaustive O(n^2) pair enumeration with tie correction."""
    n = len(x)
    concordant = discordant = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[i] - x[j])
            dy = np.sign(y[i] - y[j])
            if dx != 0 and dy != 0:
                if dx == dy:
                    concordant += 1
                else:
                    discordant += 1
    n0 = n * (n - 1) / 2
    denom = np.sqrt((n0 - ties_pairs(x)) * (n0 - ties_pairs(y)))
    if denom == 0:
        return np.nan
    return (concordant - discordant) / denom


def ties_pairs(v):
    _, counts = np.unique(v, return_counts=True)
    return float(np.sum(counts * (counts - 1) / 2))


class TestReplicateObservation:
    def make_y(self, col, names=None):
        col = np.asarray(col, dtype=float)
        other = np.arange(len(col), dtype=float)
        return MixedOutcomeMatrix.from_values(np.column_stack([col, other]),
                                              column_names=names)

    def test_between_equal_values_emits_that_value(self):
        # cells sharing an observed value span z in (-1, 1); a replicate
        # z falling inside must emit that value
        y = self.make_y([5.0, 5.0, 9.0])
        z_snap = np.column_stack([[-1.0, 1.0, 3.0], [-1.0, 0.0, 1.0]])
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((3, 1)))

        class FixedRng:
            def standard_normal(self, size):
                out = np.zeros(size)
                out[0, 0] = 0.3
                return out

        row = replicate_observation(draw, z_snap, y, FixedRng(),
                                    continuous=np.array([False, False]))
        assert row[0] == 5.0

    def test_nearest_neighbour_rule(self):
        # pairs {(-1, 10), (2, 20)}: replicate z=-0.9 is nearer -1 -> 10
        y = self.make_y([10.0, 20.0])
        z_snap = np.column_stack([[-1.0, 2.0], [0.0, 1.0]])
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((2, 1)))

        class FixedRng:
            def standard_normal(self, size):
                out = np.zeros(size)
                out[0, 0] = -0.9
                return out

        row = replicate_observation(draw, z_snap, y, FixedRng(),
                                    continuous=np.array([False, False]))
        assert row[0] == 10.0

    def test_linear_interpolation_for_continuous(self):
        # pairs {(0, 0), (1, 100)}: replicate z=0.25 -> 25
        y = self.make_y([0.0, 100.0])
        z_snap = np.column_stack([[0.0, 1.0], [0.0, 1.0]])
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((2, 1)))

        class FixedRng:
            def standard_normal(self, size):
                out = np.zeros(size)
                out[0, 0] = 0.25
                return out

        row = replicate_observation(draw, z_snap, y, FixedRng(),
                                    continuous=np.array([True, False]))
        assert row[0] == pytest.approx(25.0)

    def test_clamping_outside_latent_range(self):
        y = self.make_y([10.0, 20.0])
        z_snap = np.column_stack([[-1.0, 2.0], [0.0, 1.0]])
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((2, 1)))

        class FixedRng:
            def __init__(self, v):
                self.v = v

            def standard_normal(self, size):
                out = np.zeros(size)
                out[0, 0] = self.v
                return out

        lo = replicate_observation(draw, z_snap, y, FixedRng(-5.0),
                                   continuous=np.array([False, False]))
        hi = replicate_observation(draw, z_snap, y, FixedRng(5.0),
                                   continuous=np.array([False, False]))
        assert lo[0] == 10.0 and hi[0] == 20.0

    def test_mapping_is_monotone(self):
        rng = np.random.default_rng(0)
        col = rng.integers(0, 5, 40).astype(float)
        y = self.make_y(col)
        from rankfactor.data import normal_score_init
        z_snap = normal_score_init(y, rng)
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((40, 1)))
        zs = np.linspace(-3, 3, 101)

        class SweepRng:
            def __init__(self):
                self.i = -1

            def standard_normal(self, size):
                self.i += 1
                out = np.zeros(size)
                out[0, 0] = zs[self.i]
                return out

        sweep = SweepRng()
        vals = [replicate_observation(draw, z_snap, y, sweep,
                                      continuous=np.array([False, False]))[0]
                for _ in zs]
        assert np.all(np.diff(vals) >= 0)


class TestReplicateDataset:
    def test_empty_rows(self):
        y = MixedOutcomeMatrix.from_values(
            np.column_stack([[1.0, 2.0, 3.0], [0, 1, 0]]))
        z_snap = np.zeros((3, 2))
        z_snap[:, 0] = [-1, 0, 1]
        z_snap[:, 1] = [-1, 1, 0]
        draw = InferentialDraw(lambda_=np.zeros((2, 1)), h=np.zeros((3, 1)))
        from rankfactor.ppc import _replicate_rows
        out = _replicate_rows(draw.lambda_, z_snap, y,
                              np.array([False, False]),
                              np.random.default_rng(0), 0)
        assert out.shape == (0, 2)

    def test_zero_loadings_give_independent_columns(self):
        rng = np.random.default_rng(1)
        n = 1000
        vals = np.column_stack([rng.integers(0, 4, n), rng.integers(0, 4, n)]).astype(float)
        y = MixedOutcomeMatrix.from_values(vals)
        from rankfactor.data import normal_score_init
        z_snap = normal_score_init(y, rng)
        draw = InferentialDraw(lambda_=np.zeros((2, 2)), h=np.zeros((n, 2)))
        rep = replicate_dataset(draw, z_snap, y, np.random.default_rng(2))
        tau = kendall_tau_matrix(rep.y_rep)
        assert abs(tau[0, 1]) < 0.05

    def test_support_preserved(self):
        rng = np.random.default_rng(3)
        vals = rng.integers(0, 3, size=(200, 3)).astype(float) * 2.0 + 1.0
        y = MixedOutcomeMatrix.from_values(vals)
        from rankfactor.data import normal_score_init
        z_snap = normal_score_init(y, rng)
        draw = InferentialDraw(lambda_=0.5 * np.ones((3, 1)), h=np.zeros((200, 1)))
        rep = replicate_dataset(draw, z_snap, y, np.random.default_rng(4))
        for j in range(3):
            assert set(np.unique(rep.y_rep[:, j])) <= set(y.distinct_values[j])


class TestKendallTau:
    def test_perfect_concordance(self):
        m = kendall_tau_matrix(np.column_stack([[1.0, 2, 3], [1.0, 2, 3]]))
        assert m[0, 1] == pytest.approx(1.0)

    def test_perfect_discordance(self):
        m = kendall_tau_matrix(np.column_stack([[1.0, 2, 3], [3.0, 2, 1]]))
        assert m[0, 1] == pytest.approx(-1.0)

    def test_tie_corrected_against_exhaustive_oracle(self):
        x = np.array([1.0, 1, 2, 3])
        y = np.array([1.0, 2, 2, 3])
        m = kendall_tau_matrix(np.column_stack([x, y]))
        assert m[0, 1] == pytest.approx(kendall_tau_b_oracle(x, y))

    def test_random_cases_against_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.integers(0, 4, 15).astype(float)
            y = rng.integers(0, 4, 15).astype(float)
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            m = kendall_tau_matrix(np.column_stack([x, y]))
            assert m[0, 1] == pytest.approx(kendall_tau_b_oracle(x, y))

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        vals = rng.integers(0, 5, size=(50, 3)).astype(float)
        m1 = kendall_tau_matrix(vals)
        vals2 = vals.copy()
        vals2[:, 0] = np.exp(vals2[:, 0])
        vals2[:, 2] = vals2[:, 2] ** 3
        m2 = kendall_tau_matrix(vals2)
        np.testing.assert_allclose(m1, m2, atol=1e-12)

    def test_degenerate_pair_is_nan(self):
        vals = np.column_stack([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
        m = kendall_tau_matrix(vals)
        assert np.isnan(m[0, 1])

    def test_pairwise_complete_missing(self):
        x = np.array([1.0, 2, 3, np.nan])
        y = np.array([1.0, 2, 3, 0.0])
        m = kendall_tau_matrix(np.column_stack([x, y]))
        assert m[0, 1] == pytest.approx(1.0)


class TestRankCorrelationEigenvalues:
    def test_independent_columns_near_one(self):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal((10_000, 4))
        eig = rank_correlation_eigenvalues(vals, 4)
        np.testing.assert_allclose(eig, 1.0, atol=0.1)

    def test_rank_one_pair(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(500)
        vals = np.column_stack([x, np.exp(x)])  # perfectly rank correlated
        eig = rank_correlation_eigenvalues(vals, 2)
        np.testing.assert_allclose(eig, [2.0, 0.0], atol=1e-6)

    def test_equicorrelation_spectrum(self):
        # closed form: eigenvalues of [[1,.5,.5],[.5,1,.5],[.5,.5,1]] are
        # 1 + 2 * 0.5 = 2 and 1 - 0.5 = 0.5 (twice)
        corr = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
        eig = np.sort(np.linalg.eigvalsh(corr))[::-1]
        np.testing.assert_allclose(eig, [2.0, 0.5, 0.5], atol=1e-12)
        # and the pipeline reproduces it on data whose Spearman matrix is corr
        rng = np.random.default_rng(9)
        chol = np.linalg.cholesky(corr)
        n = 200_000
        vals = rng.standard_normal((n, 3)) @ chol.T
        got = rank_correlation_eigenvalues(vals, 3)
        np.testing.assert_allclose(got, [2.0, 0.5, 0.5], atol=0.05)

    def test_trace_identity(self):
        rng = np.random.default_rng(10)
        vals = rng.integers(0, 5, size=(300, 6)).astype(float)
        full = rank_correlation_eigenvalues(vals, 6)
        assert full.sum() == pytest.approx(6.0, abs=1e-8)

    def test_constant_column_raises(self):
        vals = np.column_stack([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
        with pytest.raises(ValueError, match="constant"):
            rank_correlation_eigenvalues(vals, 2)

    def test_top_k_validation(self):
        rng = np.random.default_rng(11)
        vals = rng.standard_normal((50, 3))
        with pytest.raises(ValueError):
            rank_correlation_eigenvalues(vals, 4)


class TestSpearman:
    def test_matches_scipy(self):
        from scipy.stats import spearmanr
        rng = np.random.default_rng(12)
        vals = rng.integers(0, 6, size=(100, 3)).astype(float)
        ours = spearman_matrix(vals)
        ref = spearmanr(vals).statistic
        np.testing.assert_allclose(ours, ref, atol=1e-12)


@pytest.fixture(scope="module")
def independent_fit():
    """Zero-loading 'fit' whose replicates resample the marginals."""
    rng = np.random.default_rng(13)
    n, j = 400, 3
    vals = rng.integers(0, 4, size=(n, j)).astype(float)
    y = MixedOutcomeMatrix.from_values(vals)
    from rankfactor.data import normal_score_init
    n_draws = 80
    lambdas = np.zeros((n_draws, j, 1))
    z = np.stack([normal_score_init(y, rng) for _ in range(n_draws)])
    return y, lambdas, z


class TestPpcReport:

    def test_marginal_counts_covered_under_exchangeability(self, independent_fit):
        y, lambdas, z = independent_fit
        report = ppc_report(lambdas, z, y, statistics=("marginals",),
                            n_replicates=80, seed=1)
        flagged = [r for r in report.rows if r["flagged"]]
        assert len(flagged) == 0

    def test_eigenvalues_and_tau_not_flagged_for_well_specified(self, independent_fit):
        y, lambdas, z = independent_fit
        report = ppc_report(lambdas, z, y,
                            statistics=("eigenvalues", "tau"),
                            n_replicates=80, top_k=3, seed=2)
        n_flagged = len(report.flagged_rows())
        assert n_flagged <= max(1, int(0.2 * len(report.rows)))

    def test_tau_self_consistency_flag_rate(self):
        # data "from the fitted model itself": at most 10% of pairwise tau
        # statistics flagged at the 95% level
        rng = np.random.default_rng(15)
        n, j = 300, 6
        vals = rng.integers(0, 4, size=(n, j)).astype(float)
        y = MixedOutcomeMatrix.from_values(vals)
        from rankfactor.data import normal_score_init
        n_draws = 100
        lambdas = np.zeros((n_draws, j, 1))
        z = np.stack([normal_score_init(y, rng) for _ in range(n_draws)])
        report = ppc_report(lambdas, z, y, statistics=("tau",),
                            n_replicates=100, seed=4)
        n_pairs = j * (j - 1) // 2
        assert len(report.rows) == n_pairs
        assert len(report.flagged_rows()) <= 0.10 * n_pairs

    def test_replicates_capped_by_draws(self, independent_fit):
        y, lambdas, z = independent_fit
        with pytest.raises(ValueError, match="n_replicates"):
            ppc_report(lambdas, z, y, n_replicates=81)

    def test_row_count_for_tau(self, independent_fit):
        y, lambdas, z = independent_fit
        report = ppc_report(lambdas, z, y, statistics=("tau",),
                            n_replicates=20, seed=3)
        assert len(report.rows) == 3  # C(3, 2)

    def test_unknown_statistic(self, independent_fit):
        y, lambdas, z = independent_fit
        with pytest.raises(ValueError, match="unknown"):
            ppc_report(lambdas, z, y, statistics=("bogus",), n_replicates=5)

    def test_misaligned_inputs(self, independent_fit):
        y, lambdas, z = independent_fit
        with pytest.raises(ValueError, match="aligned"):
            ppc_report(lambdas[:-1], z, y, n_replicates=5)


def test_default_continuous_flags():
    rng = np.random.default_rng(14)
    discrete = rng.integers(0, 3, 100).astype(float)
    cont = rng.standard_normal(100)
    y = MixedOutcomeMatrix.from_values(np.column_stack([discrete, cont]))
    flags = default_continuous_flags(y)
    assert not flags[0]
    assert flags[1]
