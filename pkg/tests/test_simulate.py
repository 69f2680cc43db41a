"""
tests/test_simulate.py

グラフ生成・モンテカルロ・ブートストラップのテスト
"""
import logging

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from app.data import DESIGNS, get_design
from app.data.presets import EXAMPLE_1, EXAMPLE_1_HOMOPHILY, EXAMPLE_2, EXAMPLE_3_SMALL_BETA
from app.models import BetaVariant, EstimatorKind, FitOptions, InvalidInput, Regime
from app.services.clustering import adjusted_rand_index
from app.services.estimator import fit, pair_triples
from app.services.inference import beta_se, contrast_from_triples, moments_from_expanded
from app.services.model_core import expand_sbm
from app.services.seeds import derive_seed
from app.services.simulate import (
    _check_dimension,
    bootstrap_beta_se,
    run_design,
    run_replicate,
    sample_block_edges,
    sample_correlated_bernoulli,
    sample_graph,
    summary_table,
    write_summary_tsv,
)


class TestSeeds:
    """シード分割のテスト"""

    def test_deterministic(self):
        assert derive_seed(7, 2000, 13) == derive_seed(7, 2000, 13)

    def test_counters_matter(self):
        assert derive_seed(7, 2000, 13) != derive_seed(7, 2000, 14)
        assert derive_seed(7, 2000, 13) != derive_seed(8, 2000, 13)


class TestSampleGraph:
    """SbmSpec からの生成のテスト"""

    def test_deterministic(self):
        """同じシードなら同じグラフ"""
        first = sample_graph(EXAMPLE_2, 300, seed=5)
        second = sample_graph(EXAMPLE_2, 300, seed=5)
        assert np.array_equal(first.graph.edges, second.graph.edges)
        assert np.array_equal(first.xi, second.xi)

    def test_labels_and_covariates(self):
        """ξ = 2τ + z、共変量列は z1"""
        sample = sample_graph(EXAMPLE_2, 400, seed=1)
        assert list(sample.graph.covariates.columns) == ["z1"]
        assert np.array_equal(sample.xi, 2 * sample.tau + sample.z[:, 0])
        assert sample.graph.covariate_matrix(["z1"]).ravel().tolist() == sample.z[:, 0].tolist()

    def test_simple_graph(self):
        """自己ループ・重複辺なし"""
        graph = sample_graph(EXAMPLE_2, 300, seed=2).graph
        assert np.all(graph.edges[:, 0] < graph.edges[:, 1])
        assert len(np.unique(graph.edges, axis=0)) == graph.m

    def test_zero_rho_gives_empty_graph(self):
        """ρ = 0 なら辺なし"""
        spec = EXAMPLE_2.model_copy(update={"rho": 0.0})
        assert sample_graph(spec, 200, seed=0).graph.m == 0

    def test_edge_density(self):
        """辺の数は期待値に近い"""
        sample = sample_graph(EXAMPLE_1, 2000, seed=3)
        sizes = np.bincount(sample.xi, minlength=sample.expanded.ktilde).astype(float)
        theta = sample.expanded.theta_Z
        expected = (sizes @ theta @ sizes - np.sum(sizes * np.diag(theta))) / 2
        assert abs(sample.graph.m - expected) < 5 * np.sqrt(expected)

    def test_too_small(self):
        with pytest.raises(InvalidInput):
            sample_graph(EXAMPLE_2, 3, seed=0)


class TestSampleBlockEdges:
    """ブロックごとの辺の生成のテスト"""

    def test_sparse_path_density(self):
        """平均密度が低いと二項分布 + 位置抽出の経路になる"""
        xi = np.repeat([0, 1], 1000)
        theta = np.array([[0.02, 0.005], [0.005, 0.03]])
        edges = sample_block_edges(xi, theta, np.random.default_rng(0))
        within0 = np.sum((xi[edges[:, 0]] == 0) & (xi[edges[:, 1]] == 0))
        expected = 0.02 * 1000 * 999 / 2
        assert abs(within0 - expected) < 5 * np.sqrt(expected)
        assert np.all(edges[:, 0] != edges[:, 1])

    def test_full_block(self):
        """確率1のブロックは完全グラフ"""
        xi = np.zeros(20, dtype=np.int64)
        edges = sample_block_edges(xi, np.array([[1.0]]), np.random.default_rng(0))
        assert len(edges) == 20 * 19 // 2


class TestCorrelatedBernoulli:
    """相関付き2値共変量のテスト"""

    def test_joint_frequency(self):
        """b_z = b_w = 0.5, r = 0.3 で P(1,1) ≈ 0.325"""
        z, w = sample_correlated_bernoulli(0.5, 0.5, 0.3, 200_000, seed=11)
        assert abs(np.mean((z == 1) & (w == 1)) - 0.325) < 0.005
        assert abs(z.mean() - 0.5) < 0.005

    def test_perfect_correlation(self):
        """同じ周辺確率で r = 1 なら同一"""
        z, w = sample_correlated_bernoulli(0.4, 0.4, 1.0, 1000, seed=0)
        assert np.array_equal(z, w)


class TestMonteCarlo:
    """モンテカルロ実行のテスト"""

    @pytest.fixture
    def small_design(self):
        return get_design("design1").model_copy(
            update={"n_values": [400], "replicates": 2, "estimators": EstimatorKind.SIMPLE_MEAN}
        )

    def test_designs_pin_rank(self):
        """設計1〜5の d̂ は θ_Z の階数 8 に固定"""
        for design in DESIGNS.values():
            assert design.d_hat == 8
            assert expand_sbm(design.spec).rank == 8

    def test_dimension_mismatch_warns(self, caplog):
        """θ_Z の階数と違う d̂ は WARNING"""
        spec = get_design("design1").spec
        with caplog.at_level(logging.WARNING, logger="app.services.simulate"):
            assert _check_dimension(8, spec, 2000, 0)
            assert caplog.text == ""
            assert not _check_dimension(1, spec, 2000, 3)
        assert "d_hat=1 differs from rank 8" in caplog.text

    def test_replicate_is_reproducible(self, small_design):
        first = run_replicate(small_design, 400, 0)
        second = run_replicate(small_design, 400, 0)
        assert first["diverged"] == second["diverged"]
        if not first["diverged"]:
            assert first["estimates"] == second["estimates"]

    def test_summary_table(self, small_design, tmp_path):
        """TSV の列: design, estimator, n, abs_err_*, mcse_*, time, ari, diverged"""
        summary = run_design(small_design)
        table = summary_table(summary)
        assert list(table.columns[:3]) == ["design", "estimator", "n"]
        assert {"abs_err_beta1", "abs_err_beta2", "mcse_beta1", "time", "ari", "diverged"} <= set(
            table.columns
        )
        out = tmp_path / "summary.tsv"
        write_summary_tsv(summary, out)
        read_back = pd.read_csv(out, sep="\t")
        assert read_back["n"].tolist() == [400]
        row = summary.rows[0]
        assert row.replicates == 2
        assert 0 <= row.diverged <= 2


class TestBootstrap:
    """パラメトリック・ブートストラップのテスト"""

    def test_returns_positive_se(self):
        sample = sample_graph(EXAMPLE_2, 600, seed=4)
        opts = FitOptions(K=2, estimator="simple_mean")
        result = fit(sample.graph, opts, ["z1"])
        se = bootstrap_beta_se(sample.graph, result, opts, replicates=5, seed=1)
        key = ("beta", BetaVariant.SIMPLE_MEAN.value)
        assert key in se
        assert 0 < se[key] < 1.0

    def test_needs_two_replicates(self):
        sample = sample_graph(EXAMPLE_2, 200, seed=0)
        result = fit(sample.graph, FitOptions(K=2, estimator="simple_mean"), ["z1"])
        with pytest.raises(InvalidInput):
            bootstrap_beta_se(sample.graph, result, FitOptions(K=2), replicates=1)


def _sorted_abs_positions(result) -> np.ndarray:
    return np.sort(np.abs(result.latent_positions[:, 0]))


class TestExampleOne:
    """例1（共変量なし、Identity）の標本での推定"""

    def test_positions_and_labels(self):
        """n = 2000 で (p̂, q̂) ≈ (0.1, 0.7)、ラベルはほぼ完全に復元"""
        sample = sample_graph(EXAMPLE_1, 2000, seed=11)
        result = fit(sample.graph, FitOptions(K=2, link="identity"), [])
        assert adjusted_rand_index(sample.xi, result.block_fit.xi_hat) > 0.99
        assert np.allclose(_sorted_abs_positions(result), [0.1, 0.7], atol=0.01)


@pytest.mark.slow
class TestAcceptance:
    """大きな n での推定精度（pytest -m slow で実行）"""

    def test_example1_ten_seeds(self):
        """例1: 10シードで平均 |p̂−0.1|, |q̂−0.7| < 0.005、ARI = 1 が9回以上"""
        errors = []
        perfect = 0
        for seed in range(10):
            sample = sample_graph(EXAMPLE_1, 2000, seed=seed)
            result = fit(sample.graph, FitOptions(K=2, link="identity", seed=seed), [])
            errors.append(np.abs(_sorted_abs_positions(result) - [0.1, 0.7]))
            perfect += adjusted_rand_index(sample.xi, result.block_fit.xi_hat) == 1.0
        assert np.all(np.mean(errors, axis=0) < 0.005)
        assert perfect >= 9

    def test_one_covariate_n2000(self):
        """例2: 10シードで平均 |β̂−1.5| < 0.05、d̂ = 4 と符号 (3, 1) が9回以上"""
        errors = {BetaVariant.SIMPLE_MEAN: [], BetaVariant.WEIGHTED_MEAN: []}
        expected_shape = 0
        for seed in range(10):
            sample = sample_graph(EXAMPLE_2, 2000, seed=2019 + seed)
            result = fit(sample.graph, FitOptions(K=2, seed=seed), ["z1"])
            signature = result.embedding.signature
            expected_shape += (result.d_hat, signature.d1, signature.d2) == (4, 3, 1)
            for variant, values in errors.items():
                values.append(abs(result.beta("beta", variant).value - 1.5))
        assert expected_shape >= 9
        for values in errors.values():
            assert np.mean(values) < 0.05

    def test_example3_small_beta(self):
        """例3（β = 0.5）: n = 2000 で誤差 0.25 以内、n = 5000 の5シード平均で 0.10 以内"""
        spec = EXAMPLE_3_SMALL_BETA
        opts = FitOptions(K=2, d_hat=expand_sbm(spec).rank, estimator=EstimatorKind.SIMPLE_MEAN)
        sample = sample_graph(spec, 2000, seed=0)
        assert abs(fit(sample.graph, opts, ["z1"]).beta("beta").value - 0.5) <= 0.25
        errors = []
        for seed in range(5):
            sample = sample_graph(spec, 5000, seed=100 + seed)
            errors.append(fit(sample.graph, opts, ["z1"]).beta("beta").value - 0.5)
        assert abs(np.mean(errors)) <= 0.10

    def test_design1_error_shrinks(self):
        """n を増やすと平均絶対誤差が減る"""
        design = get_design("design1").model_copy(
            update={
                "n_values": [2000, 5000],
                "replicates": 10,
                "estimators": EstimatorKind.SIMPLE_MEAN,
            }
        )
        table = summary_table(run_design(design))
        errors = table["abs_err_beta1"].tolist()
        assert errors[1] < errors[0]
        assert table["ari"].min() > 0.99

    def test_design1_spread_matches_plugin_se(self):
        """設計1（n = 2000）: β̂₁ の反復間の標準偏差とプラグイン標準誤差が同じ桁"""
        design = get_design("design1").model_copy(
            update={"estimators": EstimatorKind.SIMPLE_MEAN}
        )
        outcomes = [run_replicate(design, 2000, r) for r in range(30)]
        values = [
            o["estimates"]["simple_mean"]["beta1"] for o in outcomes if not o["diverged"]
        ]
        assert len(values) >= 25
        expanded = expand_sbm(design.spec)
        triples = pair_triples(expanded.block_tau, expanded.block_z, 0)[1]
        contrast = contrast_from_triples(triples, [1.0 / len(triples)] * len(triples))
        se = beta_se(
            moments_from_expanded(expanded), contrast, expanded.link, Regime.DENSE, 2000
        ).se_hat
        ratio = np.std(values, ddof=1) / se
        assert 0.5 < ratio < 2.5

    def test_studentized_shape(self):
        """例1 + β = 0.05（Identity）: (β̂ − β − bias)/se は正規分布に近く、尺度も同程度"""
        spec = EXAMPLE_1_HOMOPHILY
        opts = FitOptions(
            K=2, link="identity", d_hat=expand_sbm(spec).rank,
            estimator=EstimatorKind.SIMPLE_MEAN,
        )
        values, biases, ses = [], [], []
        for seed in range(500):
            sample = sample_graph(spec, 2000, seed=derive_seed(6, seed))
            estimate = fit(sample.graph, opts.model_copy(update={"seed": seed}), ["z1"]).beta()
            values.append(estimate.value)
            biases.append(estimate.bias_hat)
            ses.append(estimate.se_hat)
        values, biases, ses = np.array(values), np.array(biases), np.array(ses)
        t = (values - 0.05 - biases) / ses
        assert abs(stats.skew(t)) < 0.3
        assert abs(stats.kurtosis(t)) < 0.6
        assert 0.5 < np.std(values, ddof=1) / np.mean(ses) < 2.0

    def test_sparse_regime_error_shrinks(self):
        """ρ = n^(−1/4) の準スパースで、n = 2000 → 8000 で平均絶対誤差が減る"""
        mean_errors = []
        for n in (2000, 8000):
            rho = n ** -0.25
            spec = EXAMPLE_2.model_copy(update={"rho": rho})
            opts = FitOptions(
                K=2, d_hat=4, regime=Regime.SPARSE, rho=rho,
                estimator=EstimatorKind.SIMPLE_MEAN,
            )
            errors = []
            for replicate in range(50):
                sample = sample_graph(spec, n, seed=derive_seed(8, n, replicate))
                result = fit(sample.graph, opts, ["z1"])
                assert result.rho_hat == rho
                errors.append(abs(result.beta().value - 1.5))
            mean_errors.append(np.mean(errors))
        assert mean_errors[1] < mean_errors[0]
