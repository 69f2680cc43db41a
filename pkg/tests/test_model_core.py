"""
tests/test_model_core.py

リンク関数・拡張ブロックモデルの構築のテスト
"""
import numpy as np
import pytest
from pydantic import ValidationError

from app.data.presets import EXAMPLE_1, EXAMPLE_2
from app.models import CovariateLaw, InvalidInput, InvalidModel, LinkKind, SbmSpec
from app.services.model_core import (
    correlated_joint_table,
    covariate_patterns,
    expand_differential_homophily,
    expand_one_covariate,
    expand_sbm,
    expand_two_covariates,
    get_link,
    pattern_probabilities,
    theta_of_latents,
)
from tests.conftest import DIFFERENTIAL, EXACT_TOL, TWO_COVARIATES


class TestLinkFunction:
    """リンク関数のテスト"""

    def test_logit_forward_and_inverse(self):
        """expit(0) = 0.5、logit で元に戻る"""
        link = get_link(LinkKind.LOGIT)
        assert abs(float(link.forward(0.0)) - 0.5) < EXACT_TOL
        u = np.array([-2.0, 0.3, 1.5])
        assert np.allclose(link.inverse(link.forward(u)), u, atol=EXACT_TOL)

    def test_logit_derivative(self):
        """(logit)′(0.5) = 4"""
        assert abs(float(get_link("logit").inverse_derivative(0.5)) - 4.0) < EXACT_TOL

    def test_logit_derivative_at_boundary(self):
        """境界の確率では微分が定義されない"""
        with pytest.raises(InvalidInput):
            get_link("logit").inverse_derivative(np.array([0.2, 1.0]))

    def test_identity(self):
        """Identity リンクは値をそのまま返し、微分は1"""
        link = get_link(LinkKind.IDENTITY)
        p = np.array([0.01, 0.49])
        assert np.array_equal(link.inverse(p), p)
        assert np.array_equal(link.inverse_derivative(p), np.ones(2))


class TestThetaOfLatents:
    """潜在中心から θ を作るテスト"""

    def test_identity_products(self):
        """Identity リンクでは ν_k ν_ℓ"""
        theta = theta_of_latents([0.1, 0.7], get_link("identity"))
        assert np.allclose(theta, [[0.01, 0.07], [0.07, 0.49]], atol=EXACT_TOL)

    def test_identity_out_of_range(self):
        """[0,1] 外の要素は InvalidModel"""
        with pytest.raises(InvalidModel):
            theta_of_latents([[1.2], [0.1]], get_link("identity"))

    def test_non_finite(self):
        """有限でない中心は InvalidInput"""
        with pytest.raises(InvalidInput):
            theta_of_latents([np.nan, 0.5], get_link("logit"))


class TestCovariatePatterns:
    """共変量パターンと確率のテスト"""

    def test_first_covariate_varies_fastest(self):
        """順序は 00, 10, 01, 11"""
        assert covariate_patterns(2).tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]

    def test_no_covariates(self):
        """共変量なしはパターン1個"""
        assert covariate_patterns(0).shape == (1, 0)

    def test_pattern_probabilities_sum_to_one(self):
        """各潜在ブロックでパターン確率の和は1"""
        probs = pattern_probabilities(TWO_COVARIATES)
        assert np.allclose(probs.sum(axis=1), 1.0)
        # ブロック0: b = (0.5, 0.4)
        assert np.allclose(probs[0], [0.3, 0.3, 0.2, 0.2])


class TestCorrelatedJointTable:
    """相関付き2値共変量の同時確率表のテスト"""

    def test_balanced_with_correlation(self):
        """b_z = b_w = 0.5, r = 0.3 なら P(1,1) = 0.325"""
        table = correlated_joint_table(0.5, 0.5, 0.3)
        assert abs(table[1, 1] - 0.325) < EXACT_TOL
        assert abs(table.sum() - 1.0) < EXACT_TOL
        # 周辺確率は保たれる
        assert abs(table[1, :].sum() - 0.5) < EXACT_TOL
        assert abs(table[:, 1].sum() - 0.5) < EXACT_TOL

    def test_independent(self):
        """r = 0 なら積"""
        table = correlated_joint_table(0.4, 0.6, 0.0)
        assert np.allclose(table, np.outer([0.6, 0.4], [0.4, 0.6]), atol=EXACT_TOL)

    def test_infeasible_correlation(self):
        """負のセルになる相関は InvalidModel"""
        with pytest.raises(InvalidModel):
            correlated_joint_table(0.1, 0.9, 1.0)


class TestExpandSbm:
    """拡張ブロックモデルへの展開のテスト"""

    def test_one_covariate(self):
        """共変量1個: K̃ = 4、一致する組にだけ β が加わる"""
        model = expand_one_covariate(EXAMPLE_2)
        assert model.ktilde == 4
        assert model.block_tau.tolist() == [0, 0, 1, 1]
        assert model.block_z[:, 0].tolist() == [0, 1, 0, 1]
        B = model.B_Z
        assert abs(B[0, 0] - (2.25 + 1.5)) < EXACT_TOL
        assert abs(B[0, 1] - 2.25) < EXACT_TOL
        assert abs(B[0, 2] - (-1.5 + 1.5)) < EXACT_TOL
        assert abs(B[0, 3] - (-1.5)) < EXACT_TOL
        assert np.allclose(model.eta, 0.25)

    def test_no_covariates(self):
        """共変量なしなら K̃ = K で θ = ν ν^T"""
        model = expand_sbm(EXAMPLE_1)
        assert model.ktilde == 2
        assert np.allclose(model.theta_Z, [[0.01, 0.07], [0.07, 0.49]], atol=EXACT_TOL)

    def test_two_covariates(self):
        """共変量2個: K̃ = 8、β は共変量ごとに加わる"""
        model = expand_two_covariates(TWO_COVARIATES)
        assert model.ktilde == 8
        B = model.B_Z
        assert abs(B[0, 0] - (2.25 + 0.5 + 0.75)) < EXACT_TOL
        # 00 と 10: 1個目だけ異なる
        assert abs(B[0, 1] - (2.25 + 0.75)) < EXACT_TOL
        # 00 と 01: 2個目だけ異なる
        assert abs(B[0, 2] - (2.25 + 0.5)) < EXACT_TOL
        # 00 と 11: 両方異なる
        assert abs(B[0, 3] - 2.25) < EXACT_TOL
        assert abs(model.eta.sum() - 1.0) < EXACT_TOL
        assert np.allclose(model.eta[:4], [0.15, 0.15, 0.1, 0.1])

    def test_differential(self):
        """差分ホモフィリー: (0,0) に β₁、(1,1) に β₂"""
        model = expand_differential_homophily(DIFFERENTIAL)
        B = model.B_Z
        assert abs(B[0, 0] - (2.25 + 0.8)) < EXACT_TOL
        assert abs(B[1, 1] - (2.25 + 1.6)) < EXACT_TOL
        assert abs(B[0, 1] - 2.25) < EXACT_TOL

    def test_symmetric(self):
        """θ_Z は対称"""
        model = expand_sbm(TWO_COVARIATES)
        assert np.array_equal(model.theta_Z, model.theta_Z.T)

    def test_wrong_expansion_entry_point(self):
        """共変量の数が合わない展開関数は InvalidInput"""
        with pytest.raises(InvalidInput):
            expand_one_covariate(TWO_COVARIATES)
        with pytest.raises(InvalidInput):
            expand_two_covariates(EXAMPLE_2)
        with pytest.raises(InvalidInput):
            expand_differential_homophily(EXAMPLE_2)

    def test_identity_rank_deficient(self):
        """Identity リンクで ν のグラム行列が退化していれば InvalidModel"""
        spec = SbmSpec(K=2, pi=[0.5, 0.5], nu=[[0.1, 0.2], [0.2, 0.4]], link="identity")
        with pytest.raises(InvalidModel):
            expand_sbm(spec)

    def test_identity_out_of_range_with_homophily(self):
        """β を加えて1を超える Identity モデルは InvalidModel"""
        spec = SbmSpec(
            K=2, pi=[0.5, 0.5], nu=[[0.1], [0.9]],
            covariates=[CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5])],
            beta=[0.5], link="identity",
        )
        with pytest.raises(InvalidModel):
            expand_sbm(spec)


class TestSbmSpecValidation:
    """SbmSpec の検証のテスト"""

    def test_pi_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            SbmSpec(K=2, pi=[0.5, 0.6], nu=[0.1, 0.7])

    def test_beta_length(self):
        """β の数は共変量の数と一致する"""
        with pytest.raises(ValidationError):
            SbmSpec(
                K=2, pi=[0.5, 0.5], nu=[0.1, 0.7],
                covariates=[CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5])],
                beta=[],
            )

    def test_scalar_centroids(self):
        """スカラーの中心は1次元の行になる"""
        spec = SbmSpec(K=2, pi=[0.5, 0.5], nu=[-1.5, 1.0])
        assert spec.nu == [[-1.5], [1.0]]
        assert spec.d == 1

    def test_pair_law_counts_two(self):
        """BERNOULLI_PAIR は共変量2個"""
        spec = SbmSpec(
            K=2, pi=[0.5, 0.5], nu=[-1.5, 1.0],
            covariates=[CovariateLaw(kind="bernoulli_pair", b_z=0.5, b_w=0.5, correlation=0.3)],
            beta=[0.5, 0.75],
        )
        assert spec.arity == 2
        assert spec.ktilde == 8
