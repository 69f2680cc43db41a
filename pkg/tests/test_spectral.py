"""
tests/test_spectral.py

固有分解・ASE・次元選択のテスト
"""
import numpy as np
import pytest
from scipy import sparse

from app.data.presets import EXAMPLE_2
from app.services.simulate import sample_graph
from app.models import InvalidInput
from app.services.graph_io import regularize_degrees
from app.services.spectral import (
    ase,
    default_dimension,
    find_elbows,
    indefinite_products,
    noise_edge,
    orient_columns,
    reconstruct_p,
    select_dimension,
    signal_dimension,
    top_eigenpairs,
)
from tests.conftest import EXACT_TOL, exact_problem


class TestTopEigenpairs:
    """固有対の選択のテスト"""

    def test_ordered_by_magnitude(self):
        """絶対値の降順（負の固有値も含む）"""
        M = np.diag([1.0, -5.0, 3.0, 0.5])
        selection = top_eigenpairs(M, 3)
        assert np.allclose(selection.values, [-5.0, 3.0, 1.0])
        assert selection.d1 == 2
        assert selection.d2 == 1

    def test_positive_first_on_ties(self):
        """同じ絶対値なら正を先に"""
        selection = top_eigenpairs(np.diag([-2.0, 2.0, 0.1]), 2)
        assert np.allclose(selection.values, [2.0, -2.0])

    def test_zero_matrix(self):
        """零行列は固有値0"""
        selection = top_eigenpairs(np.zeros((5, 5)), 2)
        assert np.array_equal(selection.values, np.zeros(2))

    def test_asymmetric(self):
        """非対称行列は InvalidInput"""
        with pytest.raises(InvalidInput):
            top_eigenpairs(np.array([[0.0, 1.0], [0.0, 0.0]]), 1)

    def test_d_out_of_range(self):
        with pytest.raises(InvalidInput):
            top_eigenpairs(np.eye(3), 4)
        with pytest.raises(InvalidInput):
            top_eigenpairs(np.eye(3), 0)

    def test_iterative_matches_direct(self):
        """疎行列の反復ソルバと直接法の結果が一致"""
        problem = exact_problem(EXAMPLE_2, block_size=16)
        dense = top_eigenpairs(problem.P, 4)
        iterative = top_eigenpairs(sparse.csr_matrix(problem.P), 4, dense_threshold=1)
        assert np.allclose(dense.values, iterative.values, atol=EXACT_TOL)
        P_dense = reconstruct_p(ase(problem.P, 4))
        P_iter = reconstruct_p(ase(sparse.csr_matrix(problem.P), 4, dense_threshold=1))
        assert np.allclose(P_dense, P_iter, atol=EXACT_TOL)

    def test_linear_operator(self):
        """正則化作用素は実体化した行列と同じ固有値を持つ"""
        rng = np.random.default_rng(3)
        labels = np.repeat([0, 1], 150)
        prob = np.where(labels[:, None] == labels[None, :], 0.3, 0.02)
        upper = np.triu(rng.random((300, 300)) < prob, 1).astype(float)
        A = sparse.csr_matrix(upper + upper.T)
        op = regularize_degrees(A, 0.25)
        direct = top_eigenpairs(op.toarray(), 2)
        iterative = top_eigenpairs(op, 2, dense_threshold=256)
        assert np.allclose(direct.values, iterative.values, atol=1e-6)


class TestAse:
    """隣接スペクトル埋め込みのテスト"""

    def test_reconstructs_low_rank_p(self):
        """階数 d の P は Ŷ I Ŷ^T で再現される"""
        problem = exact_problem(EXAMPLE_2)
        embedding = ase(problem.P, problem.d_hat)
        assert np.allclose(reconstruct_p(embedding), problem.P, atol=EXACT_TOL)

    def test_indefinite_signature(self):
        """Logit の例は負の固有値を持つ"""
        problem = exact_problem(EXAMPLE_2)
        embedding = ase(problem.P, problem.d_hat)
        assert embedding.signature.d1 >= 1
        assert embedding.signature.d2 >= 1
        assert embedding.signature.d == problem.d_hat

    def test_rows_constant_within_block(self):
        """同じ拡張ブロックのノードは同じ埋め込み"""
        problem = exact_problem(EXAMPLE_2)
        Y = ase(problem.P, problem.d_hat).Y
        for a in range(problem.expanded.ktilde):
            rows = Y[problem.xi == a]
            assert np.allclose(rows, rows[0], atol=EXACT_TOL)

    def test_indefinite_products(self):
        """x^T I y"""
        points = np.array([[1.0, 2.0], [3.0, 1.0]])
        products = indefinite_products(points, np.array([1.0, -1.0]))
        assert np.allclose(products, [[-3.0, 1.0], [1.0, 8.0]])


class TestOrientColumns:
    """固有ベクトルの符号規約のテスト"""

    def test_largest_entry_positive(self):
        vectors = np.array([[0.2, 0.9], [-0.8, 0.1]])
        oriented = orient_columns(vectors)
        assert oriented[:, 0].tolist() == [-0.2, 0.8]
        assert oriented[:, 1].tolist() == [0.9, 0.1]

    def test_deterministic_embedding(self):
        """同じ入力からは同じ埋め込み"""
        problem = exact_problem(EXAMPLE_2)
        first = ase(problem.P, problem.d_hat).Y
        second = ase(problem.P.copy(), problem.d_hat).Y
        assert np.array_equal(first, second)


class TestSelectDimension:
    """プロファイル尤度による次元選択のテスト"""

    def test_clear_gap(self):
        """3個の大きな値の後にギャップ"""
        values = np.array([10.0, 9.5, 9.0, 1.0, 0.9, 0.8])
        assert select_dimension(values) == 3

    def test_plus_one(self):
        """「エルボー + 1」規約"""
        values = np.array([10.0, 9.5, 9.0, 1.0, 0.9, 0.8])
        assert select_dimension(values, plus_one=True) == 4

    def test_sign_ignored(self):
        """負の固有値は絶対値で扱う"""
        values = np.array([10.0, -9.5, 9.0, -1.0, 0.9, 0.8])
        assert select_dimension(values) == 3

    def test_max_d(self):
        """max_d で見る個数を制限"""
        values = np.array([10.0, 9.5, 9.0, 1.0, 0.9, 0.8])
        assert select_dimension(values, max_d=2) == 1

    def test_two_values(self):
        """2個なら常に1"""
        assert select_dimension(np.array([3.0, 0.0])) == 1

    def test_too_few_values(self):
        with pytest.raises(InvalidInput):
            select_dimension(np.array([1.0]))

    def test_three_large_then_small(self):
        """(10, 9, 8, 0.5, 0.4, 0.3) のエルボーは3"""
        assert select_dimension(np.array([10.0, 9.0, 8.0, 0.5, 0.4, 0.3])) == 3

    def test_one_dominant_value(self):
        """(100, 1, 1, 1) のエルボーは1"""
        assert select_dimension(np.array([100.0, 1.0, 1.0, 1.0])) == 1

    def test_repeated_elbows(self):
        """2番目のエルボーは最初のエルボーの後ろで探す"""
        values = np.array([1000.0, 50.0, 48.0, 46.0, 1.0, 0.9, 0.8, 0.7])
        assert find_elbows(values, n_elbows=2) == [1, 4]
        assert select_dimension(values, n_elbows=2) == 4

    def test_repeated_elbows_stop_at_tail(self):
        """残りが2個未満になったら打ち切り"""
        assert find_elbows(np.array([5.0, 1.0]), n_elbows=3) == [1]

    def test_n_elbows_positive(self):
        with pytest.raises(InvalidInput):
            find_elbows(np.array([3.0, 1.0]), n_elbows=0)


class TestNoiseEdge:
    """雑音の目安による次元の下限のテスト"""

    def test_regular_graph(self):
        """全ノードの次数が n/2 なら 2·√(n/4)·slack"""
        degrees = np.full(400, 200.0)
        assert noise_edge(degrees, slack=1.0) == pytest.approx(2.0 * np.sqrt(100.0))
        assert noise_edge(degrees) == pytest.approx(1.1 * 20.0)

    def test_uses_largest_variance(self):
        degrees = np.array([1.0, 5.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        assert noise_edge(degrees, slack=1.0) == pytest.approx(2.0 * np.sqrt(5.0 * 0.5))

    def test_empty(self):
        assert noise_edge(np.zeros(0)) == 0.0

    def test_signal_dimension(self):
        values = np.array([120.0, -60.0, 30.0, -10.0, 9.0])
        assert signal_dimension(values, 20.0) == 3
        assert signal_dimension(values, 20.0, max_d=2) == 2
        assert signal_dimension(values, 500.0) == 0

    def test_floor_lifts_first_elbow(self):
        """突出した最初の固有値の後でも、雑音の目安を超える固有値は残す"""
        values = np.array([1230.0, 537.0, 228.0, -99.0, 40.0, -39.0, 38.0, -37.0])
        degrees = np.full(2000, 1200.0)
        assert select_dimension(values) == 1
        assert default_dimension(values, degrees, max_rank=4) == 4

    def test_floor_capped_by_rank(self):
        values = np.array([1230.0, 537.0, 228.0, -99.0, 40.0, -39.0, 38.0, -37.0])
        degrees = np.full(2000, 1200.0)
        assert default_dimension(values, degrees, max_rank=2) == 2

    def test_without_degrees(self):
        """次数がなければエルボーのみ"""
        values = np.array([1230.0, 537.0, 228.0, -99.0, 40.0, -39.0, 38.0, -37.0])
        assert default_dimension(values) == select_dimension(values)

    def test_sampled_example2(self):
        """例2（n = 2000）の標本では d̂ = 4、符号 (3, 1)"""
        sample = sample_graph(EXAMPLE_2, 2000, seed=2019)
        A = sample.graph.adjacency()
        selection = top_eigenpairs(A, 8)
        degrees = np.asarray(A.sum(axis=1)).ravel()
        d_hat = default_dimension(selection.values, degrees, max_rank=4)
        assert d_hat == 4
        head = selection.head(d_hat)
        assert (head.d1, head.d2) == (3, 1)
