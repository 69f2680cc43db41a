"""
tests/conftest.py

pytest共通フィクスチャ

参照:
- pytest fixtures: https://docs.pytest.org/en/stable/fixture.html
- numpy.testing: https://numpy.org/doc/stable/reference/routines.testing.html
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
import pytest
from scipy import special

from app.data.presets import EXAMPLE_1, EXAMPLE_2
from app.models import CovariateLaw, FitOptions, LinkKind, SbmSpec
from app.services.estimator import BlockFit
from app.services.graph_io import Graph, graph_from_edges
from app.services.inference import factor_theta
from app.services.model_core import ExpandedSbm, expand_sbm, get_link


# =============================================================================
# 定数
# =============================================================================

# 許容誤差
EXACT_TOL = 1e-8
MOMENT_TOL = 1e-10

# 2ブロック・共変量1個の推定例で得られた B̂_Z（行 0,1 と 2,3 が同じ潜在ブロック）
SAMPLE_B_HAT = np.array([
    [3.7762, 2.2336, -0.0062, -1.5095],
    [2.2336, 3.7821, -1.5007, -0.0042],
    [-0.0062, -1.5007, 2.4979, 0.9985],
    [-1.5095, -0.0042, 0.9985, 2.5045],
])
SAMPLE_LATENT_GROUP = np.array([0, 0, 1, 1])
SAMPLE_Z_THETA = np.array([[0], [1], [0], [1]])
SAMPLE_SIMPLE_MEAN = 1.5120125

# 2共変量の例
TWO_COVARIATES = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[-1.5], [1.0]],
    covariates=[
        CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5]),
        CovariateLaw(kind="bernoulli_per_block", b=[0.4, 0.6]),
    ],
    beta=[0.5, 0.75],
    link=LinkKind.LOGIT,
)

# 差分ホモフィリーの例
DIFFERENTIAL = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[-1.5], [1.0]],
    covariates=[CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5])],
    beta=[0.8, 1.6],
    differential=True,
    link=LinkKind.LOGIT,
)


# =============================================================================
# ノイズなしの問題（A = P）
# =============================================================================

@dataclass
class ExactProblem:
    """
    拡張ブロックごとに同じ数のノードを並べ、隣接行列の代わりに P を渡す問題

    Attributes:
        graph: 共変量列 z1..zp を持つ辺なしグラフ
        P: n×n 確率行列（対角込み）
        xi: 正解の拡張ブロックラベル
        expanded: 拡張ブロックモデル
        d_hat: θ_Z の階数
        columns: 共変量列名
    """
    graph: Graph
    P: np.ndarray
    xi: np.ndarray
    expanded: ExpandedSbm
    d_hat: int
    columns: list[str]

    def options(self, **updates: object) -> FitOptions:
        fields = {"K": self.expanded.K, "d_hat": self.d_hat, "link": self.expanded.link.kind}
        return FitOptions(**{**fields, **updates})


def exact_problem(spec: SbmSpec, block_size: int = 10) -> ExactProblem:
    """SbmSpec からノイズなしの問題を作る"""
    expanded = expand_sbm(spec)
    xi = np.repeat(np.arange(expanded.ktilde), block_size)
    z = expanded.block_z[xi]
    columns = [f"z{c + 1}" for c in range(expanded.arity)]
    covariates = pd.DataFrame(
        {name: pd.array(z[:, c], dtype="Int8") for c, name in enumerate(columns)},
        index=pd.RangeIndex(len(xi)),
    )
    graph = graph_from_edges(len(xi), np.zeros((0, 2), dtype=np.int64), covariates)
    theta = expanded.theta_Z
    return ExactProblem(
        graph=graph,
        P=theta[np.ix_(xi, xi)],
        xi=xi,
        expanded=expanded,
        d_hat=expanded.rank,
        columns=columns,
    )


def make_block_fit(
    B: np.ndarray,
    latent_group: np.ndarray,
    z_theta: np.ndarray,
    counts: Optional[np.ndarray] = None,
    ones: Optional[np.ndarray] = None,
    link: LinkKind = LinkKind.LOGIT,
) -> BlockFit:
    """B̂_Z と多数決ラベルから直接 BlockFit を組み立てる（件数の既定は純粋な10ノードのブロック）"""
    B = np.asarray(B, dtype=float)
    z_theta = np.asarray(z_theta, dtype=np.int64)
    ktilde = len(B)
    if counts is None:
        counts = np.full(ktilde, 10, dtype=np.int64)
    if ones is None:
        ones = z_theta * counts[:, None]
    theta = special.expit(B) if link == LinkKind.LOGIT else B
    mu, signs = factor_theta(theta)
    xi = np.repeat(np.arange(ktilde), counts)
    return BlockFit(
        K=int(np.max(latent_group)) + 1,
        arity=z_theta.shape[1],
        mu_hat=mu,
        signs=signs,
        xi_hat=xi,
        tau_hat=np.asarray(latent_group)[xi],
        theta_hat_Z=theta,
        B_hat_Z=B,
        block_counts=np.asarray(counts, dtype=np.int64),
        covariate_ones=np.asarray(ones, dtype=np.int64),
        z_theta=z_theta,
        latent_group=np.asarray(latent_group, dtype=np.int64),
        link=get_link(link),
    )


# =============================================================================
# フィクスチャ
# =============================================================================

@pytest.fixture
def example2_exact() -> ExactProblem:
    """共変量1個・Logit リンクのノイズなし問題"""
    return exact_problem(EXAMPLE_2)


@pytest.fixture
def example1_exact() -> ExactProblem:
    """共変量なし・Identity リンクのノイズなし問題"""
    return exact_problem(EXAMPLE_1)


@pytest.fixture
def two_covariate_exact() -> ExactProblem:
    """共変量2個のノイズなし問題"""
    return exact_problem(TWO_COVARIATES, block_size=6)


@pytest.fixture
def differential_exact() -> ExactProblem:
    """差分ホモフィリーのノイズなし問題"""
    return exact_problem(DIFFERENTIAL)


@pytest.fixture
def edge_file(tmp_path):
    """コメント・重複・自己ループを含むエッジリスト"""
    path = tmp_path / "g.edges"
    path.write_text(
        "# toy graph\n"
        "10 20\n"
        "20 10   # duplicate\n"
        "20 30\n"
        "30 30\n"
        "\n"
        "40 10\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def covariate_file(tmp_path):
    """node_id と2列の共変量表（欠測あり）"""
    path = tmp_path / "g.tsv"
    path.write_text(
        "node_id\tfemale\tyear\n"
        "10\t1\t2008\n"
        "20\t0\t2009\n"
        "30\t\t2008\n"
        "40\t1\t0\n",
        encoding="utf-8",
    )
    return path
