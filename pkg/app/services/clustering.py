"""
app/services/clustering.py

クラスタリングサービス

埋め込み行のクラスタリング（全共分散GMM、k-means）、B̂_Z 対角成分の
等サイズ1次元クラスタリング、調整ランド指数（ARI）を提供。

GMM（sklearn.mixture.GaussianMixture）:
- covariance_type="full", init_params="k-means++"
- reg_covar は 1e-9·trace(Σ_data)/d（下限 1e-12）
- n_init 回の初期化のうち対数尤度の下界が最大のものを採用

公式ドキュメント:
- sklearn.mixture.GaussianMixture: https://scikit-learn.org/stable/modules/generated/sklearn.mixture.GaussianMixture.html
- sklearn.cluster.KMeans: https://scikit-learn.org/stable/modules/generated/sklearn.cluster.KMeans.html
- sklearn.metrics.adjusted_rand_score: https://scikit-learn.org/stable/modules/generated/sklearn.metrics.adjusted_rand_score.html
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import adjusted_rand_score
from sklearn.mixture import GaussianMixture

from app.models.common import InvalidInput, NumericalFailure
from app.models.fit import ClusterConfig

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

REGULARIZATION_SCALE = 1e-9
REGULARIZATION_FLOOR = 1e-12


# =============================================================================
# データクラス
# =============================================================================

@dataclass
class GmmFit:
    """
    ガウス混合モデルの推定結果

    Attributes:
        K: 成分数
        means: K×d 平均（μ̂ として使う）
        covariances: K×d×d 共分散
        weights: 混合比
        assignments: 各行のハードラベル（責務の argmax）
        loglik: 最終対数尤度（全行の和）
        n_iter: 採用した初期化の EM 反復回数
        converged: 収束したか
    """
    K: int
    means: FloatArray
    covariances: FloatArray
    weights: FloatArray
    assignments: IntArray
    loglik: float
    n_iter: int = 0
    converged: bool = False


@dataclass
class KMeansFit:
    """
    k-means の結果

    Attributes:
        means: K×d 中心
        assignments: 各行のラベル
        inertia: クラスタ内平方和
    """
    means: FloatArray
    assignments: IntArray
    inertia: float


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _check_sizes(points: FloatArray, K: int) -> FloatArray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if K < 1:
        raise InvalidInput(f"K must be positive, got {K}")
    if K > points.shape[0]:
        raise InvalidInput(f"K={K} exceeds number of points n={points.shape[0]}")
    return points


def _regularization(points: FloatArray) -> float:
    d = points.shape[1]
    if points.shape[0] < 2:
        return REGULARIZATION_FLOOR
    trace = float(np.trace(np.atleast_2d(np.cov(points, rowvar=False))))
    return max(REGULARIZATION_SCALE * trace / d, REGULARIZATION_FLOOR)


def _mixture(X: FloatArray, K: int, config: ClusterConfig, **overrides: object) -> GaussianMixture:
    params: dict[str, object] = {
        "n_components": K,
        "covariance_type": "full",
        "init_params": "k-means++",
        "reg_covar": _regularization(X),
        "tol": config.tol,
        "max_iter": config.max_iter,
        "n_init": config.n_init,
        "random_state": config.seed,
    }
    params.update(overrides)
    return GaussianMixture(**params)


# =============================================================================
# 公開API
# =============================================================================

def fit_gmm(points: ArrayLike, K: int, config: Optional[ClusterConfig] = None) -> GmmFit:
    """
    全共分散GMMをEMで推定

    Args:
        points: n×d 行列
        K: 成分数
        config: max_iter, tol, n_init, seed

    Returns:
        GmmFit（n_init 回のうち最良のもの）

    Raises:
        InvalidInput: K > n
        NumericalFailure: 共分散が正定値にならない
    """
    config = config or ClusterConfig()
    X = _check_sizes(np.asarray(points, dtype=float), K)
    model = _mixture(X, K, config)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model.fit(X)
        assignments = model.predict(X)
    except ValueError as exc:
        raise NumericalFailure(f"GMM fit failed: {exc}") from exc
    if not model.converged_:
        logger.debug("GMM did not converge in %d iterations", config.max_iter)

    return GmmFit(
        K=K,
        means=np.asarray(model.means_, dtype=float),
        covariances=np.asarray(model.covariances_, dtype=float),
        weights=np.asarray(model.weights_, dtype=float),
        assignments=np.asarray(assignments, dtype=np.int64),
        loglik=float(model.score(X)) * X.shape[0],
        n_iter=int(model.n_iter_),
        converged=bool(model.converged_),
    )


def gmm_loglik_trace(
    points: ArrayLike, K: int, config: Optional[ClusterConfig] = None
) -> list[float]:
    """
    1回の初期化で EM を1反復ずつ進めたときの対数尤度の列

    warm_start=True, max_iter=1 の GaussianMixture を収束まで繰り返し fit する。
    """
    config = config or ClusterConfig()
    X = _check_sizes(np.asarray(points, dtype=float), K)
    model = _mixture(X, K, config, n_init=1, max_iter=1, warm_start=True)
    trace: list[float] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for _ in range(config.max_iter):
            model.fit(X)
            trace.append(float(model.score(X)) * X.shape[0])
            if len(trace) > 1 and trace[-1] - trace[-2] <= config.tol * abs(trace[-1]):
                break
    return trace


def fit_kmeans(points: ArrayLike, K: int, config: Optional[ClusterConfig] = None) -> KMeansFit:
    """
    k-means++ シードの Lloyd 反復（sklearn.cluster.KMeans）

    空クラスタは最遠点から再シードされる（sklearn の挙動）。

    Raises:
        InvalidInput: K > n
    """
    config = config or ClusterConfig()
    X = _check_sizes(np.asarray(points, dtype=float), K)
    model = KMeans(
        n_clusters=K,
        init="k-means++",
        n_init=config.n_init,
        max_iter=config.max_iter,
        tol=config.tol,
        random_state=config.seed,
    ).fit(X)
    return KMeansFit(
        means=np.asarray(model.cluster_centers_, dtype=float),
        assignments=np.asarray(model.labels_, dtype=np.int64),
        inertia=float(model.inertia_),
    )


def cluster_diagonal(diag: ArrayLike, K: int) -> IntArray:
    """
    B̂_Z の対角成分を K 個の等サイズグループに分ける

    値を降順に並べ、先頭から多重度 K̃/K 個ずつ同じグループにする
    （等サイズ制約付き1次元 k-means の解）。グループ 0 が最大値側。

    Args:
        diag: 長さ K̃ の対角成分
        K: グループ数

    Returns:
        長さ K̃ のグループラベル

    Raises:
        InvalidInput: K̃ が K で割り切れない
    """
    values = np.asarray(diag, dtype=float)
    ktilde = len(values)
    if K < 1 or ktilde % K != 0:
        raise InvalidInput(f"{ktilde} diagonal entries cannot form {K} groups of equal size")
    multiplicity = ktilde // K
    order = np.argsort(-values, kind="stable")
    labels = np.empty(ktilde, dtype=np.int64)
    labels[order] = np.arange(ktilde) // multiplicity
    return labels


def adjusted_rand_index(labels_a: ArrayLike, labels_b: ArrayLike) -> float:
    """
    調整ランド指数

    Raises:
        InvalidInput: 長さが異なる
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise InvalidInput(f"label vectors differ in length: {a.shape} vs {b.shape}")
    return float(adjusted_rand_score(a, b))
