"""
app/services/spectral.py

スペクトル埋め込みサービス

対称行列の固有分解フロントエンド、不定符号を持つ隣接スペクトル埋め込み（ASE）、
プロファイル尤度による埋め込み次元の選択（雑音の目安による下限つき）、低ランク確率行列の再構成を提供。

- n が小さい（dense_threshold 未満）または疎でない入力は scipy.linalg.eigh（直接法）
- それ以外は scipy.sparse.linalg.eigsh（ARPACK, which="LM"）
- 固有値は絶対値の降順。絶対値が同じ場合は正の固有値を先にする
- 各固有ベクトルは絶対値最大の成分が正になるよう符号をそろえる

公式ドキュメント:
- scipy.linalg.eigh: https://docs.scipy.org/doc/scipy/reference/generated/scipy.linalg.eigh.html
- scipy.sparse.linalg.eigsh: https://docs.scipy.org/doc/scipy/reference/generated/scipy.sparse.linalg.eigsh.html
- scipy.stats.norm: https://docs.scipy.org/doc/scipy/reference/generated/scipy.stats.norm.html
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, sparse, stats
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from app.models.common import InvalidInput, NumericalFailure

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
MatrixLike = Union[FloatArray, sparse.spmatrix, sparse.sparray, LinearOperator]

SYMMETRY_TOL = 1e-10
VARIANCE_FLOOR = 1e-12
NOISE_EDGE_SLACK = 1.1


# =============================================================================
# データクラス
# =============================================================================

@dataclass(frozen=True)
class SignatureMetric:
    """
    不定計量 I_{d1,d2}

    Attributes:
        d1: +1 の数
        d2: −1 の数
    """
    d1: int
    d2: int

    @property
    def diagonal(self) -> FloatArray:
        return np.concatenate([np.ones(self.d1), -np.ones(self.d2)])

    @property
    def matrix(self) -> FloatArray:
        return np.diag(self.diagonal)

    @property
    def d(self) -> int:
        return self.d1 + self.d2


@dataclass(frozen=True)
class EigenSelection:
    """
    絶対値上位 d 個の固有対

    Attributes:
        values: 固有値（絶対値の降順）
        vectors: n×d の正規直交固有ベクトル
    """
    values: FloatArray
    vectors: FloatArray

    @property
    def d1(self) -> int:
        return int(np.sum(self.values > 0))

    @property
    def d2(self) -> int:
        return len(self.values) - self.d1

    def head(self, d: int) -> "EigenSelection":
        """上位 d 個に絞る"""
        return EigenSelection(values=self.values[:d], vectors=self.vectors[:, :d])


@dataclass(frozen=True)
class Embedding:
    """
    推定潜在位置

    Y の列は固有値の順序のまま。計量は各列の固有値の符号で与えられ、
    signature は (正の数, 負の数)。比較は Y I Y^T のような不変量で行う。

    Attributes:
        Y: n×d 潜在位置
        signs: 各列の符号（+1 / −1）
    """
    Y: FloatArray
    signs: FloatArray

    @property
    def signature(self) -> SignatureMetric:
        d1 = int(np.sum(self.signs > 0))
        return SignatureMetric(d1=d1, d2=len(self.signs) - d1)

    @property
    def d(self) -> int:
        return self.Y.shape[1]


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _order_by_magnitude(values: FloatArray) -> NDArray[np.int64]:
    # 主キー: |λ| 降順、副キー: λ 降順（正を先に）
    return np.lexsort((-values, -np.abs(values)))


def orient_columns(vectors: FloatArray) -> FloatArray:
    """各列の絶対値最大の成分が正になるよう符号をそろえる"""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _check_symmetric(M: MatrixLike) -> None:
    if isinstance(M, LinearOperator):
        return
    if sparse.issparse(M):
        diff = abs(M - M.T)
        asym = diff.max() if diff.nnz else 0.0
    else:
        asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > SYMMETRY_TOL:
        raise InvalidInput(f"matrix is not symmetric (max |M - M^T| = {asym:.3e})")


def _as_dense(M: MatrixLike) -> FloatArray:
    if isinstance(M, LinearOperator):
        return np.asarray(M @ np.eye(M.shape[0]))
    if sparse.issparse(M):
        return np.asarray(M.toarray(), dtype=float)
    return np.asarray(M, dtype=float)


def _is_zero(M: MatrixLike) -> bool:
    if isinstance(M, LinearOperator):
        return False
    if sparse.issparse(M):
        return M.count_nonzero() == 0
    return not np.any(M)


# =============================================================================
# 公開API
# =============================================================================

def top_eigenpairs(
    M: MatrixLike,
    d: int,
    *,
    tol: float = 1e-10,
    dense_threshold: int = 256,
) -> EigenSelection:
    """
    絶対値が大きい順に d 個の固有対を求める

    Args:
        M: n×n 対称行列（密行列・疎行列・LinearOperator）
        d: 固有対の数（1 ≤ d ≤ n）
        tol: 反復ソルバの許容誤差
        dense_threshold: これ未満の n は直接法

    Returns:
        EigenSelection

    Raises:
        InvalidInput: 非対称、または d が範囲外
        NumericalFailure: 反復ソルバの非収束
    """
    n = M.shape[0]
    if M.shape != (n, n):
        raise InvalidInput(f"matrix must be square, got shape {M.shape}")
    if not 1 <= d <= n:
        raise InvalidInput(f"d must satisfy 1 <= d <= n={n}, got {d}")
    if not isinstance(M, LinearOperator) and not sparse.issparse(M):
        M = np.asarray(M, dtype=float)
    _check_symmetric(M)

    if _is_zero(M):
        return EigenSelection(values=np.zeros(d), vectors=np.eye(n, d))

    use_dense = n < dense_threshold or d >= n - 1 or not (
        sparse.issparse(M) or isinstance(M, LinearOperator)
    )
    if use_dense:
        values, vectors = linalg.eigh(_as_dense(M))
    else:
        v0 = np.random.default_rng(0).standard_normal(n)
        maxiter = 300 * d
        try:
            values, vectors = eigsh(M, k=d, which="LM", tol=tol, maxiter=maxiter, v0=v0)
        except ArpackNoConvergence as exc:
            raise NumericalFailure(
                f"eigsh did not converge: {len(exc.eigenvalues)}/{d} eigenpairs after "
                f"maxiter={maxiter} (tol={tol})"
            ) from exc

    order = _order_by_magnitude(values)[:d]
    return EigenSelection(values=values[order], vectors=orient_columns(vectors[:, order]))


def embed_selection(selection: EigenSelection) -> Embedding:
    """固有対から Y = U|S|^{1/2} を作る"""
    Y = selection.vectors * np.sqrt(np.abs(selection.values))[None, :]
    signs = np.where(selection.values < 0, -1.0, 1.0)
    return Embedding(Y=Y, signs=signs)


def ase(
    A: MatrixLike,
    d: int,
    *,
    tol: float = 1e-10,
    dense_threshold: int = 256,
) -> Embedding:
    """
    隣接スペクトル埋め込み Ŷ = U_A |S_A|^{1/2}

    Args:
        A: 対称な隣接行列（確率行列 P も可）
        d: 埋め込み次元

    Returns:
        Embedding
    """
    return embed_selection(top_eigenpairs(A, d, tol=tol, dense_threshold=dense_threshold))


def reconstruct_p(embedding: Embedding) -> FloatArray:
    """P̂ = Ŷ I Ŷ^T"""
    Y = embedding.Y
    return (Y * embedding.signs[None, :]) @ Y.T


def indefinite_products(points: FloatArray, signs: FloatArray) -> FloatArray:
    """行同士の不定内積 x_i^T I x_j"""
    return (points * signs[None, :]) @ points.T


def _profile_elbow(values: FloatArray) -> int:
    p = len(values)
    profile = np.empty(p - 1)
    for q in range(1, p):
        head, tail = values[:q], values[q:]
        mean_head, mean_tail = head.mean(), tail.mean()
        ss = np.sum((head - mean_head) ** 2) + np.sum((tail - mean_tail) ** 2)
        variance = max(ss / (p - 2), VARIANCE_FLOOR) if p > 2 else VARIANCE_FLOOR
        sd = np.sqrt(variance)
        profile[q - 1] = (
            stats.norm.logpdf(head, mean_head, sd).sum()
            + stats.norm.logpdf(tail, mean_tail, sd).sum()
        )
    return int(np.argmax(profile)) + 1


def find_elbows(
    eigenvalues: FloatArray, max_d: Optional[int] = None, n_elbows: int = 1
) -> list[int]:
    """
    プロファイル尤度のエルボーを繰り返し求める

    最初のエルボー q₁ の後ろ（q₁+1 番目以降）にもう一度同じ方法を適用して q₂ を求め、
    これを n_elbows 回まで続ける。返す位置は先頭からの累積。

    Args:
        eigenvalues: 絶対値の降順に並んだ固有値（符号は無視する）
        max_d: 先頭から見る個数
        n_elbows: 求めるエルボーの最大数

    Returns:
        昇順のエルボー位置（残りが2個未満になったら打ち切り）

    Raises:
        InvalidInput: 値が2個未満、n_elbows < 1
    """
    if n_elbows < 1:
        raise InvalidInput(f"n_elbows must be positive, got {n_elbows}")
    values = np.abs(np.asarray(eigenvalues, dtype=float))
    if max_d is not None:
        values = values[:max_d]
    if len(values) < 2:
        raise InvalidInput(f"dimension selection needs at least 2 values, got {len(values)}")

    elbows: list[int] = []
    offset = 0
    while len(elbows) < n_elbows and len(values) - offset >= 2:
        offset += _profile_elbow(values[offset:])
        elbows.append(offset)
    return elbows


def select_dimension(
    eigenvalues: FloatArray,
    max_d: Optional[int] = None,
    *,
    plus_one: bool = False,
    n_elbows: int = 1,
) -> int:
    """
    プロファイル尤度による埋め込み次元（エルボー）の選択

    分割点 q ごとに上位 q 個と残りを共通分散のガウス分布でモデル化し、
    対数尤度を最大にする q を返す。n_elbows > 1 なら繰り返したエルボーの最後を返す。

    Args:
        eigenvalues: 絶対値の降順に並んだ固有値（符号は無視する）
        max_d: 先頭から見る個数
        plus_one: 「最初のエルボー + 1」規約を使う
        n_elbows: 何番目のエルボーまで進むか

    Returns:
        選択された次元

    Raises:
        InvalidInput: 値が2個未満
    """
    elbows = find_elbows(eigenvalues, max_d, n_elbows)
    p = len(eigenvalues) if max_d is None else min(max_d, len(eigenvalues))
    elbow = elbows[-1]
    if plus_one:
        elbow = min(elbow + 1, p)
    logger.debug("profile likelihood elbows %s of %d values", elbows, p)
    return elbow


def noise_edge(degrees: FloatArray, slack: float = NOISE_EDGE_SLACK) -> float:
    """
    A − P のスペクトルノルムの目安 2·√max_i d_i(1 − d_i/n)

    Σ_j p_ij(1 − p_ij) ≤ d_i(1 − d_i/n) なので、次数から求めた値は雑音の固有値の上側の目安になる。

    Args:
        degrees: 各ノードの次数（行和）
        slack: 掛ける余裕
    """
    d = np.asarray(degrees, dtype=float)
    n = len(d)
    if n == 0:
        return 0.0
    variance = np.clip(d * (1.0 - d / n), 0.0, None)
    return float(slack * 2.0 * np.sqrt(variance.max()))


def signal_dimension(eigenvalues: FloatArray, edge: float, max_d: Optional[int] = None) -> int:
    """絶対値が雑音の目安 edge を超える固有値の数"""
    values = np.abs(np.asarray(eigenvalues, dtype=float))
    if max_d is not None:
        values = values[:max_d]
    return int(np.count_nonzero(values > edge))


def default_dimension(
    eigenvalues: FloatArray,
    degrees: Optional[FloatArray] = None,
    *,
    max_rank: Optional[int] = None,
    plus_one: bool = False,
) -> int:
    """
    既定の d̂: エルボーと、雑音の目安を超える固有値の数の大きい方

    ひとつ目の固有値が突出していると最初のエルボーは1になるので、
    次数から求めた雑音の目安（noise_edge）を超える固有値の数を下限にする。

    Args:
        eigenvalues: 絶対値の降順に並んだ固有値
        degrees: 各ノードの次数（None なら下限を使わない）
        max_rank: 下限の上限（確率行列の階数の上限 K̃ など）
        plus_one: 「最初のエルボー + 1」規約を使う

    Returns:
        選択された次元
    """
    values = np.asarray(eigenvalues, dtype=float)
    elbow = select_dimension(values, plus_one=plus_one) if len(values) >= 2 else 1
    if degrees is None:
        return elbow
    edge = noise_edge(degrees)
    floor = signal_dimension(values, edge)
    if max_rank is not None:
        floor = min(floor, max_rank)
    logger.info("  -> elbow=%d, %d eigenvalues above noise edge %.3f", elbow, floor, edge)
    return max(elbow, floor)
