"""
app/models/fit.py

推定パイプラインのオプションとレポートモデル

FitOptions は app/services/estimator.py の fit() に渡され、
FitReport は `grdpg fit` が書き出すJSONレポートの data 部になる。
スキーマは docs/report.md を参照。
"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field

from app.models.sbm import LinkKind

# =============================================================================
# 列挙型
# =============================================================================

class EstimatorKind(str, Enum):
    """
    β推定量の選択

    Values:
        SIMPLE_MEAN: 単純平均推定量
        WEIGHTED_MEAN: ノード数重み付き平均推定量
        BOTH: 両方
    """
    SIMPLE_MEAN = "simple_mean"
    WEIGHTED_MEAN = "weighted_mean"
    BOTH = "both"


class ClustererKind(str, Enum):
    """埋め込み行のクラスタリング手法"""
    GMM = "gmm"
    KMEANS = "kmeans"


class BetaVariant(str, Enum):
    """
    BetaEstimate の種類

    Values:
        SIMPLE_MEAN: 集合 M 上の単純平均
        WEIGHTED_MEAN: 集合 Ω 上の ω 重み付き平均
        SINGLE_PAIR: 1組の要素差（差分ホモフィリー）
    """
    SIMPLE_MEAN = "simple_mean"
    WEIGHTED_MEAN = "weighted_mean"
    SINGLE_PAIR = "single_pair"


class Regime(str, Enum):
    """漸近レジーム（密 / 準スパース）"""
    DENSE = "dense"
    SPARSE = "sparse"


# =============================================================================
# オプション
# =============================================================================

class ClusterConfig(BaseModel):
    """
    クラスタリング設定

    Attributes:
        max_iter (int): EM / Lloyd の最大反復回数
        tol (float): 対数尤度（慣性）の相対変化による収束判定
        n_init (int): 初期化の回数（最良を採用）
        seed (int): 乱数シード
    """
    max_iter: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    n_init: int = Field(default=4, ge=1)
    seed: int = Field(default=0)


class FitOptions(BaseModel):
    """
    推定オプション

    Attributes:
        K (int): 潜在ブロック数（必須）
        d_hat (Optional[int]): 埋め込み次元の上書き（None ならプロファイル尤度で選択）
        link (LinkKind): リンク関数
        estimator (EstimatorKind): β推定量
        clusterer (ClustererKind): クラスタリング手法
        seed (int): 乱数シード
        clip_epsilon (float): h⁻¹ に渡す確率のクリップ幅
        elbow_plus_one (bool): 「最初のエルボー + 1」規約を使う
        latent_dim (Optional[int]): 共変量を除いた潜在位置の次元の上書き
        regime (Regime): 標準誤差の漸近レジーム
        rho (Optional[float]): 既知のスパース係数（None なら平均次数から推定）
        signal_floor (bool): 雑音の目安を超える固有値の数（K̃ 以下）を d̂ の下限にする
        max_d_cap (int): 次元選択で見る固有値数の上限
        eigen_tol (float): 反復ソルバの許容誤差
        dense_threshold (int): これ未満の n は直接法で固有分解
        regularize_gamma (float): 平均次数による正則化の強さ（0 なら正則化しない）
        cluster (ClusterConfig): クラスタリング設定
    """
    K: int = Field(..., ge=1, description="潜在ブロック数", examples=[2])
    d_hat: Optional[int] = Field(default=None, ge=1, description="埋め込み次元の上書き")
    link: LinkKind = Field(default=LinkKind.LOGIT)
    estimator: EstimatorKind = Field(default=EstimatorKind.BOTH)
    clusterer: ClustererKind = Field(default=ClustererKind.GMM)
    seed: int = Field(default=0)
    clip_epsilon: float = Field(default=1e-6, gt=0, lt=0.5)
    elbow_plus_one: bool = Field(default=False)
    latent_dim: Optional[int] = Field(default=None, ge=1)
    regime: Regime = Field(default=Regime.DENSE)
    rho: Optional[float] = Field(default=None, gt=0, le=1)
    signal_floor: bool = Field(default=True)
    max_d_cap: int = Field(default=50, ge=2)
    eigen_tol: float = Field(default=1e-10, gt=0)
    dense_threshold: int = Field(default=256, ge=1)
    regularize_gamma: float = Field(default=0.0, ge=0)
    cluster: ClusterConfig = Field(default_factory=ClusterConfig)


# =============================================================================
# レポート
# =============================================================================

class BetaReport(BaseModel):
    """
    β推定値1件分のレポート

    Attributes:
        parameter (str): パラメータ名（"beta" / "beta1" / "beta2" など）
        covariate (str): 対応する共変量列名
        variant (BetaVariant): 推定量の種類
        value (float): 点推定
        bias_hat (float): プラグインバイアス
        se_hat (float): プラグイン標準誤差
        bootstrap_se (Optional[float]): パラメトリックブートストラップ標準誤差
        pairs_used (list[list[int]]): 使用した (k, ℓ, ℓ′) の組
    """
    parameter: str = Field(..., examples=["beta", "beta1"])
    covariate: str = Field(..., examples=["female"])
    variant: BetaVariant
    value: float
    bias_hat: float
    se_hat: float
    bootstrap_se: Optional[float] = None
    pairs_used: list[list[int]] = Field(default_factory=list)


class StageTimings(BaseModel):
    """
    ステージ別の実行時間（秒）

    スナップショット比較から除外できるよう、レポート内で独立したセクションに置く。
    """
    embed: float = 0.0
    cluster: float = 0.0
    estimate: float = 0.0
    inference: float = 0.0
    total: float = 0.0


class FitReport(BaseModel):
    """
    `grdpg fit` の結果レポート

    Attributes:
        n (int): ノード数
        K (int): 潜在ブロック数
        ktilde (int): 拡張ブロック数
        covariates (list[str]): 使用した共変量列
        link (LinkKind): リンク関数
        regime (Regime): 漸近レジーム
        d_hat (int): 埋め込み次元
        signature (list[int]): (d̂₁, d̂₂)
        eigenvalues (list[float]): 次元選択に使った固有値（絶対値降順）
        theta_hat_Z (list[list[float]]): θ̂_Z
        B_hat_Z (list[list[float]]): B̂_Z = h⁻¹(θ̂_Z)
        block_sizes (list[int]): 拡張ブロックのノード数
        covariate_ones (list[list[int]]): 拡張ブロック×共変量ごとの値1のノード数
        z_theta (list[list[int]]): 拡張ブロックの多数決共変量ラベル
        latent_group (list[int]): 拡張ブロック→潜在ブロック ψ̂
        betas (list[BetaReport]): β推定値
        latent_positions (list[list[float]]): 共変量を除いた潜在位置
        latent_signature (list[int]): 潜在位置の符号数
        clip_count (int): クリップされた θ̂_Z 要素数
        rho_hat (float): スパース係数（既知値または推定値）
        ari (Optional[float]): 真のラベルとのARI（与えられた場合）
        timings (StageTimings): ステージ別実行時間
    """
    n: int
    K: int
    ktilde: int
    covariates: list[str]
    link: LinkKind
    regime: Regime
    d_hat: int
    signature: list[int]
    eigenvalues: list[float]
    theta_hat_Z: list[list[float]]
    B_hat_Z: list[list[float]]
    block_sizes: list[int]
    covariate_ones: list[list[int]]
    z_theta: list[list[int]]
    latent_group: list[int]
    betas: list[BetaReport]
    latent_positions: list[list[float]]
    latent_signature: list[int]
    clip_count: int
    rho_hat: float
    ari: Optional[float] = None
    timings: StageTimings = Field(default_factory=StageTimings)


class EmbedReport(BaseModel):
    """
    `grdpg embed` の結果

    Attributes:
        n (int): ノード数
        d_hat (int): 埋め込み次元
        signature (list[int]): (d̂₁, d̂₂)
        eigenvalues (list[float]): 次元選択に使った固有値
        output (str): 埋め込みTSVのパス
    """
    n: int
    d_hat: int
    signature: list[int]
    eigenvalues: list[float]
    output: str
