"""
app/models/design.py

モンテカルロ設計と集計結果のモデル
"""
from typing import Optional

from pydantic import BaseModel, Field, field_validator

from app.models.fit import ClustererKind, EstimatorKind
from app.models.sbm import SbmSpec

# =============================================================================
# 設計
# =============================================================================

class McDesign(BaseModel):
    """
    モンテカルロ設計

    Attributes:
        name (str): 設計名
        spec (SbmSpec): 生成モデル
        n_values (list[int]): ネットワークサイズ
        replicates (int): 各サイズの反復回数
        estimators (EstimatorKind): 実行するβ推定量
        clusterer (ClustererKind): クラスタリング手法
        d_hat (Optional[int]): 埋め込み次元の上書き
        seed (int): 設計シード（反復ごとのシードはここから導出）
    """
    name: str = Field(..., examples=["design1"])
    spec: SbmSpec
    n_values: list[int] = Field(..., min_length=1, examples=[[2000, 5000]])
    replicates: int = Field(default=100, ge=1)
    estimators: EstimatorKind = Field(default=EstimatorKind.BOTH)
    clusterer: ClustererKind = Field(default=ClustererKind.GMM)
    d_hat: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0)

    @field_validator("n_values")
    @classmethod
    def _check_sizes(cls, value: list[int]) -> list[int]:
        if any(n <= 0 for n in value):
            raise ValueError("n_values must be positive")
        return value


# =============================================================================
# 集計
# =============================================================================

class McParameterSummary(BaseModel):
    """
    1パラメータ分の集計

    Attributes:
        parameter (str): パラメータ名
        true_value (float): 真値
        mean_abs_error (Optional[float]): |β̂−β| の平均（全反復が発散なら None）
        mcse (Optional[float]): モンテカルロ標準誤差（反復1回なら None）
    """
    parameter: str
    true_value: float
    mean_abs_error: Optional[float] = None
    mcse: Optional[float] = None


class McSummaryRow(BaseModel):
    """
    (設計, n, 推定量) ごとの集計行

    Attributes:
        design (str): 設計名
        estimator (EstimatorKind): 推定量
        n (int): ネットワークサイズ
        parameters (list[McParameterSummary]): パラメータごとの誤差
        mean_seconds (Optional[float]): 1回あたりの平均実行時間
        mean_ari (Optional[float]): 拡張ブロックの平均ARI
        replicates (int): 反復回数
        diverged (int): DegenerateFit で除外した反復数
    """
    design: str
    estimator: EstimatorKind
    n: int
    parameters: list[McParameterSummary]
    mean_seconds: Optional[float] = None
    mean_ari: Optional[float] = None
    replicates: int
    diverged: int = 0


class McSummary(BaseModel):
    """設計全体の集計"""
    design: str
    seed: int
    rows: list[McSummaryRow] = Field(default_factory=list)


class SimulationReport(BaseModel):
    """
    `grdpg simulate` の結果

    Attributes:
        n (int): ノード数
        m (int): 辺数
        ktilde (int): 拡張ブロック数
        seed (int): 乱数シード
        edges_path (str): エッジリスト
        covariates_path (str): 共変量テーブル
        truth_path (str): 正解ラベル（node_id, tau, xi）
    """
    n: int
    m: int
    ktilde: int
    seed: int
    edges_path: str
    covariates_path: str
    truth_path: str
