"""
app/models/sbm.py

生成モデル（共変量付き確率的ブロックモデル）の設定モデル

SbmSpec はCLIの設定ファイルとモンテカルロ設計から読み込まれ、
app/services/model_core.py で拡張ブロック行列 θ_Z に展開される。

参照:
- Pydantic Validators: https://docs.pydantic.dev/latest/concepts/validators/
"""
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

# =============================================================================
# 列挙型
# =============================================================================

class LinkKind(str, Enum):
    """
    リンク関数の種類

    Values:
        IDENTITY: h(u) = u
        LOGIT: h(u) = e^u / (1 + e^u)
    """
    IDENTITY = "identity"
    LOGIT = "logit"


class CovariateLawKind(str, Enum):
    """
    共変量の生成法則

    Values:
        BERNOULLI_PER_BLOCK: Z | τ=k ~ Bernoulli(b_k)
        BERNOULLI_PAIR: ブロックに依存しない相関付き2値共変量の組
    """
    BERNOULLI_PER_BLOCK = "bernoulli_per_block"
    BERNOULLI_PAIR = "bernoulli_pair"


# =============================================================================
# 共変量法則
# =============================================================================

class CovariateLaw(BaseModel):
    """
    2値共変量の生成法則

    BERNOULLI_PAIR は共変量2個分として数える（arity=2）。

    Attributes:
        kind (CovariateLawKind): 法則の種類
        b (Optional[list[float]]): ブロックごとの成功確率（BERNOULLI_PER_BLOCK）
        b_z (Optional[float]): 1個目の周辺確率（BERNOULLI_PAIR）
        b_w (Optional[float]): 2個目の周辺確率（BERNOULLI_PAIR）
        correlation (float): ピアソン相関（BERNOULLI_PAIR）

    使用例:
        CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5])
        CovariateLaw(kind="bernoulli_pair", b_z=0.4, b_w=0.6, correlation=0.3)
    """
    kind: CovariateLawKind = Field(..., description="法則の種類")
    b: Optional[list[float]] = Field(
        default=None,
        description="ブロックごとの成功確率",
        examples=[[0.5, 0.5]]
    )
    b_z: Optional[float] = Field(default=None, gt=0, lt=1, examples=[0.4])
    b_w: Optional[float] = Field(default=None, gt=0, lt=1, examples=[0.6])
    correlation: float = Field(default=0.0, ge=-1, le=1, examples=[0.0, 0.3])

    @model_validator(mode="after")
    def _check_fields(self) -> "CovariateLaw":
        if self.kind == CovariateLawKind.BERNOULLI_PER_BLOCK:
            if not self.b:
                raise ValueError("bernoulli_per_block requires b")
            if any(not 0 < p < 1 for p in self.b):
                raise ValueError(f"every b_k must lie in (0,1), got {self.b}")
        else:
            if self.b_z is None or self.b_w is None:
                raise ValueError("bernoulli_pair requires b_z and b_w")
        return self

    @property
    def arity(self) -> int:
        """この法則が生成する共変量の数"""
        return 1 if self.kind == CovariateLawKind.BERNOULLI_PER_BLOCK else 2


# =============================================================================
# 生成モデル
# =============================================================================

class SbmSpec(BaseModel):
    """
    共変量付きSBMの生成モデル

    P_ij = ρ · h(ν_τi^T ν_τj + Σ_c β_c · 1{Z_ic = Z_jc})

    differential=True の場合は共変量1個で beta=(β₁, β₂) とし、
    β₁ は両端点の値が0、β₂ は両端点の値が1のときに加算される。

    Attributes:
        K (int): 潜在ブロック数
        pi (list[float]): ブロック事前確率（和が1）
        nu (list[list[float]]): 潜在中心 ν_k ∈ R^d（K行）
        covariates (list[CovariateLaw]): 共変量の生成法則
        beta (list[float]): ホモフィリーパラメータ（共変量ごと）
        differential (bool): 差分ホモフィリーモデルか
        link (LinkKind): リンク関数
        rho (float): スパース係数

    使用例:
        # K=2、共変量1個、Logit リンク
        SbmSpec(K=2, pi=[0.5, 0.5], nu=[[-1.5], [1.0]],
                covariates=[CovariateLaw(kind="bernoulli_per_block", b=[0.5, 0.5])],
                beta=[1.5], link="logit")
    """
    K: int = Field(..., ge=1, description="潜在ブロック数", examples=[2])
    pi: list[float] = Field(..., description="ブロック事前確率", examples=[[0.5, 0.5]])
    nu: list[list[float]] = Field(
        ...,
        description="潜在中心（K行 d列）。スカラーの並びも受け付ける",
        examples=[[[-1.5], [1.0]]]
    )
    covariates: list[CovariateLaw] = Field(default_factory=list, description="共変量の生成法則")
    beta: list[float] = Field(default_factory=list, description="ホモフィリーパラメータ")
    differential: bool = Field(default=False, description="差分ホモフィリー")
    link: LinkKind = Field(default=LinkKind.LOGIT, description="リンク関数")
    rho: float = Field(default=1.0, ge=0, le=1, description="スパース係数")

    @field_validator("nu", mode="before")
    @classmethod
    def _scalars_to_rows(cls, value: object) -> object:
        if isinstance(value, (list, tuple)):
            return [[v] if isinstance(v, (int, float)) else v for v in value]
        return value

    @model_validator(mode="after")
    def _check_shapes(self) -> "SbmSpec":
        if len(self.pi) != self.K:
            raise ValueError(f"pi has {len(self.pi)} entries, expected K={self.K}")
        if any(p <= 0 for p in self.pi):
            raise ValueError("pi entries must be positive")
        if abs(sum(self.pi) - 1.0) > 1e-12:
            raise ValueError(f"pi must sum to 1, got {sum(self.pi)!r}")
        if len(self.nu) != self.K:
            raise ValueError(f"nu has {len(self.nu)} rows, expected K={self.K}")
        if len({len(row) for row in self.nu}) != 1 or len(self.nu[0]) == 0:
            raise ValueError("nu rows must share one positive dimension")
        for law in self.covariates:
            if law.kind == CovariateLawKind.BERNOULLI_PER_BLOCK and len(law.b or []) != self.K:
                raise ValueError(f"bernoulli_per_block b must have K={self.K} entries")
        expected = 2 if self.differential else self.arity
        if self.differential and self.arity != 1:
            raise ValueError("differential homophily requires exactly one binary covariate")
        if len(self.beta) != expected:
            raise ValueError(f"beta has {len(self.beta)} entries, expected {expected}")
        return self

    @property
    def d(self) -> int:
        """潜在空間の次元"""
        return len(self.nu[0])

    @property
    def arity(self) -> int:
        """2値共変量の総数"""
        return sum(law.arity for law in self.covariates)

    @property
    def ktilde(self) -> int:
        """拡張ブロック数 2^p·K"""
        return self.K * 2 ** self.arity
