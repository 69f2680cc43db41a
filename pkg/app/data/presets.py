"""
app/data/presets.py

組み込みのモデル仕様とモンテカルロ設計

- EXAMPLE_1: 共変量なし、Identity リンク、K=2, ν=(0.1, 0.7)
- EXAMPLE_1_K5: 共変量なし、Identity リンク、K=5, ν=(0.1, 0.3, 0.5, 0.7, 0.9)
- EXAMPLE_1_HOMOPHILY: EXAMPLE_1 に β=0.05 の共変量を加えたもの（漸近正規性の確認用）
- EXAMPLE_2: Logit リンク、共変量1個、ν=(−1.5, 1), β=1.5
- EXAMPLE_3: Logit リンク、共変量1個、d=2 の中心、β=1.5（EXAMPLE_3_SMALL_BETA は β=0.5）
- CAMPUS: 共変量3個（K̃=8K）の大学SNS風モデル
- DESIGNS: モンテカルロ設計 1〜5（K=2, ν=(−1.5, 1), β=(0.5, 0.75), Logit, d̂ は θ_Z の階数に固定）

使用例:
    from app.data import get_preset
    spec = get_preset("example2")
"""
from app.models.common import ConfigError
from app.models.design import McDesign
from app.models.sbm import CovariateLaw, CovariateLawKind, LinkKind, SbmSpec
from app.services.model_core import expand_sbm

# =============================================================================
# 例題
# =============================================================================

_BALANCED = CovariateLaw(kind=CovariateLawKind.BERNOULLI_PER_BLOCK, b=[0.5, 0.5])

EXAMPLE_1 = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[0.1], [0.7]],
    link=LinkKind.IDENTITY,
)

EXAMPLE_1_K5 = SbmSpec(
    K=5,
    pi=[0.2] * 5,
    nu=[[0.1], [0.3], [0.5], [0.7], [0.9]],
    link=LinkKind.IDENTITY,
)

EXAMPLE_1_HOMOPHILY = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[0.1], [0.7]],
    covariates=[_BALANCED],
    beta=[0.05],
    link=LinkKind.IDENTITY,
)

EXAMPLE_2 = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[-1.5], [1.0]],
    covariates=[_BALANCED],
    beta=[1.5],
    link=LinkKind.LOGIT,
)

EXAMPLE_3 = SbmSpec(
    K=2,
    pi=[0.5, 0.5],
    nu=[[-1.5, -1.0], [1.0, 0.5]],
    covariates=[_BALANCED],
    beta=[1.5],
    link=LinkKind.LOGIT,
)

EXAMPLE_3_SMALL_BETA = EXAMPLE_3.model_copy(update={"beta": [0.5]})

CAMPUS = SbmSpec(
    K=2,
    pi=[0.4, 0.6],
    nu=[[-1.2], [0.9]],
    covariates=[
        CovariateLaw(kind=CovariateLawKind.BERNOULLI_PER_BLOCK, b=[0.5, 0.5]),
        CovariateLaw(kind=CovariateLawKind.BERNOULLI_PER_BLOCK, b=[0.3, 0.6]),
        CovariateLaw(kind=CovariateLawKind.BERNOULLI_PER_BLOCK, b=[0.5, 0.4]),
    ],
    beta=[0.6, 0.9, 0.4],
    link=LinkKind.LOGIT,
)


# =============================================================================
# モンテカルロ設計
# =============================================================================

# (π₁, b_z, b_w, correlation)
_DESIGN_TABLE = {
    1: (0.5, 0.5, 0.5, 0.0),
    2: (0.5, 0.5, 0.5, 0.3),
    3: (0.3, 0.5, 0.5, 0.0),
    4: (0.3, 0.4, 0.6, 0.0),
    5: (0.3, 0.4, 0.6, 0.3),
}


def _design(number: int) -> McDesign:
    pi1, b_z, b_w, correlation = _DESIGN_TABLE[number]
    spec = SbmSpec(
        K=2,
        pi=[pi1, 1.0 - pi1],
        nu=[[-1.5], [1.0]],
        covariates=[CovariateLaw(
            kind=CovariateLawKind.BERNOULLI_PAIR, b_z=b_z, b_w=b_w, correlation=correlation,
        )],
        beta=[0.5, 0.75],
        link=LinkKind.LOGIT,
    )
    return McDesign(
        name=f"design{number}",
        spec=spec,
        n_values=[2000, 5000, 10000],
        replicates=100,
        seed=number,
        d_hat=expand_sbm(spec).rank,
    )


DESIGNS: dict[str, McDesign] = {f"design{k}": _design(k) for k in _DESIGN_TABLE}

SPECS: dict[str, SbmSpec] = {
    "example1": EXAMPLE_1,
    "example1_k5": EXAMPLE_1_K5,
    "example1_homophily": EXAMPLE_1_HOMOPHILY,
    "example2": EXAMPLE_2,
    "example3": EXAMPLE_3,
    "example3_small_beta": EXAMPLE_3_SMALL_BETA,
    "campus": CAMPUS,
}


# =============================================================================
# 取得関数
# =============================================================================

def get_preset(name: str) -> SbmSpec:
    """
    名前でモデル仕様を取得

    Raises:
        ConfigError: 未知の名前
    """
    try:
        return SPECS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(SPECS)}") from None


def get_design(name: str) -> McDesign:
    """
    名前でモンテカルロ設計を取得

    Raises:
        ConfigError: 未知の名前
    """
    try:
        return DESIGNS[name]
    except KeyError:
        raise ConfigError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}") from None
