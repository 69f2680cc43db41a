"""
app/services/model_core.py

生成モデルのコア

リンク関数と、共変量付きSBMの拡張ブロック確率行列 θ_Z の構築を提供。
潜在ブロック k と2値共変量パターン z から拡張ブロックを作り、
θ_Z[a,b] = h(ν_k^T ν_ℓ + Σ_c β_c · 1{z_ac = z_bc}) を並べる。

拡張ブロックの並び:
    index = k · 2^p + Σ_c z_c · 2^c
    共変量1個: (τ=1,Z=0), (τ=1,Z=1), (τ=2,Z=0), ...
    共変量2個: ブロック内で (00, 10, 01, 11)

公式ドキュメント:
- scipy.special.expit: https://docs.scipy.org/doc/scipy/reference/generated/scipy.special.expit.html
- scipy.special.logit: https://docs.scipy.org/doc/scipy/reference/generated/scipy.special.logit.html
"""
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from app.models.common import InvalidInput, InvalidModel
from app.models.sbm import CovariateLawKind, LinkKind, SbmSpec

FloatArray = NDArray[np.float64]


# =============================================================================
# リンク関数
# =============================================================================

@dataclass(frozen=True)
class LinkFunction:
    """
    リンク関数 h とその逆関数

    Attributes:
        kind: リンクの種類

    使用例:
        link = get_link(LinkKind.LOGIT)
        link.forward(0.0)              # 0.5
        link.inverse_derivative(0.5)   # 4.0
    """
    kind: LinkKind

    def forward(self, u: ArrayLike) -> FloatArray:
        """h(u)"""
        u = np.asarray(u, dtype=float)
        if self.kind == LinkKind.LOGIT:
            return special.expit(u)
        return u

    def inverse(self, p: ArrayLike) -> FloatArray:
        """h⁻¹(p)"""
        p = np.asarray(p, dtype=float)
        if self.kind == LinkKind.LOGIT:
            return special.logit(p)
        return p

    def inverse_derivative(self, p: ArrayLike) -> FloatArray:
        """
        (h⁻¹)′(p)

        Raises:
            InvalidInput: Logit で p が (0,1) の外
        """
        p = np.asarray(p, dtype=float)
        if self.kind == LinkKind.LOGIT:
            if np.any((p <= 0.0) | (p >= 1.0)):
                raise InvalidInput(
                    f"logit derivative undefined at boundary probability {p.min()!r}..{p.max()!r}"
                )
            return 1.0 / (p * (1.0 - p))
        return np.ones_like(p)


def get_link(kind: Union[LinkKind, str]) -> LinkFunction:
    """LinkKind（または文字列）から LinkFunction を返す"""
    return LinkFunction(LinkKind(kind))


# =============================================================================
# データクラス
# =============================================================================

@dataclass(frozen=True)
class ExpandedSbm:
    """
    拡張ブロックモデル

    Attributes:
        K: 潜在ブロック数
        arity: 2値共変量の数 p
        theta_Z: K̃×K̃ 確率行列
        eta: 拡張ブロックの確率（長さ K̃）
        label_map: 拡張ブロックごとの (τ, 共変量値のタプル)
        link: 生成に使ったリンク関数
        rho: スパース係数（θ_Z には掛けない）
    """
    K: int
    arity: int
    theta_Z: FloatArray
    eta: FloatArray
    label_map: tuple[tuple[int, tuple[int, ...]], ...]
    link: LinkFunction
    rho: float = 1.0

    @property
    def ktilde(self) -> int:
        return len(self.label_map)

    @property
    def block_tau(self) -> NDArray[np.int64]:
        """拡張ブロック→潜在ブロック"""
        return np.array([tau for tau, _ in self.label_map], dtype=np.int64)

    @property
    def block_z(self) -> NDArray[np.int64]:
        """拡張ブロック×共変量 の値（K̃×p）"""
        return np.array([z for _, z in self.label_map], dtype=np.int64).reshape(
            self.ktilde, self.arity
        )

    @property
    def rank(self) -> int:
        """θ_Z の階数（ノイズなしの埋め込み次元）"""
        return int(np.linalg.matrix_rank(self.theta_Z))

    @property
    def B_Z(self) -> FloatArray:
        """h⁻¹(θ_Z)"""
        return self.link.inverse(self.theta_Z)


# =============================================================================
# 共変量パターン
# =============================================================================

def covariate_patterns(arity: int) -> NDArray[np.int64]:
    """
    2値共変量パターンを拡張ブロック内の順序で列挙

    Returns:
        (2^p, p) 配列。行 j の c 列目は (j >> c) & 1（共変量1が最も速く変わる）
    """
    index = np.arange(2 ** arity)
    return ((index[:, None] >> np.arange(arity)[None, :]) & 1).astype(np.int64)


def correlated_joint_table(b_z: float, b_w: float, correlation: float) -> FloatArray:
    """
    周辺確率とピアソン相関から 2×2 同時確率表を作る

    P(1,1) = b_z·b_w + r·sqrt(b_z(1−b_z)·b_w(1−b_w))

    Returns:
        table[z, w] = P(Z=z, W=w)

    Raises:
        InvalidModel: いずれかのセル確率が負
    """
    p11 = b_z * b_w + correlation * np.sqrt(b_z * (1 - b_z) * b_w * (1 - b_w))
    p10 = b_z - p11
    p01 = b_w - p11
    p00 = 1.0 - p11 - p10 - p01
    table = np.array([[p00, p01], [p10, p11]])
    if np.any(table < -1e-12):
        raise InvalidModel(
            f"correlation {correlation} infeasible for marginals ({b_z}, {b_w}): "
            f"cells {table.ravel()}"
        )
    return np.clip(table, 0.0, 1.0)


def pattern_probabilities(spec: SbmSpec) -> FloatArray:
    """
    P(共変量パターン | τ=k) を返す

    Returns:
        (K, 2^p) 配列。各行の和は1
    """
    patterns = covariate_patterns(spec.arity)
    probs = np.ones((spec.K, len(patterns)))
    c = 0
    for law in spec.covariates:
        if law.kind == CovariateLawKind.BERNOULLI_PER_BLOCK:
            b = np.asarray(law.b, dtype=float)
            z = patterns[:, c]
            probs *= np.where(z[None, :] == 1, b[:, None], 1.0 - b[:, None])
            c += 1
        else:
            table = correlated_joint_table(law.b_z, law.b_w, law.correlation)  # type: ignore[arg-type]
            probs *= table[patterns[:, c], patterns[:, c + 1]][None, :]
            c += 2
    return probs


# =============================================================================
# θ の構築
# =============================================================================

def _check_probability_range(theta: FloatArray, labels: str = "entry") -> None:
    bad = np.argwhere((theta < 0.0) | (theta > 1.0))
    if len(bad):
        i, j = bad[0]
        raise InvalidModel(f"{labels} ({i},{j}) = {theta[i, j]!r} lies outside [0,1]")


def theta_of_latents(nu: ArrayLike, link: LinkFunction) -> FloatArray:
    """
    潜在中心から K×K 確率行列 h(ν_k^T ν_ℓ) を作る

    Args:
        nu: K×d の潜在中心（1次元ならスカラー中心とみなす）
        link: リンク関数

    Raises:
        InvalidModel: Identity リンクで [0,1] 外の要素
    """
    nu = np.asarray(nu, dtype=float)
    if nu.ndim == 1:
        nu = nu[:, None]
    if not np.all(np.isfinite(nu)):
        raise InvalidInput("centroids must be finite")
    theta = link.forward(nu @ nu.T)
    _check_probability_range(theta)
    return theta


def expand_sbm(spec: SbmSpec) -> ExpandedSbm:
    """
    任意個の2値共変量を持つ SbmSpec を拡張ブロックモデルに展開

    Raises:
        InvalidModel: 要素が [0,1] 外、または Identity リンクで ν のグラム行列の階数が d でない
    """
    link = get_link(spec.link)
    nu = np.asarray(spec.nu, dtype=float)
    gram = nu @ nu.T
    if spec.link == LinkKind.IDENTITY and np.linalg.matrix_rank(gram) != spec.d:
        raise InvalidModel(
            f"identity link requires rank {spec.d} latent Gram matrix, got "
            f"{np.linalg.matrix_rank(gram)}"
        )

    patterns = covariate_patterns(spec.arity)
    n_patterns = len(patterns)
    tau = np.repeat(np.arange(spec.K), n_patterns)
    z = np.tile(patterns, (spec.K, 1))

    score = gram[np.ix_(tau, tau)]
    if spec.differential:
        beta1, beta2 = spec.beta
        zc = z[:, 0]
        score = score + beta1 * np.outer(zc == 0, zc == 0) + beta2 * np.outer(zc == 1, zc == 1)
    else:
        for c, beta in enumerate(spec.beta):
            score = score + beta * (z[:, c][:, None] == z[:, c][None, :])

    theta = link.forward(score)
    _check_probability_range(theta, labels="theta_Z entry")
    theta = (theta + theta.T) / 2.0

    eta = (np.asarray(spec.pi)[:, None] * pattern_probabilities(spec)).ravel()
    label_map = tuple((int(t), tuple(int(v) for v in row)) for t, row in zip(tau, z))
    return ExpandedSbm(
        K=spec.K,
        arity=spec.arity,
        theta_Z=theta,
        eta=eta,
        label_map=label_map,
        link=link,
        rho=spec.rho,
    )


def expand_one_covariate(spec: SbmSpec) -> ExpandedSbm:
    """
    共変量1個（BernoulliPerBlock）のモデルを 2K ブロックに展開

    Raises:
        InvalidInput: 共変量がちょうど1個のブロック別ベルヌーイでない
        InvalidModel: 要素が [0,1] 外
    """
    if (
        spec.differential
        or len(spec.covariates) != 1
        or spec.covariates[0].kind != CovariateLawKind.BERNOULLI_PER_BLOCK
    ):
        raise InvalidInput("expand_one_covariate needs one bernoulli_per_block covariate")
    return expand_sbm(spec)


def expand_two_covariates(spec: SbmSpec) -> ExpandedSbm:
    """共変量2個のモデルを 4K ブロックに展開（ブロック内順序 00,10,01,11）"""
    if spec.differential or spec.arity != 2:
        raise InvalidInput("expand_two_covariates needs exactly two binary covariates")
    return expand_sbm(spec)


def expand_differential_homophily(spec: SbmSpec) -> ExpandedSbm:
    """
    差分ホモフィリーモデルを 2K ブロックに展開

    (Z=0,Z=0) には β₁、(Z=1,Z=1) には β₂ が加わり、異なる値の組には何も加わらない。
    """
    if not spec.differential:
        raise InvalidInput("expand_differential_homophily needs differential=True")
    return expand_sbm(spec)
