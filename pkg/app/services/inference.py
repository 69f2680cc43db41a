"""
app/services/inference.py

漸近推論サービス

スペクトル推定したブロック確率 θ̂ の漸近バイアス ψ、分散 σ²、共分散と、
h⁻¹ を通したデルタ法、準スパースレジームでの置き換え（θ(1−θ) → θ）、
β推定量の線形結合に対するプラグイン標準誤差を提供。

記号:
    Δ = Σ_k η_k μ_k μ_k^T
    ζ_kℓ = μ_k^T Δ⁻¹ μ_ℓ
    v_kℓ = θ_kℓ(1−θ_kℓ)（密） / θ_kℓ（スパース）

n(θ̂_kℓ − θ_kℓ) の極限は平均 ψ_kℓ、分散 σ²_kℓ の正規分布。

公式ドキュメント:
- scipy.linalg.cho_factor: https://docs.scipy.org/doc/scipy/reference/generated/scipy.linalg.cho_factor.html
"""
import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from app.models.common import NumericalFailure
from app.models.fit import Regime
from app.services.model_core import ExpandedSbm, LinkFunction

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
Entry = tuple[int, int]

MAX_CONDITION = 1e12
ZETA_SYMMETRY_TOL = 1e-10
RANK_TOL = 1e-10


# =============================================================================
# データクラス
# =============================================================================

@dataclass(frozen=True)
class SbmMoments:
    """
    拡張ブロックモデルのモーメント

    Attributes:
        eta: ブロック確率（長さ K̃）
        mu: K̃×d 中心
        signs: 計量 I の対角（長さ d）
        theta: K̃×K̃ 確率行列
        Delta: d×d 二次モーメント行列
        Delta_inv: Δ⁻¹
        zeta: K̃×K̃ 行列 ζ
        condition_number: Δ の条件数
        regime: 分散因子 v の選び方
    """
    eta: FloatArray
    mu: FloatArray
    signs: FloatArray
    theta: FloatArray
    Delta: FloatArray
    Delta_inv: FloatArray
    zeta: FloatArray
    condition_number: float
    regime: Regime = Regime.DENSE

    @property
    def ktilde(self) -> int:
        return len(self.eta)

    @property
    def signature(self) -> tuple[int, int]:
        d1 = int(np.sum(self.signs > 0))
        return d1, len(self.signs) - d1

    @property
    def v(self) -> FloatArray:
        """分散因子 θ(1−θ)（密）または θ（スパース）"""
        if self.regime == Regime.SPARSE:
            return self.theta
        return self.theta * (1.0 - self.theta)

    @property
    def G(self) -> FloatArray:
        """μ_k^T Δ⁻¹ I Δ⁻¹ μ_ℓ"""
        left = self.mu @ self.Delta_inv
        return (left * self.signs[None, :]) @ left.T


@dataclass(frozen=True)
class DeltaResult:
    """h⁻¹ を通したデルタ法の結果"""
    psi_tilde: float
    sigma2_tilde: float
    derivative: float


@dataclass(frozen=True)
class BetaSe:
    """
    β推定量のプラグインバイアスと標準誤差

    Attributes:
        bias_hat: ψ_β/n（スパースは ψ̈_β/(nρ)）
        se_hat: σ_β/n（スパースは σ̃_β/(n√ρ)）
        psi_beta: 極限バイアス ψ_β
        sigma2_beta: 極限分散 σ²_β
    """
    bias_hat: float
    se_hat: float
    psi_beta: float
    sigma2_beta: float


# =============================================================================
# モーメントの構築
# =============================================================================

def build_moments(
    eta: ArrayLike,
    mu: ArrayLike,
    signs: ArrayLike,
    theta: Optional[ArrayLike] = None,
    regime: Regime = Regime.DENSE,
) -> SbmMoments:
    """
    (η, μ, I) からモーメントを作る

    Args:
        eta: ブロック確率
        mu: K̃×d 中心
        signs: 計量の対角
        theta: 確率行列（省略時は μ I μ^T）
        regime: 分散因子のレジーム

    Raises:
        NumericalFailure: Δ が特異（条件数 > 1e12）
    """
    eta = np.asarray(eta, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    signs = np.asarray(signs, dtype=float)
    if theta is None:
        theta = (mu * signs[None, :]) @ mu.T
    theta = np.asarray(theta, dtype=float)

    Delta = (mu * eta[:, None]).T @ mu
    Delta = (Delta + Delta.T) / 2.0
    condition = float(np.linalg.cond(Delta))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise NumericalFailure(f"Delta is singular (condition number {condition:.3e})")
    try:
        factor = linalg.cho_factor(Delta)
    except linalg.LinAlgError as exc:
        raise NumericalFailure("Delta is not positive definite") from exc
    Delta_inv = linalg.cho_solve(factor, np.eye(Delta.shape[0]))

    zeta = mu @ Delta_inv @ mu.T
    asym = float(np.max(np.abs(zeta - zeta.T)))
    if asym > ZETA_SYMMETRY_TOL:
        logger.warning("zeta asymmetric by %.3e, symmetrizing", asym)
    zeta = (zeta + zeta.T) / 2.0

    return SbmMoments(
        eta=eta,
        mu=mu,
        signs=signs,
        theta=theta,
        Delta=Delta,
        Delta_inv=Delta_inv,
        zeta=zeta,
        condition_number=condition,
        regime=regime,
    )


def factor_theta(theta: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """
    θ = μ I μ^T となる (μ, signs) を固有分解で求める

    固有値は絶対値の降順（同値なら正を先）。|λ| ≤ 1e-10·max|λ| は捨てる。
    """
    theta = np.asarray(theta, dtype=float)
    values, vectors = linalg.eigh((theta + theta.T) / 2.0)
    order = np.lexsort((-values, -np.abs(values)))
    values, vectors = values[order], vectors[:, order]
    keep = np.abs(values) > RANK_TOL * max(np.abs(values).max(), 1e-300)
    values, vectors = values[keep], vectors[:, keep]
    mu = vectors * np.sqrt(np.abs(values))[None, :]
    return mu, np.where(values < 0, -1.0, 1.0)


def moments_from_expanded(model: ExpandedSbm, regime: Regime = Regime.DENSE) -> SbmMoments:
    """拡張ブロックモデルの真のモーメント"""
    mu, signs = factor_theta(model.theta_Z)
    return build_moments(model.eta, mu, signs, theta=model.theta_Z, regime=regime)


def sparse_moments(m: SbmMoments) -> SbmMoments:
    """準スパースレジームのモーメント（θ(1−θ) を θ に置き換える）"""
    return replace(m, regime=Regime.SPARSE)


# =============================================================================
# バイアス・分散・共分散
# =============================================================================

def bias_psi(m: SbmMoments, k: int, l: int) -> float:
    """
    漸近バイアス ψ_kℓ

    ψ_kℓ = Σ_r η_r (v_kr + v_ℓr) μ_k^T Δ⁻¹IΔ⁻¹ μ_ℓ
           − Σ_r Σ_s η_r η_s v_sr μ_s^T Δ⁻¹IΔ⁻¹ (μ_ℓ μ_k^T + μ_k μ_ℓ^T) Δ⁻¹ μ_s
    """
    eta, v, zeta, G = m.eta, m.v, m.zeta, m.G
    w = v @ eta
    first = (w[k] + w[l]) * G[k, l]
    second = np.sum(w * eta * (G[:, l] * zeta[k, :] + G[:, k] * zeta[l, :]))
    return float(first - second)


def variance_sigma2(m: SbmMoments, k: int, l: int) -> float:
    """
    漸近分散 σ²_kℓ

    対角（k = ℓ）:
        4 v_kk ζ_kk² + 4 Σ_r η_r v_kr ζ_kr² (1/η_k − 2ζ_kk)
        + 2 Σ_r Σ_s η_r η_s v_rs ζ_kr² ζ_ks²
    非対角（k ≠ ℓ）:
        (v_kk + v_ℓℓ) ζ_kℓ² + 2 v_kℓ ζ_kk ζ_ℓℓ
        + Σ_r η_r v_kr ζ_ℓr² (1/η_k − 2ζ_kk) + Σ_r η_r v_ℓr ζ_kr² (1/η_ℓ − 2ζ_ℓℓ)
        − 2 Σ_r η_r (v_kr + v_ℓr) ζ_kr ζ_rℓ ζ_kℓ
        + ½ Σ_r Σ_s η_r η_s v_rs (ζ_kr ζ_ℓs + ζ_ℓr ζ_ks)²
    """
    eta, v, z = m.eta, m.v, m.zeta
    W = np.outer(eta, eta) * v
    if k == l:
        zk = z[k]
        return float(
            4.0 * v[k, k] * z[k, k] ** 2
            + 4.0 * np.sum(eta * v[k] * zk ** 2) * (1.0 / eta[k] - 2.0 * z[k, k])
            + 2.0 * np.sum(W * np.outer(zk ** 2, zk ** 2))
        )
    zk, zl = z[k], z[l]
    cross = np.outer(zk, zl) + np.outer(zl, zk)
    return float(
        (v[k, k] + v[l, l]) * z[k, l] ** 2
        + 2.0 * v[k, l] * z[k, k] * z[l, l]
        + np.sum(eta * v[k] * zl ** 2) * (1.0 / eta[k] - 2.0 * z[k, k])
        + np.sum(eta * v[l] * zk ** 2) * (1.0 / eta[l] - 2.0 * z[l, l])
        - 2.0 * np.sum(eta * (v[k] + v[l]) * zk * zl) * z[k, l]
        + 0.5 * np.sum(W * cross ** 2)
    )


def _influence(m: SbmMoments, k: int, l: int) -> FloatArray:
    # M(a,b) = η_ℓ ζ_aℓ 1{b=k} + η_k ζ_ak 1{b=ℓ} − η_k η_ℓ ζ_ak ζ_ℓb を対称化
    eta, z = m.eta, m.zeta
    M = -eta[k] * eta[l] * np.outer(z[:, k], z[l, :])
    M[:, k] += eta[l] * z[:, l]
    M[:, l] += eta[k] * z[:, k]
    return M + M.T


def covariance_matrix(
    m: SbmMoments, entries: Sequence[Entry], regime: Optional[Regime] = None
) -> FloatArray:
    """
    複数の要素 (k,ℓ) に対する漸近共分散行列

    Cov(kℓ, k′ℓ′) = Σ_{a,b} η_a η_b v_ab M^s_kℓ(a,b) M^s_k′ℓ′(a,b) / (2 η_k η_ℓ η_k′ η_ℓ′)

    対角は σ²_kℓ に一致し、行列は半正定値になる。
    """
    if regime is not None and regime != m.regime:
        m = replace(m, regime=regime)
    W = np.outer(m.eta, m.eta) * m.v
    influences = np.stack([_influence(m, k, l) for k, l in entries])
    scale = np.array([m.eta[k] * m.eta[l] for k, l in entries])
    cov = np.einsum("eab,fab,ab->ef", influences, influences, W)
    return cov / (2.0 * np.outer(scale, scale))


def covariance_sigma(
    m: SbmMoments, first: Entry, second: Entry, regime: Optional[Regime] = None
) -> float:
    """2つの要素 (k,ℓ), (k′,ℓ′) の漸近共分散（regime 省略時は m.regime）"""
    return float(covariance_matrix(m, [first, second], regime=regime)[0, 1])


# =============================================================================
# デルタ法と標準誤差
# =============================================================================

def delta_method(m: SbmMoments, k: int, l: int, link: LinkFunction) -> DeltaResult:
    """
    h⁻¹ を通したバイアスと分散

    ψ̃ = ψ·(h⁻¹)′(θ_kℓ), σ̃² = σ²·[(h⁻¹)′(θ_kℓ)]²

    Raises:
        InvalidInput: θ_kℓ が境界にあり微分が定義されない
    """
    derivative = float(link.inverse_derivative(m.theta[k, l]))
    return DeltaResult(
        psi_tilde=bias_psi(m, k, l) * derivative,
        sigma2_tilde=variance_sigma2(m, k, l) * derivative ** 2,
        derivative=derivative,
    )


def contrast_from_triples(
    triples: Iterable[tuple[int, int, int]], weights: Optional[Iterable[float]] = None
) -> dict[Entry, float]:
    """
    (k, ℓ, ℓ′) の重み付き和 Σ w·(B_kℓ − B_kℓ′) を要素ごとの係数にまとめる

    対称性から (k,ℓ) と (ℓ,k) は同じ要素として扱う。係数0の要素は落とす。
    """
    triples = list(triples)
    weights = list(weights) if weights is not None else [1.0] * len(triples)
    coefficients: dict[Entry, float] = {}
    for (k, l, l2), w in zip(triples, weights):
        for entry, sign in (((min(k, l), max(k, l)), 1.0), ((min(k, l2), max(k, l2)), -1.0)):
            coefficients[entry] = coefficients.get(entry, 0.0) + sign * w
    return {e: c for e, c in coefficients.items() if abs(c) > 1e-15}


def beta_se(
    m: SbmMoments,
    contrast: dict[Entry, float],
    link: LinkFunction,
    regime: Regime,
    n: int,
    rho_hat: float = 1.0,
) -> BetaSe:
    """
    β推定量（要素 h⁻¹(θ̂) の線形結合）のプラグインバイアスと標準誤差

    Args:
        m: モーメント（真値またはプラグイン）
        contrast: 要素 (k,ℓ) → 係数
        link: リンク関数
        regime: DENSE / SPARSE
        n: ノード数
        rho_hat: スパース係数

    Returns:
        BetaSe

    Raises:
        InvalidInput: 使用する θ が境界にある
    """
    if not contrast:
        return BetaSe(bias_hat=0.0, se_hat=0.0, psi_beta=0.0, sigma2_beta=0.0)
    m = replace(m, regime=regime)
    entries = list(contrast)
    coef = np.array([contrast[e] for e in entries])
    derivative = np.array([float(link.inverse_derivative(m.theta[k, l])) for k, l in entries])
    weights = coef * derivative

    psi = float(np.sum(weights * np.array([bias_psi(m, k, l) for k, l in entries])))
    cov = covariance_matrix(m, entries)
    sigma2 = max(float(weights @ cov @ weights), 0.0)

    if regime == Regime.SPARSE:
        bias_hat = psi / (n * rho_hat)
        se_hat = np.sqrt(sigma2) / (n * np.sqrt(rho_hat))
    else:
        bias_hat = psi / n
        se_hat = np.sqrt(sigma2) / n
    return BetaSe(bias_hat=bias_hat, se_hat=float(se_hat), psi_beta=psi, sigma2_beta=sigma2)


def single_pair_contrast(k: int, l: int, l2: int) -> dict[Entry, float]:
    """1組の差 B_kℓ − B_kℓ′ の係数"""
    if (min(k, l), max(k, l)) == (min(k, l2), max(k, l2)):
        return {}
    return contrast_from_triples([(k, l, l2)])
