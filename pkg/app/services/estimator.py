"""
app/services/estimator.py

推定パイプライン

1. 埋め込み次元の選択（プロファイル尤度、または d_hat の上書き）と ASE
2. 埋め込み行を K̃ = 2^p·K 個の拡張ブロックにクラスタリング
3. θ̂_Z = μ̂ I μ̂^T をクリップし、B̂_Z = h⁻¹(θ̂_Z)
4. B̂_Z の対角を K 個の潜在ブロックにまとめ、拡張ブロックの共変量ラベルを多数決で決める
5. 単純平均 / 重み付き平均でホモフィリー β を推定
6. 共変量が一致しない組の部分行列から潜在位置を復元
7. プラグインのバイアス・標準誤差を付ける

差分ホモフィリー（Z=0 と Z=1 で別の β）は fit_differential_homophily で扱う。

公式ドキュメント:
- scipy.optimize.linear_sum_assignment: https://docs.scipy.org/doc/scipy/reference/generated/scipy.optimize.linear_sum_assignment.html
- numpy.linalg.eigh: https://numpy.org/doc/stable/reference/generated/numpy.linalg.eigh.html
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from app.models.common import DegenerateFit, InvalidInput, NumericalFailure
from app.models.fit import BetaVariant, ClustererKind, EstimatorKind, FitOptions, Regime
from app.services.clustering import cluster_diagonal, fit_gmm, fit_kmeans
from app.services.graph_io import Graph, regularize_degrees
from app.services.inference import (
    Entry,
    SbmMoments,
    beta_se,
    build_moments,
    contrast_from_triples,
)
from app.services.model_core import LinkFunction, get_link
from app.services.spectral import (
    EigenSelection,
    Embedding,
    MatrixLike,
    default_dimension,
    embed_selection,
    indefinite_products,
    orient_columns,
    select_dimension,
    top_eigenpairs,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]
Triple = tuple[int, int, int]

LATENT_SYMMETRY_TOL = 1e-6


# =============================================================================
# データクラス
# =============================================================================

@dataclass
class BlockFit:
    """
    拡張ブロックの推定結果

    Attributes:
        K: 潜在ブロック数
        arity: 共変量の数 p
        mu_hat: K̃×d の中心
        signs: 計量 I の対角
        xi_hat: 各ノードの拡張ブロックラベル
        tau_hat: 各ノードの潜在ブロックラベル
        theta_hat_Z: クリップ済み K̃×K̃ 確率行列
        B_hat_Z: h⁻¹(θ̂_Z)
        block_counts: 拡張ブロックのノード数 n_k
        covariate_ones: K̃×p の値1のノード数 n_{1,k}
        z_theta: K̃×p の多数決ラベル（同数なら0）
        latent_group: 拡張ブロック→潜在ブロック ψ̂
        link: リンク関数
        clip_count: クリップされた要素数
        rho: θ̂ の再スケールに使ったスパース係数
    """
    K: int
    arity: int
    mu_hat: FloatArray
    signs: FloatArray
    xi_hat: IntArray
    tau_hat: IntArray
    theta_hat_Z: FloatArray
    B_hat_Z: FloatArray
    block_counts: IntArray
    covariate_ones: IntArray
    z_theta: IntArray
    latent_group: IntArray
    link: LinkFunction
    clip_count: int = 0
    rho: float = 1.0

    @property
    def ktilde(self) -> int:
        return len(self.block_counts)

    @property
    def n(self) -> int:
        return int(self.block_counts.sum())

    @property
    def eta_hat(self) -> FloatArray:
        return self.block_counts / self.n

    @property
    def covariate_zeros(self) -> IntArray:
        return self.block_counts[:, None] - self.covariate_ones


@dataclass
class BetaEstimate:
    """
    β の推定値

    Attributes:
        value: 点推定
        variant: 推定量の種類
        pairs_used: 使用した (k, ℓ, ℓ′)
        parameter: パラメータ名
        covariate: 共変量の番号
        contrast: B̂_Z 要素ごとの係数（標準誤差の計算に使う）
        bias_hat: プラグインバイアス
        se_hat: プラグイン標準誤差
    """
    value: float
    variant: BetaVariant
    pairs_used: list[Triple]
    parameter: str = "beta"
    covariate: int = 0
    contrast: dict[Entry, float] = field(default_factory=dict)
    bias_hat: float = float("nan")
    se_hat: float = float("nan")


@dataclass
class FitResult:
    """
    fit の結果一式

    Attributes:
        block_fit: 拡張ブロックの推定
        betas: β推定値
        latent_positions: K×d_X の潜在位置
        latent_signs: 潜在位置の計量
        selection: 次元選択に使った固有対
        d_hat: 埋め込み次元
        embedding: ASE
        covariates: 使用した共変量列
        regime: 漸近レジーム
        rho_hat: スパース係数（既知値または推定値）
        timings: ステージ別の実行時間（秒）
        differential: 差分ホモフィリーで推定したか
    """
    block_fit: BlockFit
    betas: list[BetaEstimate]
    latent_positions: FloatArray
    latent_signs: FloatArray
    selection: EigenSelection
    d_hat: int
    embedding: Embedding
    covariates: list[str]
    regime: Regime = Regime.DENSE
    rho_hat: float = 1.0
    timings: dict[str, float] = field(default_factory=dict)
    differential: bool = False

    def beta(self, parameter: str = "beta", variant: Optional[BetaVariant] = None) -> BetaEstimate:
        """
        名前（と種類）でβ推定値を取り出す

        Raises:
            KeyError: 該当なし
        """
        for estimate in self.betas:
            if estimate.parameter == parameter and (variant is None or estimate.variant == variant):
                return estimate
        raise KeyError(f"no estimate for {parameter!r} ({variant})")


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _parameter_name(covariate: int, arity: int) -> str:
    return "beta" if arity == 1 else f"beta{covariate + 1}"


def _operator(A: MatrixLike, opts: FitOptions) -> MatrixLike:
    if opts.regularize_gamma > 0:
        return regularize_degrees(A, opts.regularize_gamma)  # type: ignore[arg-type]
    return A


def _degrees(M: MatrixLike) -> FloatArray:
    return np.asarray(M.sum(axis=1), dtype=float).ravel()  # type: ignore[union-attr]


def _select_and_embed(
    A: MatrixLike,
    n: int,
    ktilde: int,
    opts: FitOptions,
    d_hat: Optional[int] = None,
    degrees: Optional[FloatArray] = None,
) -> tuple[EigenSelection, int, Embedding]:
    max_d = min(n, max(2, min(2 * ktilde, opts.max_d_cap)))
    if d_hat is not None:
        if d_hat > n:
            raise InvalidInput(f"d_hat={d_hat} exceeds number of nodes n={n}")
        max_d = max(max_d, d_hat)
    selection = top_eigenpairs(A, max_d, tol=opts.eigen_tol, dense_threshold=opts.dense_threshold)
    if d_hat is None:
        d_hat = default_dimension(
            selection.values,
            degrees if opts.signal_floor else None,
            max_rank=ktilde,
            plus_one=opts.elbow_plus_one,
        )
    embedding = embed_selection(selection.head(d_hat))
    logger.info("  -> d_hat=%d, signature=%s", d_hat, embedding.signature)
    return selection, d_hat, embedding


def _cluster(Y: FloatArray, n_blocks: int, opts: FitOptions) -> tuple[IntArray, FloatArray]:
    config = opts.cluster.model_copy(update={"seed": opts.seed})
    if opts.clusterer == ClustererKind.KMEANS:
        km = fit_kmeans(Y, n_blocks, config)
        return km.assignments, km.means
    gmm = fit_gmm(Y, n_blocks, config)
    return gmm.assignments, gmm.means


def _other_status_agrees(z: IntArray, k: int, l: int, l2: int, covariate: int) -> bool:
    for c in range(z.shape[1]):
        if c == covariate:
            continue
        if (z[k, c] == z[l, c]) != (z[k, c] == z[l2, c]):
            return False
    return True


def _induced(A: Union[FloatArray, sparse.spmatrix], rows: IntArray, cols: IntArray) -> MatrixLike:
    if sparse.issparse(A):
        return sparse.csr_matrix(A)[rows][:, cols]
    return np.asarray(A)[np.ix_(rows, cols)]


def _block_sum(A: Union[FloatArray, sparse.spmatrix], rows: IntArray, cols: IntArray) -> float:
    return float(_induced(A, rows, cols).sum())


# =============================================================================
# ブロック推定
# =============================================================================

def block_fit_from_labels(
    Y: FloatArray,
    signs: FloatArray,
    xi: IntArray,
    z: IntArray,
    K: int,
    link: LinkFunction,
    *,
    clip_epsilon: float = 1e-6,
    rho: float = 1.0,
    means: Optional[FloatArray] = None,
    latent_group: Optional[IntArray] = None,
) -> BlockFit:
    """
    拡張ブロックラベルから θ̂_Z, B̂_Z, 件数, 多数決ラベル, 潜在グループを作る

    Args:
        Y: n×d 埋め込み
        signs: 計量の対角
        xi: 各ノードの拡張ブロックラベル（0..K̃−1）
        z: n×p の共変量行列
        K: 潜在ブロック数
        link: リンク関数
        clip_epsilon: クリップ幅
        rho: θ̂ を割るスパース係数
        means: クラスタ中心（省略時はブロック平均）
        latent_group: 拡張ブロック→潜在ブロック（省略時は対角のクラスタリング）

    Raises:
        DegenerateFit: 空の拡張ブロックがある
    """
    z = np.asarray(z, dtype=np.int64)
    if z.ndim == 1:
        z = z[:, None]
    arity = z.shape[1]
    ktilde = K * 2 ** arity
    counts = np.bincount(xi, minlength=ktilde).astype(np.int64)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise DegenerateFit(
            f"cluster stage: expanded block {int(empty[0])} of {ktilde} is empty"
        )

    if means is None:
        means = np.vstack([Y[xi == a].mean(axis=0) for a in range(ktilde)])
    raw = indefinite_products(means, signs) / rho
    raw = (raw + raw.T) / 2.0
    theta = np.clip(raw, clip_epsilon, 1.0 - clip_epsilon)
    clip_count = int(np.sum(theta != raw))
    if clip_count:
        logger.warning("  -> clipped %d theta_hat entries to [%g, %g]",
                       clip_count, clip_epsilon, 1.0 - clip_epsilon)
    B = link.inverse(theta)

    ones = np.zeros((ktilde, arity), dtype=np.int64)
    for c in range(arity):
        ones[:, c] = np.bincount(xi, weights=z[:, c], minlength=ktilde).astype(np.int64)
    z_theta = (ones > counts[:, None] - ones).astype(np.int64)

    if latent_group is None:
        latent_group = cluster_diagonal(np.diag(B), K) if arity else np.arange(K, dtype=np.int64)
    latent_group = np.asarray(latent_group, dtype=np.int64)

    return BlockFit(
        K=K,
        arity=arity,
        mu_hat=np.asarray(means, dtype=float),
        signs=np.asarray(signs, dtype=float),
        xi_hat=np.asarray(xi, dtype=np.int64),
        tau_hat=latent_group[xi],
        theta_hat_Z=theta,
        B_hat_Z=B,
        block_counts=counts,
        covariate_ones=ones,
        z_theta=z_theta,
        latent_group=latent_group,
        link=link,
        clip_count=clip_count,
        rho=rho,
    )


def pair_triples(
    latent_group: IntArray, z_theta: IntArray, covariate: int = 0
) -> tuple[list[Triple], list[Triple]]:
    """
    共変量 c の差を取る (k, ℓ, ℓ′) を列挙

    Returns:
        (候補集合 Ω, 単純平均の集合 M)
        Ω: ψ̂_ℓ = ψ̂_ℓ′, ℓ ≠ ℓ′ で、他の共変量の一致状態が k から見て同じ組
        M: Ω のうち Z_k = Z_ℓ ≠ Z_ℓ′（共変量 c について）の組
    """
    ktilde = len(latent_group)
    candidates: list[Triple] = []
    matched: list[Triple] = []
    for k in range(ktilde):
        for l in range(ktilde):
            for l2 in range(ktilde):
                if l == l2 or latent_group[l] != latent_group[l2]:
                    continue
                if not _other_status_agrees(z_theta, k, l, l2, covariate):
                    continue
                candidates.append((k, l, l2))
                if z_theta[k, covariate] == z_theta[l, covariate] != z_theta[l2, covariate]:
                    matched.append((k, l, l2))
    return candidates, matched


def pair_weights(bf: BlockFit, triples: Sequence[Triple], covariate: int = 0) -> FloatArray:
    """
    ノード数重み ω = (n0k·n0ℓ·n1ℓ′ + n1k·n1ℓ·n0ℓ′) / (nk·nℓ·nℓ′)
    """
    if not triples:
        return np.zeros(0)
    idx = np.asarray(triples, dtype=np.int64)
    k, l, l2 = idx[:, 0], idx[:, 1], idx[:, 2]
    n0 = bf.covariate_zeros[:, covariate].astype(float)
    n1 = bf.covariate_ones[:, covariate].astype(float)
    nk = bf.block_counts.astype(float)
    return (n0[k] * n0[l] * n1[l2] + n1[k] * n1[l] * n0[l2]) / (nk[k] * nk[l] * nk[l2])


def _differences(bf: BlockFit, triples: Sequence[Triple]) -> FloatArray:
    idx = np.asarray(triples, dtype=np.int64)
    return bf.B_hat_Z[idx[:, 0], idx[:, 1]] - bf.B_hat_Z[idx[:, 0], idx[:, 2]]


def _mean_over(
    bf: BlockFit, triples: list[Triple], covariate: int, parameter: str
) -> BetaEstimate:
    weights = [1.0 / len(triples)] * len(triples)
    return BetaEstimate(
        value=float(_differences(bf, triples).mean()),
        variant=BetaVariant.SINGLE_PAIR if len(triples) == 1 else BetaVariant.SIMPLE_MEAN,
        pairs_used=triples,
        parameter=parameter,
        covariate=covariate,
        contrast=contrast_from_triples(triples, weights),
    )


# =============================================================================
# β推定量
# =============================================================================

def beta_simple_mean(bf: BlockFit, covariate: int = 0) -> BetaEstimate:
    """
    集合 M 上の B̂_kℓ − B̂_kℓ′ の単純平均

    Raises:
        DegenerateFit: M が空
    """
    _, matched = pair_triples(bf.latent_group, bf.z_theta, covariate)
    if not matched:
        raise DegenerateFit(
            f"estimate stage: simple-mean pair set is empty for covariate {covariate}"
        )
    estimate = _mean_over(bf, matched, covariate, _parameter_name(covariate, bf.arity))
    estimate.variant = BetaVariant.SIMPLE_MEAN
    return estimate


def beta_weighted_mean(bf: BlockFit, covariate: int = 0) -> BetaEstimate:
    """
    候補集合 Ω 上の ω 重み付き平均（Σω で正規化）

    Raises:
        DegenerateFit: Ω が空、または重みがすべて0
    """
    candidates, _ = pair_triples(bf.latent_group, bf.z_theta, covariate)
    if not candidates:
        raise DegenerateFit(
            f"estimate stage: weighted-mean pair set is empty for covariate {covariate}"
        )
    omega = pair_weights(bf, candidates, covariate)
    total = float(omega.sum())
    if total <= 0:
        raise DegenerateFit(f"estimate stage: all pair weights are zero for covariate {covariate}")
    keep = omega > 0
    triples = [t for t, used in zip(candidates, keep) if used]
    normalized = omega[keep] / total
    return BetaEstimate(
        value=float(np.sum(normalized * _differences(bf, triples))),
        variant=BetaVariant.WEIGHTED_MEAN,
        pairs_used=triples,
        parameter=_parameter_name(covariate, bf.arity),
        covariate=covariate,
        contrast=contrast_from_triples(triples, normalized),
    )


def _estimate_betas(bf: BlockFit, estimator: EstimatorKind) -> list[BetaEstimate]:
    betas: list[BetaEstimate] = []
    for c in range(bf.arity):
        if estimator in (EstimatorKind.SIMPLE_MEAN, EstimatorKind.BOTH):
            betas.append(beta_simple_mean(bf, c))
        if estimator in (EstimatorKind.WEIGHTED_MEAN, EstimatorKind.BOTH):
            betas.append(beta_weighted_mean(bf, c))
    return betas


# =============================================================================
# 潜在位置と標準誤差
# =============================================================================

def recover_latent_positions(
    bf: BlockFit,
    latent_dim: Optional[int] = None,
    betas: Optional[Sequence[float]] = None,
) -> tuple[FloatArray, FloatArray]:
    """
    共変量が一致しない組の B̂_Z から K×K 行列を作り、スペクトル埋め込みする

    潜在グループ (g, h) ごとに、すべての共変量が異なる拡張ブロック組の平均を取る。
    そのような組がない場合は betas で β の寄与を差し引いた全組の平均を使う。

    Args:
        bf: BlockFit
        latent_dim: 次元の上書き（省略時はプロファイル尤度、上限 K）
        betas: 共変量ごとの β（組がない場合の代替）

    Returns:
        (K×d_X 潜在位置, 計量の対角)

    Raises:
        DegenerateFit: 組がなく betas も与えられない
    """
    K = bf.K
    z = bf.z_theta
    L = np.zeros((K, K))
    for g in range(K):
        rows = np.flatnonzero(bf.latent_group == g)
        for h in range(K):
            cols = np.flatnonzero(bf.latent_group == h)
            pairs = [(a, b) for a in rows for b in cols if np.all(z[a] != z[b])]
            if pairs:
                L[g, h] = np.mean([bf.B_hat_Z[a, b] for a, b in pairs])
                continue
            if betas is None:
                raise DegenerateFit(
                    "estimate stage: no covariate-mismatched block pair "
                    f"for latent blocks ({g},{h})"
                )
            shift = np.asarray(betas, dtype=float)
            L[g, h] = np.mean([
                bf.B_hat_Z[a, b] - float(shift @ (z[a] == z[b])) for a in rows for b in cols
            ])

    asymmetry = float(np.max(np.abs(L - L.T)))
    if asymmetry > LATENT_SYMMETRY_TOL:
        logger.warning("  -> latent submatrix asymmetric by %.3e, symmetrizing", asymmetry)
    L = (L + L.T) / 2.0

    values, vectors = np.linalg.eigh(L)
    order = np.lexsort((-values, -np.abs(values)))
    values, vectors = values[order], orient_columns(vectors[:, order])
    if latent_dim is None:
        latent_dim = select_dimension(values) if K >= 2 else 1
    latent_dim = min(latent_dim, K)
    positions = vectors[:, :latent_dim] * np.sqrt(np.abs(values[:latent_dim]))[None, :]
    signs = np.where(values[:latent_dim] < 0, -1.0, 1.0)
    return positions, signs


def moments_from_fit(bf: BlockFit, regime: Regime = Regime.DENSE) -> SbmMoments:
    """
    BlockFit からプラグインのモーメントを作る（μ̂ は √ρ で割る）

    Raises:
        NumericalFailure: Δ̂ が悪条件
    """
    return build_moments(
        bf.eta_hat, bf.mu_hat / np.sqrt(bf.rho), bf.signs, bf.theta_hat_Z, regime
    )


def attach_standard_errors(
    bf: BlockFit,
    betas: Sequence[BetaEstimate],
    moments: Optional[SbmMoments],
    regime: Regime,
    rho_hat: float,
) -> list[BetaEstimate]:
    """各β推定値にプラグインのバイアスと標準誤差を付ける（モーメントがなければ NaN のまま）"""
    if moments is None:
        return list(betas)
    out = []
    for estimate in betas:
        se = beta_se(moments, estimate.contrast, bf.link, regime, bf.n, rho_hat)
        out.append(replace(estimate, bias_hat=se.bias_hat, se_hat=se.se_hat))
    return out


def estimate_rho(mean_degree: float, n: int, bf: BlockFit) -> float:
    """
    平均次数と当てはめた確率の比 d̄ / ((n−1)·η̂^T θ̂ η̂)（上限1）

    rho を与えない fit では θ̂ は ρ·θ の尺度のまま推定されるので、この比は
    クラスタリング誤差を除き1になる。このとき準スパースのプラグイン σ̂ は √ρ 倍、
    β̂ とバイアスは（Identity リンクで）ρ 倍になり、(β̂ − β − bias)/se は
    既知の ρ で θ̂/ρ から求めた値と一致する。ρ そのものは平均確率を固定した
    参照モデルがない限り識別できないので、既知なら FitOptions.rho で与える。
    """
    expected = float(bf.eta_hat @ bf.theta_hat_Z @ bf.eta_hat) * (n - 1)
    if expected <= 0:
        return 1.0
    return float(min(max(mean_degree / expected, np.finfo(float).tiny), 1.0))


def _plugin_moments(bf: BlockFit, regime: Regime) -> Optional[SbmMoments]:
    try:
        return moments_from_fit(bf, regime)
    except NumericalFailure as exc:
        logger.warning("  -> inference stage: %s; standard errors unavailable", exc)
        return None


def _mean_degree(graph: Graph, adjacency: Optional[MatrixLike]) -> float:
    if adjacency is None:
        return graph.mean_degree
    return float(adjacency.sum()) / graph.n  # type: ignore[union-attr]


# =============================================================================
# 公開API
# =============================================================================

def fit(
    graph: Graph,
    opts: FitOptions,
    covariates: Sequence[str] = (),
    *,
    adjacency: Optional[MatrixLike] = None,
) -> FitResult:
    """
    埋め込みから β と潜在位置までの推定パイプライン

    Args:
        graph: 単純無向グラフ
        opts: 推定オプション
        covariates: 使用する2値共変量列（0個以上）
        adjacency: 隣接行列の差し替え（確率行列 P を渡すとノイズなしの検証になる）

    Returns:
        FitResult

    Raises:
        InvalidInput: 共変量が一定・欠測、K̃ > n
        DegenerateFit: 空の拡張ブロック、空の組集合
        NumericalFailure: 固有分解・クラスタリングの失敗

    使用例:
        result = fit(graph, FitOptions(K=2), ["female"])
        result.beta("beta", BetaVariant.SIMPLE_MEAN).value
    """
    started = time.perf_counter()
    timings: dict[str, float] = {}
    covariates = list(covariates)
    z = graph.covariate_matrix(covariates) if covariates else np.zeros((graph.n, 0), dtype=np.int64)
    ktilde = opts.K * 2 ** len(covariates)
    if ktilde > graph.n:
        raise InvalidInput(f"K~={ktilde} expanded blocks exceed n={graph.n} nodes")
    link = get_link(opts.link)
    logger.info("Fitting %d nodes, K=%d, K~=%d, covariates=%s", graph.n, opts.K, ktilde, covariates)

    tick = time.perf_counter()
    raw = graph.adjacency() if adjacency is None else adjacency
    A = _operator(raw, opts)
    selection, d_hat, embedding = _select_and_embed(
        A, graph.n, ktilde, opts, opts.d_hat, _degrees(raw)
    )
    timings["embed"] = time.perf_counter() - tick

    tick = time.perf_counter()
    labels, means = _cluster(embedding.Y, ktilde, opts)
    timings["cluster"] = time.perf_counter() - tick

    tick = time.perf_counter()
    rho = opts.rho or 1.0
    bf = block_fit_from_labels(
        embedding.Y, embedding.signs, labels, z, opts.K, link,
        clip_epsilon=opts.clip_epsilon, rho=rho, means=means,
    )
    betas = _estimate_betas(bf, opts.estimator)
    simple = [b.value for b in betas if b.variant == BetaVariant.SIMPLE_MEAN]
    positions, latent_signs = recover_latent_positions(
        bf, opts.latent_dim, simple if len(simple) == bf.arity else None
    )
    timings["estimate"] = time.perf_counter() - tick

    tick = time.perf_counter()
    rho_hat = rho
    if opts.regime == Regime.SPARSE and opts.rho is None:
        rho_hat = estimate_rho(_mean_degree(graph, adjacency), graph.n, bf)
    moments = _plugin_moments(bf, opts.regime) if betas else None
    betas = attach_standard_errors(bf, betas, moments, opts.regime, rho_hat)
    timings["inference"] = time.perf_counter() - tick
    timings["total"] = time.perf_counter() - started

    for estimate in betas:
        logger.info("  -> %s (%s) = %.6f (se %.6f)",
                    estimate.parameter, estimate.variant.value, estimate.value, estimate.se_hat)
    logger.info("  -> stage timings: %s",
                ", ".join(f"{k}={v:.3f}s" for k, v in timings.items()))

    return FitResult(
        block_fit=bf,
        betas=betas,
        latent_positions=positions,
        latent_signs=latent_signs,
        selection=selection,
        d_hat=d_hat,
        embedding=embedding,
        covariates=covariates,
        regime=opts.regime,
        rho_hat=rho_hat,
        timings=timings,
    )


def fit_multi_covariate(
    graph: Graph,
    opts: FitOptions,
    covariates: Sequence[str],
    *,
    adjacency: Optional[MatrixLike] = None,
) -> FitResult:
    """
    2個の2値共変量で K̃ = 4K のパイプラインを実行

    Raises:
        InvalidInput: 共変量が2個でない
    """
    if len(covariates) != 2:
        raise InvalidInput(
            f"fit_multi_covariate needs exactly two covariates, got {len(covariates)}"
        )
    return fit(graph, opts, covariates, adjacency=adjacency)


def _align_subgraph_blocks(
    A: Union[FloatArray, sparse.spmatrix],
    nodes0: IntArray,
    labels0: IntArray,
    nodes1: IntArray,
    labels1: IntArray,
    K: int,
) -> IntArray:
    """Z=1 側のブロックを Z=0 側に対応づける（交差密度のプロファイルでハンガリアン法）"""
    members0 = [nodes0[labels0 == a] for a in range(K)]
    members1 = [nodes1[labels1 == b] for b in range(K)]
    density = np.array([
        [_block_sum(A, r, c) / (len(r) * len(c)) for c in members1] for r in members0
    ])
    row_profiles = np.sort(density, axis=1)
    col_profiles = np.sort(density, axis=0).T
    cost = np.abs(row_profiles[:, None, :] - col_profiles[None, :, :]).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    mapping = np.empty(K, dtype=np.int64)
    mapping[cols] = rows
    return mapping


def fit_differential_homophily(
    graph: Graph,
    opts: FitOptions,
    covariate: str,
    *,
    adjacency: Optional[Union[FloatArray, sparse.spmatrix]] = None,
) -> FitResult:
    """
    差分ホモフィリー（β₁: 両端 Z=0, β₂: 両端 Z=1）の推定

    1. Z=0 の誘導部分グラフを ASE + K クラスタリング
    2. Z=1 の誘導部分グラフも同様
    3. 交差密度でブロックを対応づけ、そのラベルで全体グラフの θ̂_Z を作る

    Raises:
        InvalidInput: どちらかの部分グラフのノード数が K·(d+1) 未満
        DegenerateFit: 空の拡張ブロック
    """
    started = time.perf_counter()
    timings: dict[str, float] = {}
    z = graph.covariate_matrix([covariate])
    link = get_link(opts.link)
    K = opts.K
    raw = graph.adjacency() if adjacency is None else adjacency
    d_required = opts.d_hat or K
    nodes = [np.flatnonzero(z[:, 0] == v) for v in (0, 1)]
    for v, members in enumerate(nodes):
        if len(members) < K * (d_required + 1):
            raise InvalidInput(
                f"subgraph with {covariate}={v} has {len(members)} nodes, "
                f"needs at least {K * (d_required + 1)}"
            )
    logger.info("Fitting differential homophily on %d nodes, K=%d", graph.n, K)

    tick = time.perf_counter()
    sub_labels = []
    # 部分グラフは K ブロックなので階数は K 以下
    sub_d = min(opts.d_hat, K) if opts.d_hat else None
    for v, members in enumerate(nodes):
        sub = _induced(raw, members, members)
        _, _, sub_embedding = _select_and_embed(
            _operator(sub, opts), len(members), K, opts, sub_d, _degrees(sub)
        )
        labels, _ = _cluster(sub_embedding.Y, K, opts)
        sub_labels.append(labels)
        logger.info("  -> subgraph %s=%d: %d nodes", covariate, v, len(members))
    mapping = _align_subgraph_blocks(raw, nodes[0], sub_labels[0], nodes[1], sub_labels[1], K)
    xi = np.empty(graph.n, dtype=np.int64)
    xi[nodes[0]] = 2 * sub_labels[0]
    xi[nodes[1]] = 2 * mapping[sub_labels[1]] + 1
    timings["cluster"] = time.perf_counter() - tick

    tick = time.perf_counter()
    A = _operator(raw, opts)
    selection, d_hat, embedding = _select_and_embed(
        A, graph.n, 2 * K, opts, opts.d_hat, _degrees(raw)
    )
    timings["embed"] = time.perf_counter() - tick

    tick = time.perf_counter()
    rho = opts.rho or 1.0
    bf = block_fit_from_labels(
        embedding.Y, embedding.signs, xi, z, K, link,
        clip_epsilon=opts.clip_epsilon, rho=rho,
        latent_group=np.arange(2 * K, dtype=np.int64) // 2,
    )
    _, matched = pair_triples(bf.latent_group, bf.z_theta, 0)
    betas = []
    for value, parameter in ((0, "beta1"), (1, "beta2")):
        triples = [t for t in matched if bf.z_theta[t[0], 0] == value]
        if not triples:
            raise DegenerateFit(f"estimate stage: no block pair for {parameter}")
        betas.append(_mean_over(bf, triples, 0, parameter))
    positions, latent_signs = recover_latent_positions(bf, opts.latent_dim)
    timings["estimate"] = time.perf_counter() - tick

    tick = time.perf_counter()
    rho_hat = rho
    if opts.regime == Regime.SPARSE and opts.rho is None:
        rho_hat = estimate_rho(_mean_degree(graph, adjacency), graph.n, bf)
    moments = _plugin_moments(bf, opts.regime)
    betas = attach_standard_errors(bf, betas, moments, opts.regime, rho_hat)
    timings["inference"] = time.perf_counter() - tick
    timings["total"] = time.perf_counter() - started

    for estimate in betas:
        logger.info("  -> %s = %.6f (se %.6f)", estimate.parameter, estimate.value, estimate.se_hat)

    return FitResult(
        block_fit=bf,
        betas=betas,
        latent_positions=positions,
        latent_signs=latent_signs,
        selection=selection,
        d_hat=d_hat,
        embedding=embedding,
        covariates=[covariate],
        regime=opts.regime,
        rho_hat=rho_hat,
        timings=timings,
        differential=True,
    )
