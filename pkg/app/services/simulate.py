"""
app/services/simulate.py

ネットワークの生成とモンテカルロ実験

- SbmSpec からの生成（τ → 共変量 → 辺）。辺は拡張ブロックの組ごとに
  ベルヌーイ（密）または 二項分布の件数 + 一様な位置の非復元抽出（疎）で引く
- 設計ごとの反復実行（ProcessPoolExecutor）と |β̂−β|, MCSE, 時間, ARI の集計
- 推定済みブロックモデルからのパラメトリック・ブートストラップ標準誤差

反復ごとのシードは derive_seed(設計シード, n, 反復番号) で導出し、
並列実行の順序は結果に影響しない。

公式ドキュメント:
- numpy.random.Generator: https://numpy.org/doc/stable/reference/random/generator.html
- concurrent.futures.ProcessPoolExecutor: https://docs.python.org/3/library/concurrent.futures.html
- pandas.DataFrame.to_csv: https://pandas.pydata.org/docs/reference/api/pandas.DataFrame.to_csv.html
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from app.models.common import DegenerateFit, GrdpgError, InvalidInput
from app.models.design import McDesign, McParameterSummary, McSummary, McSummaryRow
from app.models.fit import BetaVariant, EstimatorKind, FitOptions
from app.models.sbm import CovariateLawKind, SbmSpec
from app.services.clustering import adjusted_rand_index
from app.services.estimator import FitResult, fit, fit_differential_homophily
from app.services.graph_io import Graph, graph_from_edges
from app.services.model_core import ExpandedSbm, correlated_joint_table, expand_sbm
from app.services.seeds import derive_seed

logger = logging.getLogger(__name__)

IntArray = NDArray[np.int64]
FloatArray = NDArray[np.float64]

SPARSE_DENSITY = 0.05
ROW_CHUNK = 1024


# =============================================================================
# データクラス
# =============================================================================

@dataclass
class SampledGraph:
    """
    生成したグラフと正解ラベル

    Attributes:
        graph: 共変量列 z1..zp を持つグラフ
        tau: 潜在ブロックラベル
        z: n×p 共変量
        xi: 拡張ブロックラベル τ·2^p + Σ z_c 2^c
        expanded: 生成に使った拡張ブロックモデル
    """
    graph: Graph
    tau: IntArray
    z: IntArray
    xi: IntArray
    expanded: ExpandedSbm


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _triangle_pairs(position: IntArray, size: int) -> tuple[IntArray, IntArray]:
    """上三角（対角なし）の通し番号を (行, 列) に戻す"""
    row_len = np.arange(size - 1, 0, -1)
    starts = np.concatenate([[0], np.cumsum(row_len)])
    rows = np.searchsorted(starts, position, side="right") - 1
    cols = rows + 1 + (position - starts[rows])
    return rows, cols


def _bernoulli_block(
    rng: np.random.Generator, members_a: IntArray, members_b: IntArray, q: float, same: bool
) -> IntArray:
    out = []
    nb = len(members_b)
    for start in range(0, len(members_a), ROW_CHUNK):
        rows = np.arange(start, min(start + ROW_CHUNK, len(members_a)))
        hits = rng.random((len(rows), nb)) < q
        if same:
            hits &= np.arange(nb)[None, :] > rows[:, None]
        i, j = np.nonzero(hits)
        out.append(np.stack([members_a[rows[i]], members_b[j]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def _binomial_block(
    rng: np.random.Generator, members_a: IntArray, members_b: IntArray, q: float, same: bool
) -> IntArray:
    na, nb = len(members_a), len(members_b)
    total = na * (na - 1) // 2 if same else na * nb
    count = rng.binomial(total, q) if total else 0
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    position = rng.choice(total, size=count, replace=False)
    if same:
        rows, cols = _triangle_pairs(position, na)
        return np.stack([members_a[rows], members_a[cols]], axis=1)
    return np.stack([members_a[position // nb], members_b[position % nb]], axis=1)


def sample_block_edges(
    xi: IntArray, theta: FloatArray, rng: np.random.Generator, rho: float = 1.0
) -> IntArray:
    """
    拡張ブロックラベルと確率行列から辺を引く

    P_ij = ρ·θ[ξ_i, ξ_j]。平均密度が 0.05 未満なら二項分布 + 位置抽出。

    Returns:
        (m, 2) の辺配列（i ≠ j）
    """
    blocks = len(theta)
    members = [np.flatnonzero(xi == a) for a in range(blocks)]
    sizes = np.array([len(m) for m in members], dtype=float)
    n = len(xi)
    density = float(sizes @ (rho * theta) @ sizes) / max(n * n, 1)
    draw = _binomial_block if density < SPARSE_DENSITY else _bernoulli_block
    edges = []
    for a in range(blocks):
        for b in range(a, blocks):
            q = float(rho * theta[a, b])
            if q <= 0 or not len(members[a]) or not len(members[b]):
                continue
            edges.append(draw(rng, members[a], members[b], min(q, 1.0), a == b))
    return np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)


def _sample_covariates(spec: SbmSpec, tau: IntArray, rng: np.random.Generator) -> IntArray:
    z = np.zeros((len(tau), spec.arity), dtype=np.int64)
    c = 0
    for law in spec.covariates:
        if law.kind == CovariateLawKind.BERNOULLI_PER_BLOCK:
            b = np.asarray(law.b, dtype=float)
            z[:, c] = rng.random(len(tau)) < b[tau]
            c += 1
        else:
            first, second = _correlated_pair(law.b_z, law.b_w, law.correlation, len(tau), rng)
            z[:, c], z[:, c + 1] = first, second
            c += 2
    return z


def _correlated_pair(
    b_z: Optional[float], b_w: Optional[float], correlation: float, n: int, rng: np.random.Generator
) -> tuple[IntArray, IntArray]:
    table = correlated_joint_table(float(b_z), float(b_w), correlation)  # type: ignore[arg-type]
    cell = rng.choice(4, size=n, p=table.ravel() / table.sum())
    return (cell // 2).astype(np.int64), (cell % 2).astype(np.int64)


# =============================================================================
# 生成
# =============================================================================

def sample_correlated_bernoulli(
    b_z: float, b_w: float, correlation: float, n: int, seed: int
) -> tuple[IntArray, IntArray]:
    """
    周辺確率とピアソン相関を指定した2値ベクトルの組を引く

    Raises:
        InvalidModel: 同時確率表が負のセルを持つ
    """
    return _correlated_pair(b_z, b_w, correlation, n, np.random.default_rng(seed))


def sample_graph(spec: SbmSpec, n: int, seed: int) -> SampledGraph:
    """
    SbmSpec からグラフを生成する

    Args:
        spec: 生成モデル
        n: ノード数（K̃ 以上）
        seed: 乱数シード

    Returns:
        SampledGraph

    Raises:
        InvalidModel: 不正なモデル
        InvalidInput: n < K̃
    """
    expanded = expand_sbm(spec)
    if n < expanded.ktilde:
        raise InvalidInput(f"n={n} is smaller than K~={expanded.ktilde}")
    rng = np.random.default_rng(seed)
    tau = rng.choice(spec.K, size=n, p=np.asarray(spec.pi) / np.sum(spec.pi)).astype(np.int64)
    z = _sample_covariates(spec, tau, rng)
    xi = tau * 2 ** spec.arity + (z * (2 ** np.arange(spec.arity))[None, :]).sum(axis=1)
    edges = sample_block_edges(xi, expanded.theta_Z, rng, spec.rho)

    names = covariate_columns(spec.arity)
    covariates = pd.DataFrame(
        {name: pd.array(z[:, c], dtype="Int8") for c, name in enumerate(names)},
        index=pd.RangeIndex(n),
    )
    graph = graph_from_edges(n, edges, covariates)
    logger.debug("sampled n=%d, m=%d (seed=%d)", n, graph.m, seed)
    return SampledGraph(graph=graph, tau=tau, z=z, xi=xi.astype(np.int64), expanded=expanded)


# =============================================================================
# モンテカルロ
# =============================================================================

def _true_betas(spec: SbmSpec) -> dict[str, float]:
    if spec.differential:
        return {"beta1": spec.beta[0], "beta2": spec.beta[1]}
    if spec.arity == 1:
        return {"beta": spec.beta[0]}
    return {f"beta{c + 1}": b for c, b in enumerate(spec.beta)}


def _design_options(design: McDesign, seed: int) -> FitOptions:
    return FitOptions(
        K=design.spec.K,
        d_hat=design.d_hat,
        link=design.spec.link,
        estimator=design.estimators,
        clusterer=design.clusterer,
        seed=seed,
        rho=design.spec.rho if 0 < design.spec.rho < 1 else None,
    )


def _fit_sample(sample: SampledGraph, spec: SbmSpec, opts: FitOptions) -> FitResult:
    names = list(sample.graph.covariates.columns)
    if spec.differential:
        return fit_differential_homophily(sample.graph, opts, names[0])
    return fit(sample.graph, opts, names)


def _estimator_of(variant: BetaVariant) -> EstimatorKind:
    if variant == BetaVariant.WEIGHTED_MEAN:
        return EstimatorKind.WEIGHTED_MEAN
    return EstimatorKind.SIMPLE_MEAN


def _check_dimension(d_hat: int, spec: SbmSpec, n: int, replicate: int) -> bool:
    """選んだ d̂ が θ_Z の階数と一致するか（違えば WARNING）"""
    rank = expand_sbm(spec).rank
    if d_hat == rank:
        return True
    logger.warning(
        "  -> n=%d replicate %d: d_hat=%d differs from rank %d of theta_Z",
        n, replicate, d_hat, rank,
    )
    return False


def run_replicate(design: McDesign, n: int, replicate: int) -> dict[str, object]:
    """
    1反復分の生成と推定

    Returns:
        {"replicate", "diverged", "seconds", "ari", "estimates": {推定量: {パラメータ: 値}}}
    """
    seed = derive_seed(design.seed, n, replicate)
    sample = sample_graph(design.spec, n, seed)
    started = time.perf_counter()
    try:
        result = _fit_sample(sample, design.spec, _design_options(design, seed))
    except DegenerateFit as exc:
        logger.info("  -> n=%d replicate %d diverged: %s", n, replicate, exc)
        return {"replicate": replicate, "diverged": True}
    except GrdpgError as exc:
        logger.warning("  -> n=%d replicate %d failed: %s", n, replicate, exc)
        return {"replicate": replicate, "diverged": True}
    seconds = time.perf_counter() - started
    _check_dimension(result.d_hat, design.spec, n, replicate)

    estimates: dict[str, dict[str, float]] = {}
    for beta in result.betas:
        key = _estimator_of(beta.variant).value
        estimates.setdefault(key, {})[beta.parameter] = beta.value
    return {
        "replicate": replicate,
        "diverged": False,
        "seconds": seconds,
        "ari": adjusted_rand_index(sample.xi, result.block_fit.xi_hat),
        "estimates": estimates,
    }


def _summarize(
    design: McDesign, n: int, outcomes: list[dict[str, object]]
) -> list[McSummaryRow]:
    truth = _true_betas(design.spec)
    done = [o for o in sorted(outcomes, key=lambda o: o["replicate"]) if not o["diverged"]]
    diverged = len(outcomes) - len(done)
    keys = sorted({k for o in done for k in o["estimates"]})  # type: ignore[union-attr]
    if not keys:
        keys = [EstimatorKind.SIMPLE_MEAN.value]

    rows = []
    for key in keys:
        parameters = []
        for name, true_value in truth.items():
            errors = np.array([
                abs(o["estimates"][key][name] - true_value)  # type: ignore[index]
                for o in done
                if name in o["estimates"].get(key, {})  # type: ignore[union-attr]
            ])
            parameters.append(McParameterSummary(
                parameter=name,
                true_value=true_value,
                mean_abs_error=float(errors.mean()) if len(errors) else None,
                mcse=float(errors.std(ddof=1) / np.sqrt(len(errors))) if len(errors) > 1 else None,
            ))
        rows.append(McSummaryRow(
            design=design.name,
            estimator=EstimatorKind(key),
            n=n,
            parameters=parameters,
            mean_seconds=float(np.mean([o["seconds"] for o in done])) if done else None,
            mean_ari=float(np.mean([o["ari"] for o in done])) if done else None,
            replicates=len(outcomes),
            diverged=diverged,
        ))
    return rows


def run_design(design: McDesign, jobs: int = 1) -> McSummary:
    """
    設計の全 (n, 反復) を実行して集計する

    DegenerateFit などで失敗した反復は diverged として数え、平均から除外する。

    Args:
        design: モンテカルロ設計
        jobs: 並列プロセス数（1 なら逐次）

    Returns:
        McSummary
    """
    summary = McSummary(design=design.name, seed=design.seed)
    for n in design.n_values:
        logger.info("Running %s: n=%d, %d replicates", design.name, n, design.replicates)
        started = time.perf_counter()
        replicates = range(design.replicates)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(
                    run_replicate, [design] * len(replicates), [n] * len(replicates), replicates
                ))
        else:
            outcomes = [run_replicate(design, n, r) for r in replicates]
        summary.rows.extend(_summarize(design, n, outcomes))
        logger.info("  -> n=%d done in %.1fs", n, time.perf_counter() - started)
    return summary


def summary_table(summary: McSummary) -> pd.DataFrame:
    """McSummary を表形式（n, |β̂−β|, mcse, ..., time）にする"""
    records = []
    for row in summary.rows:
        record: dict[str, object] = {
            "design": row.design,
            "estimator": row.estimator.value,
            "n": row.n,
        }
        for p in row.parameters:
            record[f"abs_err_{p.parameter}"] = p.mean_abs_error
            record[f"mcse_{p.parameter}"] = p.mcse
        record["time"] = row.mean_seconds
        record["ari"] = row.mean_ari
        record["diverged"] = row.diverged
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_summary_tsv(summary: McSummary, path: Union[str, Path]) -> None:
    """集計をTSVで書き出す（値がないセルは NA）"""
    summary_table(summary).to_csv(path, sep="\t", index=False, na_rep="NA", float_format="%.6g")


# =============================================================================
# ブートストラップ
# =============================================================================

def _bootstrap_replicate(
    graph: Graph,
    result: FitResult,
    opts: FitOptions,
    seed: int,
) -> Optional[dict[tuple[str, str], float]]:
    bf = result.block_fit
    rng = np.random.default_rng(seed)
    edges = sample_block_edges(bf.xi_hat, bf.theta_hat_Z, rng, bf.rho)
    replica = graph_from_edges(graph.n, edges, graph.covariates)
    replica_opts = opts.model_copy(update={"seed": seed})
    try:
        if result.differential:
            refit = fit_differential_homophily(replica, replica_opts, result.covariates[0])
        else:
            refit = fit(replica, replica_opts, result.covariates)
    except GrdpgError as exc:
        logger.debug("bootstrap replicate failed: %s", exc)
        return None
    return {(b.parameter, b.variant.value): b.value for b in refit.betas}


def bootstrap_beta_se(
    graph: Graph,
    result: FitResult,
    opts: FitOptions,
    replicates: int = 200,
    seed: int = 0,
    jobs: int = 1,
) -> dict[tuple[str, str], float]:
    """
    パラメトリック・ブートストラップによるβの標準誤差

    推定した拡張ブロックラベル ξ̂ と θ̂_Z（ρ 込み）から辺を引き直し、
    同じオプションで再推定した β̂ の標本標準偏差を返す。

    Args:
        graph: 元のグラフ（共変量はそのまま使う）
        result: 元の推定結果
        opts: 推定オプション
        replicates: 反復回数
        seed: ブートストラップのシード
        jobs: 並列プロセス数

    Returns:
        (パラメータ名, 推定量) → 標準誤差
    """
    if replicates < 2:
        raise InvalidInput(f"bootstrap needs at least 2 replicates, got {replicates}")
    seeds = [derive_seed(seed, r) for r in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            draws = list(pool.map(
                _bootstrap_replicate,
                [graph] * replicates, [result] * replicates, [opts] * replicates, seeds,
            ))
    else:
        draws = [_bootstrap_replicate(graph, result, opts, s) for s in seeds]

    ok = [d for d in draws if d is not None]
    if len(ok) < len(draws):
        logger.warning(
            "  -> %d of %d bootstrap replicates failed", len(draws) - len(ok), len(draws)
        )
    out: dict[tuple[str, str], float] = {}
    for key in {k for d in ok for k in d}:
        values = np.array([d[key] for d in ok if key in d])
        if len(values) > 1:
            out[key] = float(values.std(ddof=1))
    return out


def covariate_columns(arity: int) -> Sequence[str]:
    """生成グラフの共変量列名"""
    return [f"z{c + 1}" for c in range(arity)]
