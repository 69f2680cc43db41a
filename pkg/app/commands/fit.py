"""
app/commands/fit.py

grdpg fit - エッジリストと共変量からβと潜在位置を推定

使用例:
  grdpg fit --edges g.edges --covariates-file g.tsv --covariate z1 --k 2 --output report.json

終了コード:
  0: 成功
  2: 推定の退化（空の拡張ブロック、空の組集合）
  1: 入力・設定・数値計算のエラー
"""
import argparse
import logging
from typing import Optional

import numpy as np
import pandas as pd

from app.commands.common import stage, write_envelope
from app.config import Settings
from app.models import (
    BetaReport,
    ClustererKind,
    ConfigError,
    EstimatorKind,
    FitOptions,
    FitReport,
    LinkKind,
    Regime,
    StageTimings,
    create_success_response,
)
from app.services.clustering import adjusted_rand_index
from app.services.estimator import FitResult, fit, fit_differential_homophily
from app.services.graph_io import (
    Graph,
    attach_covariates,
    drop_missing_and_lcc,
    parse_binarize,
    read_covariates,
    read_edge_list,
)
from app.services.simulate import bootstrap_beta_se

logger = logging.getLogger(__name__)


# =============================================================================
# フラグ定義
# =============================================================================

def register(subparsers: argparse._SubParsersAction, settings: Settings) -> None:
    """fit サブコマンドのフラグを登録"""
    p = subparsers.add_parser("fit", help="estimate homophily and latent positions")
    p.add_argument("--edges", required=True, help="whitespace-separated edge list")
    p.add_argument("--covariates-file", help="header table with node_id and covariate columns")
    p.add_argument("--covariate", action="append", default=[], help="binary covariate column")
    p.add_argument("--binarize", action="append", default=[],
                   help="binarization rule 'column=value==1' (repeatable)")
    p.add_argument("--missing", action="append", type=float, default=[],
                   help="raw value treated as missing before binarization")
    p.add_argument("--lcc", action="store_true",
                   help="drop nodes with missing covariates and keep the largest component")
    p.add_argument("--k", type=int, required=True, help="number of latent blocks")
    p.add_argument("--d-hat", type=int, help="embedding dimension override")
    p.add_argument("--latent-dim", type=int, help="dimension of latent positions net of covariates")
    p.add_argument("--link", choices=[k.value for k in LinkKind], default=LinkKind.LOGIT.value)
    p.add_argument("--estimator", choices=[k.value for k in EstimatorKind],
                   default=EstimatorKind.BOTH.value)
    p.add_argument("--clusterer", choices=[k.value for k in ClustererKind],
                   default=ClustererKind.GMM.value)
    p.add_argument("--regime", choices=[k.value for k in Regime], default=Regime.DENSE.value)
    p.add_argument("--rho", type=float, help="known sparsity factor")
    p.add_argument("--differential", action="store_true",
                   help="separate homophily for value 0 and value 1 pairs")
    p.add_argument("--elbow-plus-one", action="store_true")
    p.add_argument("--regularize", action="store_true",
                   help="add gamma * mean degree / n to every adjacency entry")
    p.add_argument("--regularize-gamma", type=float, default=settings.regularize_gamma)
    p.add_argument("--clip-epsilon", type=float, default=settings.clip_epsilon)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--truth", help="table with node_id and true expanded-block labels (for ARI)")
    p.add_argument("--bootstrap", type=int, nargs="?", const=settings.bootstrap_replicates,
                   default=0, help="parametric bootstrap replicates (0 disables)")
    p.add_argument("--jobs", type=int, default=settings.jobs)
    p.add_argument("--output", dest="report_path", help="report path (default stdout)")
    p.set_defaults(handler=run)


# =============================================================================
# 入力の組み立て
# =============================================================================

def load_graph(args: argparse.Namespace) -> Graph:
    """エッジリストと共変量を読み込み、必要なら欠測除去と最大連結成分の抽出を行う"""
    graph = read_edge_list(args.edges)
    if args.covariates_file:
        rules = dict(parse_binarize(rule, args.missing) for rule in args.binarize)
        table = read_covariates(args.covariates_file, args.covariate, rules)
        graph = attach_covariates(graph, table)
    elif args.covariate:
        raise ConfigError("--covariate requires --covariates-file")
    if args.lcc:
        graph = drop_missing_and_lcc(graph, args.covariate)
    return graph


def build_options(args: argparse.Namespace, settings: Settings) -> FitOptions:
    """フラグと設定から FitOptions を作る"""
    return FitOptions(
        K=args.k,
        d_hat=args.d_hat,
        link=args.link,
        estimator=args.estimator,
        clusterer=args.clusterer,
        seed=args.seed,
        clip_epsilon=args.clip_epsilon,
        elbow_plus_one=args.elbow_plus_one,
        latent_dim=args.latent_dim,
        regime=args.regime,
        rho=args.rho,
        eigen_tol=settings.eigen_tol,
        dense_threshold=settings.dense_threshold,
        regularize_gamma=args.regularize_gamma if args.regularize else 0.0,
    )


def read_truth(path: str, graph: Graph) -> np.ndarray:
    """
    正解ラベル表を読み、グラフのノード順に並べる

    ラベル列は "xi" があればそれを、なければ最後の列を使う。

    Raises:
        ConfigError: ノードIDが欠けている
    """
    table = pd.read_csv(path, sep=None, engine="python")
    id_column = "node_id" if "node_id" in table.columns else table.columns[0]
    label_column = "xi" if "xi" in table.columns else table.columns[-1]
    labels = table.set_index(id_column)[label_column]
    missing = np.setdiff1d(graph.node_ids, labels.index.to_numpy())
    if len(missing):
        raise ConfigError(f"truth table lacks {len(missing)} node IDs (first: {missing[0]})")
    return labels.loc[graph.node_ids].to_numpy()


# =============================================================================
# レポート
# =============================================================================

def build_report(
    graph: Graph,
    result: FitResult,
    ari: Optional[float] = None,
    bootstrap: Optional[dict[tuple[str, str], float]] = None,
) -> FitReport:
    """FitResult を FitReport に変換"""
    bf = result.block_fit
    bootstrap = bootstrap or {}
    betas = [
        BetaReport(
            parameter=b.parameter,
            covariate=result.covariates[b.covariate],
            variant=b.variant,
            value=b.value,
            bias_hat=b.bias_hat,
            se_hat=b.se_hat,
            bootstrap_se=bootstrap.get((b.parameter, b.variant.value)),
            pairs_used=[list(t) for t in b.pairs_used],
        )
        for b in result.betas
    ]
    signature = result.embedding.signature
    latent_d1 = int(np.sum(result.latent_signs > 0))
    return FitReport(
        n=graph.n,
        K=bf.K,
        ktilde=bf.ktilde,
        covariates=result.covariates,
        link=bf.link.kind,
        regime=result.regime,
        d_hat=result.d_hat,
        signature=[signature.d1, signature.d2],
        eigenvalues=result.selection.values.tolist(),
        theta_hat_Z=bf.theta_hat_Z.tolist(),
        B_hat_Z=bf.B_hat_Z.tolist(),
        block_sizes=bf.block_counts.tolist(),
        covariate_ones=bf.covariate_ones.tolist(),
        z_theta=bf.z_theta.tolist(),
        latent_group=bf.latent_group.tolist(),
        betas=betas,
        latent_positions=result.latent_positions.tolist(),
        latent_signature=[latent_d1, len(result.latent_signs) - latent_d1],
        clip_count=bf.clip_count,
        rho_hat=result.rho_hat,
        ari=ari,
        timings=StageTimings(**result.timings),
    )


# =============================================================================
# ハンドラ
# =============================================================================

def run(args: argparse.Namespace, settings: Settings) -> int:
    """fit サブコマンド本体"""
    with stage("load"):
        graph = load_graph(args)
        opts = build_options(args, settings)
        if args.differential and len(args.covariate) != 1:
            raise ConfigError("--differential needs exactly one --covariate")

    with stage("fit"):
        if args.differential:
            result = fit_differential_homophily(graph, opts, args.covariate[0])
        else:
            result = fit(graph, opts, args.covariate)

    ari = None
    if args.truth:
        with stage("truth"):
            ari = adjusted_rand_index(read_truth(args.truth, graph), result.block_fit.xi_hat)
            logger.info("  -> ARI vs truth: %.4f", ari)

    bootstrap = None
    if args.bootstrap > 0:
        with stage("bootstrap"):
            bootstrap = bootstrap_beta_se(
                graph, result, opts, args.bootstrap, seed=args.seed, jobs=args.jobs
            )

    write_envelope(create_success_response(build_report(graph, result, ari, bootstrap)),
                   args.report_path)
    return 0
