"""
app/commands/simulate.py

grdpg simulate - モデル仕様からグラフを生成してファイルに書き出す

使用例:
  grdpg simulate --preset example2 --n 2000 --seed 7 --out-prefix out/ex2

出力:
  {prefix}.edges          エッジリスト
  {prefix}.covariates.tsv node_id と共変量 z1..zp
  {prefix}.truth.tsv      node_id, tau, xi
"""
import argparse
import logging
from pathlib import Path

import pandas as pd

from app.commands.common import stage, write_envelope
from app.config import Settings
from app.data import get_preset
from app.models import ConfigError, SbmSpec, SimulationReport, create_success_response
from app.services.config_loader import load_spec
from app.services.graph_io import write_covariates, write_edge_list
from app.services.simulate import sample_graph

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, settings: Settings) -> None:
    """simulate サブコマンドのフラグを登録"""
    p = subparsers.add_parser("simulate", help="sample a network from a model spec")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--spec", help="model spec file (key = value lines)")
    source.add_argument("--preset", help="bundled model spec name")
    p.add_argument("--n", type=int, required=True, help="number of nodes")
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--out-prefix", required=True, help="output path prefix")
    p.add_argument("--report", dest="report_path", help="report path (default stdout)")
    p.set_defaults(handler=run)


def resolve_spec(args: argparse.Namespace) -> SbmSpec:
    """--spec / --preset からモデル仕様を得る"""
    if args.spec:
        return load_spec(args.spec)
    if args.preset:
        return get_preset(args.preset)
    raise ConfigError("either --spec or --preset is required")


def run(args: argparse.Namespace, settings: Settings) -> int:
    """simulate サブコマンド本体"""
    with stage("load"):
        spec = resolve_spec(args)

    with stage("simulate"):
        sample = sample_graph(spec, args.n, args.seed)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    edges_path = prefix.with_name(prefix.name + ".edges")
    covariates_path = prefix.with_name(prefix.name + ".covariates.tsv")
    truth_path = prefix.with_name(prefix.name + ".truth.tsv")

    write_edge_list(sample.graph, edges_path)
    write_covariates(sample.graph, covariates_path)
    truth = pd.DataFrame({"node_id": sample.graph.node_ids, "tau": sample.tau, "xi": sample.xi})
    truth.to_csv(truth_path, sep="\t", index=False)
    logger.info("  -> Wrote: %s nodes, %s edges to %s.*",
                f"{sample.graph.n:,}", f"{sample.graph.m:,}", prefix)

    report = SimulationReport(
        n=sample.graph.n,
        m=sample.graph.m,
        ktilde=sample.expanded.ktilde,
        seed=args.seed,
        edges_path=str(edges_path),
        covariates_path=str(covariates_path),
        truth_path=str(truth_path),
    )
    write_envelope(create_success_response(report), args.report_path)
    return 0
