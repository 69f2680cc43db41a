"""
app/commands/montecarlo.py

grdpg montecarlo - モンテカルロ設計を実行して集計表を書き出す

使用例:
  grdpg montecarlo --preset design1 --replicates 25 --n 2000 --jobs 4 --output design1.tsv

設計ファイルの書式は docs/formats.md を参照。
"""
import argparse
import logging

from app.commands.common import stage, write_envelope
from app.config import Settings
from app.data import get_design
from app.models import ConfigError, McDesign, create_success_response
from app.services.config_loader import load_design
from app.services.simulate import run_design, write_summary_tsv

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, settings: Settings) -> None:
    """montecarlo サブコマンドのフラグを登録"""
    p = subparsers.add_parser("montecarlo", help="run a Monte Carlo design")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--design", help="design file (key = value lines)")
    source.add_argument("--preset", help="bundled design name (design1 .. design5)")
    p.add_argument("--n", type=int, action="append", help="network size (repeatable, overrides)")
    p.add_argument("--replicates", type=int, help="replicates per size (overrides)")
    p.add_argument("--seed", type=int, help="design seed (overrides)")
    p.add_argument("--jobs", type=int, default=settings.jobs)
    p.add_argument("--output", required=True, help="summary TSV path")
    p.add_argument("--report", dest="report_path", help="JSON summary path (default stdout)")
    p.set_defaults(handler=run)


def resolve_design(args: argparse.Namespace) -> McDesign:
    """--design / --preset と上書きフラグから設計を得る"""
    if args.design:
        design = load_design(args.design)
    elif args.preset:
        design = get_design(args.preset)
    else:
        raise ConfigError("either --design or --preset is required")
    updates: dict[str, object] = {}
    if args.n:
        updates["n_values"] = args.n
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    if args.seed is not None:
        updates["seed"] = args.seed
    return McDesign.model_validate({**design.model_dump(), **updates}) if updates else design


def run(args: argparse.Namespace, settings: Settings) -> int:
    """montecarlo サブコマンド本体"""
    with stage("load"):
        design = resolve_design(args)

    with stage("montecarlo"):
        summary = run_design(design, jobs=args.jobs)

    write_summary_tsv(summary, args.output)
    logger.info("  -> Wrote summary: %s", args.output)
    write_envelope(create_success_response(summary), args.report_path)
    return 0
