"""
app/commands/embed.py

grdpg embed - 隣接スペクトル埋め込み Ŷ をTSVで書き出す

使用例:
  grdpg embed --edges g.edges --output g.embedding.tsv
"""
import argparse
import logging

import numpy as np
import pandas as pd

from app.commands.common import stage, write_envelope
from app.config import Settings
from app.models import EmbedReport, InvalidInput, create_success_response
from app.services.graph_io import read_edge_list, regularize_degrees
from app.services.spectral import default_dimension, embed_selection, top_eigenpairs

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction, settings: Settings) -> None:
    """embed サブコマンドのフラグを登録"""
    p = subparsers.add_parser("embed", help="write the adjacency spectral embedding")
    p.add_argument("--edges", required=True, help="whitespace-separated edge list")
    p.add_argument("--d-hat", type=int, help="embedding dimension override")
    p.add_argument("--max-d", type=int, default=8, help="eigenvalues inspected by the elbow rule")
    p.add_argument("--elbow-plus-one", action="store_true")
    p.add_argument("--regularize", action="store_true")
    p.add_argument("--regularize-gamma", type=float, default=settings.regularize_gamma)
    p.add_argument("--output", required=True, help="embedding TSV path")
    p.add_argument("--report", dest="report_path", help="JSON summary path (default stdout)")
    p.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    """embed サブコマンド本体"""
    with stage("load"):
        graph = read_edge_list(args.edges)

    with stage("embed"):
        raw = graph.adjacency()
        A = regularize_degrees(raw, args.regularize_gamma) if args.regularize else raw
        max_d = min(graph.n, max(args.max_d, args.d_hat or 0))
        if max_d < 1:
            raise InvalidInput("graph has no nodes")
        selection = top_eigenpairs(
            A, max_d, tol=settings.eigen_tol, dense_threshold=settings.dense_threshold
        )
        d_hat = args.d_hat or default_dimension(
            selection.values,
            np.asarray(raw.sum(axis=1)).ravel(),
            plus_one=args.elbow_plus_one,
        )
        embedding = embed_selection(selection.head(d_hat))

    table = pd.DataFrame(embedding.Y, columns=[f"y{c + 1}" for c in range(d_hat)])
    table.insert(0, "node_id", graph.node_ids)
    table.to_csv(args.output, sep="\t", index=False, float_format="%.12g")
    logger.info("  -> Wrote: %d x %d embedding to %s", graph.n, d_hat, args.output)

    signature = embedding.signature
    report = EmbedReport(
        n=graph.n,
        d_hat=d_hat,
        signature=[signature.d1, signature.d2],
        eigenvalues=np.asarray(selection.values).tolist(),
        output=args.output,
    )
    write_envelope(create_success_response(report), args.report_path)
    return 0
