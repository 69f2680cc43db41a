"""
app/main.py

GRDPG ホモフィリー推定 CLI - エントリポイント

起動コマンド:
  grdpg fit --edges g.edges --covariates-file g.tsv --covariate z1 --k 2
  grdpg simulate --preset example2 --n 2000 --out-prefix out/ex2
  grdpg montecarlo --preset design1 --replicates 25 --n 2000 --output design1.tsv
  grdpg embed --edges g.edges --output g.embedding.tsv

終了コード:
  0: 成功
  1: 入力・設定・構文・数値計算のエラー、フラグの誤り
  2: 推定の退化（DegenerateFit）

環境変数は app/config.py を参照。
"""
import argparse
import logging
import sys
from typing import NoReturn, Optional, Sequence

from app import commands
from app.commands.common import write_envelope
from app.config import Settings, get_settings
from app.models import DegenerateFit, GrdpgError, create_error_response
from app.models.common import INVALID_INPUT

logger = logging.getLogger("app")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 2


# =============================================================================
# パーサー
# =============================================================================

class CliParser(argparse.ArgumentParser):
    """フラグの誤りを終了コード1で報告するパーサー"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser(settings: Settings) -> CliParser:
    """サブコマンド付きのパーサーを作る"""
    parser = CliParser(prog="grdpg", description="GRDPG spectral estimation of homophily in SBMs")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in commands.COMMANDS:
        command.register(subparsers, settings)
    return parser


# =============================================================================
# ロギング
# =============================================================================

def configure_logging(level: str, verbose: bool = False) -> None:
    """標準エラーにログを出す（ステージ進捗と時間）"""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else getattr(logging, level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


# =============================================================================
# エントリポイント
# =============================================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    CLI 本体

    Args:
        argv: 引数（省略時は sys.argv[1:]）

    Returns:
        終了コード
    """
    settings = get_settings()
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(settings.log_level, args.verbose)

    report_path = getattr(args, "report_path", None)
    try:
        return int(args.handler(args, settings))
    except DegenerateFit as exc:
        logger.error("%s", exc)
        write_envelope(create_error_response(exc.code, str(exc)), report_path)
        return EXIT_DEGENERATE
    except GrdpgError as exc:
        logger.error("%s", exc)
        write_envelope(create_error_response(exc.code, str(exc)), report_path)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        write_envelope(create_error_response(INVALID_INPUT, str(exc)), report_path)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
