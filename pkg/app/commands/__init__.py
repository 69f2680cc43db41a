"""
app/commands/__init__.py

CLIサブコマンドパッケージ

各モジュールは register(subparsers, settings) でフラグを登録し、
run(args, settings) -> 終了コード で処理する。
"""
from . import embed, fit, montecarlo, simulate

COMMANDS = (fit, simulate, montecarlo, embed)

__all__ = ["COMMANDS", "embed", "fit", "montecarlo", "simulate"]
