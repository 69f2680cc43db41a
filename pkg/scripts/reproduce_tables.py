"""
scripts/reproduce_tables.py

モンテカルロ設計1〜5を実行し、推定量ごとの誤差表を書き出すスクリプト

実行方法:
    uv run python scripts/reproduce_tables.py
    uv run python scripts/reproduce_tables.py --designs design1 design3 --replicates 20 --jobs 4

出力:
    results/{design}.tsv   設計ごとの集計（n, |β̂−β|, mcse, 時間, ARI, 発散数）
    results/all.tsv        全設計をまとめた表
"""
import argparse
import logging
import time
from pathlib import Path

import pandas as pd
from dotenv import load_dotenv

# プロジェクトルートを取得
PROJECT_ROOT = Path(__file__).parent.parent

# .envを読み込む
load_dotenv(PROJECT_ROOT / ".env")

from app.config import get_settings  # noqa: E402
from app.data import DESIGNS, get_design  # noqa: E402
from app.services.simulate import run_design, summary_table  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run Monte Carlo designs and write summary tables")
    parser.add_argument("--designs", nargs="+", default=sorted(DESIGNS))
    parser.add_argument("--n", type=int, action="append", help="network size (repeatable)")
    parser.add_argument("--replicates", type=int, help="replicates per size")
    parser.add_argument("--jobs", type=int, default=get_settings().jobs)
    parser.add_argument("--output-dir", default=str(PROJECT_ROOT / "results"))
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    print("=" * 70)
    print("モンテカルロ設計の再現")
    print("=" * 70)

    tables = []
    for name in args.designs:
        design = get_design(name)
        updates: dict[str, object] = {}
        if args.n:
            updates["n_values"] = args.n
        if args.replicates:
            updates["replicates"] = args.replicates
        if updates:
            design = design.model_validate({**design.model_dump(), **updates})

        print(f"\n{name}: n={design.n_values}, {design.replicates} replicates")
        started = time.perf_counter()
        table = summary_table(run_design(design, jobs=args.jobs))
        table.to_csv(out_dir / f"{name}.tsv", sep="\t", index=False, na_rep="NA",
                     float_format="%.6g")
        print(f"  -> {time.perf_counter() - started:.1f}s")
        print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        tables.append(table)

    combined = pd.concat(tables, ignore_index=True)
    combined.to_csv(out_dir / "all.tsv", sep="\t", index=False, na_rep="NA", float_format="%.6g")
    print(f"\n出力: {out_dir}")


if __name__ == "__main__":
    main()
