"""
app/commands/common.py

サブコマンド共通のヘルパー
"""
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

from pydantic import BaseModel, ValidationError

from app.models.common import ConfigError, GrdpgError


@contextmanager
def stage(name: str) -> Iterator[None]:
    """失敗したステージ名をエラーメッセージの先頭に付ける"""
    try:
        yield
    except GrdpgError as exc:
        exc.args = (f"[{name}] {exc}",)
        raise
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"[{name}] {location}: {first['msg']}") from exc


def write_envelope(response: BaseModel, path: Optional[str] = None) -> None:
    """JSONエンベロープをファイルまたは標準出力に書く"""
    text = response.model_dump_json(indent=2)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")
