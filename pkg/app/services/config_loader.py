"""
app/services/config_loader.py

モデル仕様・モンテカルロ設計ファイルの読み書き

書式は `key = value` の行（`#` でコメント）。値は JSON リテラルとして解釈し、
解釈できなければそのまま文字列として扱う。詳細は docs/formats.md。

    K = 2
    pi = [0.5, 0.5]
    nu = [-1.5, 1.0]
    covariates = [{"kind": "bernoulli_per_block", "b": [0.5, 0.5]}]
    beta = [1.5]
    link = logit

設計ファイルは仕様のキーをそのまま書くか、`spec_file = spec.env` で仕様ファイルを参照する。

公式ドキュメント:
- python-dotenv dotenv_values: https://saurabh-kumar.com/python-dotenv/reference/#dotenv.main.dotenv_values
- Pydantic model_validate: https://docs.pydantic.dev/latest/concepts/models/#validating-data
"""
import json
import logging
from pathlib import Path
from typing import Any, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from app.models.common import ConfigError
from app.models.design import McDesign
from app.models.sbm import SbmSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SPEC_KEYS = frozenset(SbmSpec.model_fields)
DESIGN_KEYS = frozenset(McDesign.model_fields) - {"spec"}


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _read_pairs(path: PathLike) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {k.strip(): _parse_value(v) for k, v in values.items() if v is not None}


def _validation_message(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()
    )


# =============================================================================
# 公開API
# =============================================================================

def load_spec(path: PathLike) -> SbmSpec:
    """
    モデル仕様ファイルを読み込む

    Raises:
        ConfigError: ファイルがない、未知のキー、検証エラー
    """
    pairs = _read_pairs(path)
    unknown = sorted(set(pairs) - SPEC_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown spec key(s) {unknown}")
    try:
        spec = SbmSpec.model_validate(pairs)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_validation_message(exc)}") from exc
    logger.info(
        "  -> Loaded spec: K=%d, %d covariate(s), link=%s", spec.K, spec.arity, spec.link.value
    )
    return spec


def load_design(path: PathLike) -> McDesign:
    """
    モンテカルロ設計ファイルを読み込む

    Raises:
        ConfigError: ファイルがない、未知のキー、検証エラー
    """
    path = Path(path)
    pairs = _read_pairs(path)
    spec_file = pairs.pop("spec_file", None)
    design_fields = {k: pairs.pop(k) for k in list(pairs) if k in DESIGN_KEYS}
    if spec_file is not None:
        if pairs:
            raise ConfigError(f"{path}: spec keys {sorted(pairs)} given together with spec_file")
        spec = load_spec(path.parent / str(spec_file))
    else:
        unknown = sorted(set(pairs) - SPEC_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown design key(s) {unknown}")
        try:
            spec = SbmSpec.model_validate(pairs)
        except ValidationError as exc:
            raise ConfigError(f"{path}: {_validation_message(exc)}") from exc
    design_fields.setdefault("name", path.stem)
    try:
        return McDesign.model_validate({**design_fields, "spec": spec})
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_validation_message(exc)}") from exc


def dump_spec(spec: SbmSpec, path: PathLike) -> None:
    """モデル仕様を `key = value` 形式で書き出す"""
    data = spec.model_dump(mode="json", exclude_defaults=False)
    with open(path, "w", encoding="utf-8") as f:
        for key, value in data.items():
            f.write(f"{key} = {json.dumps(value)}\n")
