"""
app/models/common.py

共通モデル定義

このファイルは、ライブラリとCLI全体で使用される共通のモデルを定義します。
- エラーコードと例外階層
- CLIが書き出すJSONレポートの統一エンベロープ

公式ドキュメント:
- Pydantic V2: https://docs.pydantic.dev/latest/
- Generic Types: https://docs.pydantic.dev/latest/concepts/models/#generic-models
"""
from typing import Generic, Optional, TypeVar

from pydantic import BaseModel, Field

# =============================================================================
# ジェネリック型変数
# =============================================================================

T = TypeVar("T")


# =============================================================================
# エラーコード
# =============================================================================

INVALID_MODEL = "INVALID_MODEL"
INVALID_INPUT = "INVALID_INPUT"
NUMERICAL_FAILURE = "NUMERICAL_FAILURE"
DEGENERATE_FIT = "DEGENERATE_FIT"
PARSE_ERROR = "PARSE_ERROR"
CONFIG_ERROR = "CONFIG_ERROR"
EMPTY_GRAPH = "EMPTY_GRAPH"
INTERNAL_ERROR = "INTERNAL_ERROR"


# =============================================================================
# 例外
# =============================================================================

class GrdpgError(Exception):
    """
    ライブラリ例外の基底クラス

    各サブクラスはエラーコードを持ち、CLIではそのまま ErrorDetail.code になる。
    """
    code: str = INTERNAL_ERROR


class InvalidModel(GrdpgError):
    """生成モデルが不正（確率行列の要素が [0,1] 外など）"""
    code = INVALID_MODEL


class InvalidInput(GrdpgError, ValueError):
    """関数の事前条件違反"""
    code = INVALID_INPUT


class NumericalFailure(GrdpgError):
    """固有値ソルバの非収束、特異行列、共分散の崩壊"""
    code = NUMERICAL_FAILURE


class DegenerateFit(GrdpgError):
    """推定が退化（空の拡張ブロック、空のペア集合）"""
    code = DEGENERATE_FIT


class ParseError(GrdpgError):
    """
    入力ファイルの構文エラー

    Attributes:
        line (Optional[int]): 問題のある行番号（1始まり）
    """
    code = PARSE_ERROR

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(GrdpgError):
    """設定ファイル・列指定の誤り"""
    code = CONFIG_ERROR


class EmptyGraph(GrdpgError):
    """前処理の結果ノードが残らなかった"""
    code = EMPTY_GRAPH


# =============================================================================
# エラーモデル
# =============================================================================

class ErrorDetail(BaseModel):
    """
    エラー詳細モデル

    Attributes:
        code (str): エラーコード
        message (str): エラーメッセージ（失敗したステージ名を含む）

    エラーコード一覧:
        - INVALID_MODEL: 生成モデルが不正
        - INVALID_INPUT: 入力が事前条件を満たさない
        - NUMERICAL_FAILURE: 数値計算の失敗
        - DEGENERATE_FIT: 推定の退化（終了コード2）
        - PARSE_ERROR: 入力ファイルの構文エラー
        - CONFIG_ERROR: 設定の誤り
        - EMPTY_GRAPH: 前処理後のグラフが空
        - INTERNAL_ERROR: 内部エラー
    """
    code: str = Field(
        ...,
        description="エラーコード",
        examples=["DEGENERATE_FIT", "PARSE_ERROR"]
    )
    message: str = Field(
        ...,
        description="エラーメッセージ",
        examples=[
            "[fit] cluster stage: expanded block 3 of 4 is empty",
            "line 4: expected two node IDs",
        ]
    )


# =============================================================================
# 統一レポートエンベロープ
# =============================================================================

class CommandResponse(BaseModel, Generic[T]):
    """
    CLIレポートの統一エンベロープ（ジェネリック型）

    成功時は data に結果を、失敗時は error にエラー詳細を格納する。

    Attributes:
        success (bool): 成功フラグ
        data (Optional[T]): 成功時の結果
        error (Optional[ErrorDetail]): 失敗時のエラー詳細
    """
    success: bool = Field(..., description="成功フラグ")
    data: Optional[T] = Field(default=None, description="成功時の結果")
    error: Optional[ErrorDetail] = Field(default=None, description="失敗時のエラー詳細")


# =============================================================================
# ヘルパー関数
# =============================================================================

def create_success_response(data: T) -> CommandResponse[T]:
    """成功レスポンスを作成"""
    return CommandResponse(success=True, data=data)


def create_error_response(code: str, message: str) -> CommandResponse[None]:
    """
    エラーレスポンスを作成

    Args:
        code: エラーコード
        message: エラーメッセージ

    Returns:
        CommandResponse: エラーレスポンス
    """
    return CommandResponse(
        success=False,
        error=ErrorDetail(code=code, message=message)
    )
