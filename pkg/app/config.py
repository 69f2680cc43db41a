"""
app/config.py

アプリケーション設定

環境変数（接頭辞 GRDPG_）と .env ファイルから読み込む。CLI のフラグが優先する。

環境変数:
  GRDPG_LOG_LEVEL: ログレベル（デフォルト: INFO）
  GRDPG_JOBS: モンテカルロ・ブートストラップの並列プロセス数（デフォルト: 1）
  GRDPG_SEED: 乱数シード（デフォルト: 0）
  GRDPG_CLIP_EPSILON: h⁻¹ に渡す確率のクリップ幅（デフォルト: 1e-6）
  GRDPG_REGULARIZE_GAMMA: `--regularize` 指定時の正則化の強さ（デフォルト: 0.25）
  GRDPG_BOOTSTRAP_REPLICATES: ブートストラップの反復回数（デフォルト: 200）
  GRDPG_EIGEN_TOL: 反復固有値ソルバの許容誤差（デフォルト: 1e-10）
  GRDPG_DENSE_THRESHOLD: これ未満の n は直接法で固有分解（デフォルト: 256）

公式ドキュメント:
- pydantic-settings: https://docs.pydantic.dev/latest/concepts/pydantic_settings/
"""
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """アプリケーション設定"""
    model_config = SettingsConfigDict(env_prefix="GRDPG_", env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO")
    jobs: int = Field(default=1, ge=1)
    seed: int = Field(default=0)
    clip_epsilon: float = Field(default=1e-6, gt=0, lt=0.5)
    regularize_gamma: float = Field(default=0.25, ge=0)
    bootstrap_replicates: int = Field(default=200, ge=2)
    eigen_tol: float = Field(default=1e-10, gt=0)
    dense_threshold: int = Field(default=256, ge=1)


def get_settings() -> Settings:
    """現在の環境から設定を作る"""
    return Settings()
