"""
app/__init__.py

GRDPG 埋め込みによる共変量付き確率的ブロックモデルのホモフィリー推定パッケージ
"""
__version__ = "0.1.0"
