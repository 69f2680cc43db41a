"""
tests/__init__.py

テストパッケージ
"""
