"""
app/data/__init__.py

データパッケージ
"""
from .presets import DESIGNS, SPECS, get_design, get_preset

__all__ = ["DESIGNS", "SPECS", "get_design", "get_preset"]
