"""
app/services/seeds.py

カウンタ方式のシード分割

(設計シード, カウンタ...) から numpy.random.SeedSequence で独立なシードを導出する。
並列実行の順序が結果に影響しない。

公式ドキュメント:
- numpy.random.SeedSequence: https://numpy.org/doc/stable/reference/random/bit_generators/generated/numpy.random.SeedSequence.html
"""
import numpy as np


def derive_seed(seed: int, *counters: int) -> int:
    """
    シードとカウンタ列から 32bit のシードを導出

    使用例:
        derive_seed(7, 2000, 13)   # 設計シード7, n=2000, 反復13
    """
    entropy = [int(seed) & 0xFFFFFFFF, *(int(c) for c in counters)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
