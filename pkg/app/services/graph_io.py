"""
app/services/graph_io.py

グラフ入出力と前処理

- 空白区切りエッジリストの読み書き（任意の整数IDを 0..n−1 に詰め直し、対応表を保持）
- ヘッダ付き共変量テーブル（カンマ / タブ区切り）の読み込みと2値化ルール
- 欠測ノードの除去と最大連結成分の抽出
- 平均次数による隣接行列の正則化 A + (γ·d̄/n)·J（J は実体化しない）

公式ドキュメント:
- NetworkX connected_components: https://networkx.org/documentation/stable/reference/algorithms/generated/networkx.algorithms.components.connected_components.html
- scipy.sparse.csr_matrix: https://docs.scipy.org/doc/scipy/reference/generated/scipy.sparse.csr_matrix.html
- scipy.sparse.linalg.LinearOperator: https://docs.scipy.org/doc/scipy/reference/generated/scipy.sparse.linalg.LinearOperator.html
- pandas.read_csv: https://pandas.pydata.org/docs/reference/api/pandas.read_csv.html
"""
import logging
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import networkx as nx
import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import LinearOperator

from app.models.common import ConfigError, EmptyGraph, InvalidInput, ParseError

logger = logging.getLogger(__name__)

IntArray = NDArray[np.int64]
FloatArray = NDArray[np.float64]
PathLike = Union[str, Path]

COVARIATE_DTYPE = "Int8"

_OPERATORS: dict[str, Callable[[object, object], object]] = {
    "==": operator.eq, "!=": operator.ne,
    ">=": operator.ge, "<=": operator.le,
    ">": operator.gt, "<": operator.lt,
}


# =============================================================================
# データクラス
# =============================================================================

@dataclass(frozen=True)
class Graph:
    """
    単純無向グラフ + ノード共変量テーブル

    Attributes:
        n: ノード数
        edges: (m, 2) の辺配列。各行 i < j、重複なし、辞書順
        covariates: index 0..n−1 の共変量テーブル（欠測は <NA>）
        node_ids: 元の外部ID（内部番号 → 外部ID）
        dropped: 読み込み時に捨てた辺の件数（"duplicates", "self_loops"）
    """
    n: int
    edges: IntArray
    covariates: pd.DataFrame
    node_ids: IntArray
    dropped: dict[str, int] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return int(len(self.edges))

    @property
    def mean_degree(self) -> float:
        return 2.0 * self.m / self.n if self.n else 0.0

    def adjacency(self) -> sparse.csr_matrix:
        """対称 0/1 隣接行列（CSR）"""
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.ones(len(rows), dtype=float)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def to_networkx(self) -> nx.Graph:
        G = nx.Graph()
        G.add_nodes_from(range(self.n))
        G.add_edges_from(map(tuple, self.edges.tolist()))
        return G

    def subgraph(self, nodes: Sequence[int]) -> "Graph":
        """内部番号 nodes の誘導部分グラフ（番号は詰め直す）"""
        keep = np.unique(np.asarray(nodes, dtype=np.int64))
        position = np.full(self.n, -1, dtype=np.int64)
        position[keep] = np.arange(len(keep))
        mask = (position[self.edges[:, 0]] >= 0) & (position[self.edges[:, 1]] >= 0)
        edges = position[self.edges[mask]]
        return Graph(
            n=len(keep),
            edges=_canonical_edges(edges),
            covariates=self.covariates.iloc[keep].reset_index(drop=True),
            node_ids=self.node_ids[keep],
        )

    def covariate_matrix(self, columns: Sequence[str]) -> IntArray:
        """
        指定列を n×p の 0/1 行列で返す

        Raises:
            ConfigError: 未知の列
            InvalidInput: 欠測がある、0/1 以外の値、全ノードで一定
        """
        out = np.zeros((self.n, len(columns)), dtype=np.int64)
        for c, name in enumerate(columns):
            if name not in self.covariates.columns:
                raise ConfigError(f"unknown covariate column {name!r}")
            series = self.covariates[name]
            if series.isna().any():
                raise InvalidInput(
                    f"covariate {name!r} has {int(series.isna().sum())} missing cells; "
                    "drop missing nodes first"
                )
            values = series.to_numpy(dtype=np.int64)
            if not np.isin(values, (0, 1)).all():
                raise InvalidInput(f"covariate {name!r} is not binary")
            if len(np.unique(values)) < 2:
                raise InvalidInput(f"covariate {name!r} is constant over all nodes")
            out[:, c] = values
        return out


@dataclass(frozen=True)
class BinarizeRule:
    """
    2値化ルール

    値を数値に変換し、missing に含まれる値は欠測、それ以外は
    「value <op> literal」が真なら 1、偽なら 0 にする。

    Attributes:
        op: 比較演算子（==, !=, >=, <=, >, <）
        literal: 比較する値
        missing: 欠測として扱う値
    """
    op: str
    literal: float
    missing: frozenset[float] = frozenset()

    def apply(self, series: pd.Series) -> pd.Series:
        values = pd.to_numeric(series, errors="coerce")
        result = _OPERATORS[self.op](values, self.literal).astype(COVARIATE_DTYPE)
        result[values.isna() | values.isin(list(self.missing))] = pd.NA
        return result


# =============================================================================
# 内部ヘルパー
# =============================================================================

def _canonical_edges(edges: NDArray[np.int64]) -> IntArray:
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return pairs.astype(np.int64)


def _empty_covariates(n: int) -> pd.DataFrame:
    return pd.DataFrame(index=pd.RangeIndex(n))


_RULE_PATTERN = re.compile(r"^\s*value\s*(==|!=|>=|<=|>|<)\s*(-?[\d.]+)\s*$")


# =============================================================================
# 公開API
# =============================================================================

def parse_binarize(
    text: str, missing: Optional[Sequence[float]] = None
) -> tuple[str, BinarizeRule]:
    """
    CLIの `--binarize col=rule` を解釈する

    使用例:
        parse_binarize("gender=value==1", missing=[0])

    Raises:
        ConfigError: 書式の誤り
    """
    column, sep, rule = text.partition("=")
    match = _RULE_PATTERN.match(rule) if sep else None
    if not column.strip() or match is None:
        raise ConfigError(f"binarize rule must look like 'column=value==1', got {text!r}")
    return column.strip(), BinarizeRule(
        op=match.group(1),
        literal=float(match.group(2)),
        missing=frozenset(float(v) for v in (missing or ())),
    )


def graph_from_edges(
    n: int, edges: NDArray[np.int64], covariates: Optional[pd.DataFrame] = None
) -> Graph:
    """内部番号 0..n−1 の辺配列から Graph を作る（外部IDは内部番号と同じ）"""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    return Graph(
        n=n,
        edges=_canonical_edges(edges),
        covariates=(
            _empty_covariates(n) if covariates is None else covariates.reset_index(drop=True)
        ),
        node_ids=np.arange(n, dtype=np.int64),
    )


def read_edge_list(path: PathLike) -> Graph:
    """
    エッジリストを読み込む

    1行に整数のノードID 2個（空白区切り）。`#` 以降はコメント。
    IDは昇順に 0..n−1 へ詰め直し、自己ループと重複辺は件数を警告して捨てる。

    Raises:
        ParseError: 書式の誤り（行番号付き）
    """
    pairs: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ParseError(f"expected two node IDs, got {len(tokens)} fields", line=line_no)
            try:
                pairs.append((int(tokens[0]), int(tokens[1])))
            except ValueError as exc:
                raise ParseError(f"node IDs must be integers: {line!r}", line=line_no) from exc

    raw_edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    node_ids, inverse = np.unique(raw_edges.ravel(), return_inverse=True)
    edges = inverse.reshape(-1, 2).astype(np.int64)

    loops = edges[:, 0] == edges[:, 1]
    kept = edges[~loops]
    canonical = _canonical_edges(kept)
    dropped = {"self_loops": int(loops.sum()), "duplicates": int(len(kept) - len(canonical))}
    if dropped["self_loops"] or dropped["duplicates"]:
        logger.warning(
            "dropped %d self-loops and %d duplicate edges from %s",
            dropped["self_loops"], dropped["duplicates"], path,
        )
    logger.info("  -> Loaded: %s nodes, %s edges", f"{len(node_ids):,}", f"{len(canonical):,}")
    return Graph(
        n=len(node_ids),
        edges=canonical,
        covariates=_empty_covariates(len(node_ids)),
        node_ids=node_ids.astype(np.int64),
        dropped=dropped,
    )


def write_edge_list(graph: Graph, path: PathLike) -> None:
    """元のIDでエッジリストを書き出す"""
    ids = graph.node_ids[graph.edges] if graph.m else np.zeros((0, 2), dtype=np.int64)
    with open(path, "w", encoding="utf-8") as f:
        for i, j in ids.tolist():
            f.write(f"{i} {j}\n")


def read_covariates(
    path: PathLike,
    columns: Sequence[str],
    rules: Optional[dict[str, BinarizeRule]] = None,
    id_column: str = "node_id",
) -> pd.DataFrame:
    """
    共変量テーブルを読み込む

    区切り文字（カンマ / タブ）は自動判定。id_column がなければ先頭列をIDとみなす。

    Args:
        path: ヘッダ付きテーブル
        columns: 取り出す列
        rules: 列ごとの2値化ルール
        id_column: ノードID列

    Returns:
        外部ノードIDを index に持つ DataFrame（欠測は <NA>）

    Raises:
        ConfigError: 未知の列
        ParseError: 整数でないノードID
    """
    table = pd.read_csv(path, sep=None, engine="python", dtype=str)
    table.columns = [c.strip() for c in table.columns]
    if id_column not in table.columns:
        id_column = table.columns[0]
    unknown = [c for c in columns if c not in table.columns]
    if unknown:
        raise ConfigError(f"unknown covariate column(s) {unknown} in {path}")

    raw_ids = table[id_column].str.strip()
    ids = pd.to_numeric(raw_ids, errors="coerce")
    bad = (ids.isna() | (ids % 1 != 0)).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        # 1行目はヘッダ
        raise ParseError(f"node ID {raw_ids.iloc[row]!r} is not an integer", line=row + 2)
    index = ids.astype(np.int64)
    out = pd.DataFrame(index=pd.Index(index, name="node_id"))
    for name in columns:
        series = table[name].str.strip().replace("", pd.NA)
        series.index = out.index
        if rules and name in rules:
            out[name] = rules[name].apply(series)
        else:
            out[name] = pd.to_numeric(series, errors="coerce").astype("Int64")
    return out


def attach_covariates(graph: Graph, table: pd.DataFrame) -> Graph:
    """
    外部IDで共変量を結合する

    テーブルにだけ現れるノードは孤立ノードとして追加し、IDの昇順で番号を振り直す。
    テーブルにないノードの共変量は欠測になる。
    """
    node_ids = np.union1d(graph.node_ids, table.index.to_numpy(dtype=np.int64))
    remap = np.searchsorted(node_ids, graph.node_ids)
    edges = _canonical_edges(remap[graph.edges]) if graph.m else graph.edges
    covariates = table.reindex(node_ids).reset_index(drop=True)
    return Graph(
        n=len(node_ids),
        edges=edges,
        covariates=covariates,
        node_ids=node_ids.astype(np.int64),
        dropped=graph.dropped,
    )


def write_covariates(graph: Graph, path: PathLike, extra: Optional[pd.DataFrame] = None) -> None:
    """共変量（と任意の追加列）を node_id 付きTSVで書き出す"""
    table = graph.covariates.copy()
    if extra is not None:
        table = pd.concat([table, extra.reset_index(drop=True)], axis=1)
    table.insert(0, "node_id", graph.node_ids)
    table.to_csv(path, sep="\t", index=False, na_rep="")


def drop_missing_and_lcc(graph: Graph, required_columns: Sequence[str]) -> Graph:
    """
    必須共変量が欠測のノードを除き、最大連結成分を返す

    同じ大きさの成分が複数あるときは、元のIDが最小のノードを含む成分を選ぶ。

    Raises:
        ConfigError: 未知の列
        ParseError: 整数でないノードID
        EmptyGraph: ノードが残らない
    """
    unknown = [c for c in required_columns if c not in graph.covariates.columns]
    if unknown:
        raise ConfigError(f"unknown covariate column(s) {unknown}")
    if required_columns:
        observed = ~graph.covariates[list(required_columns)].isna().any(axis=1).to_numpy()
    else:
        observed = np.ones(graph.n, dtype=bool)
    filtered = graph.subgraph(np.flatnonzero(observed))
    if filtered.n == 0:
        raise EmptyGraph("no node has all required covariates observed")

    components = nx.connected_components(filtered.to_networkx())
    largest = max(
        (sorted(c) for c in components),
        key=lambda c: (len(c), -int(filtered.node_ids[c].min())),
    )
    result = filtered.subgraph(largest)
    logger.info(
        "  -> %d of %d nodes observed, largest component has %d nodes",
        filtered.n, graph.n, result.n,
    )
    return result


class RegularizedAdjacency(LinearOperator):
    """
    A + c·J の作用素（J は全要素1、実体化しない）

    matvec: A v + c·(Σv)·1
    """

    def __init__(self, A: Union[sparse.spmatrix, FloatArray], shift: float):
        self.A = A
        self.shift = float(shift)
        super().__init__(dtype=np.float64, shape=A.shape)

    def _matvec(self, v: FloatArray) -> FloatArray:
        v = np.asarray(v, dtype=float).ravel()
        return np.asarray(self.A @ v).ravel() + self.shift * v.sum()

    def _matmat(self, V: FloatArray) -> FloatArray:
        V = np.asarray(V, dtype=float)
        return np.asarray(self.A @ V) + self.shift * V.sum(axis=0, keepdims=True)

    def _adjoint(self) -> "RegularizedAdjacency":
        return self

    def toarray(self) -> FloatArray:
        """小さい n の検証用に実体化する"""
        dense = self.A.toarray() if sparse.issparse(self.A) else np.asarray(self.A, dtype=float)
        return dense + self.shift


def regularize_degrees(
    A: Union[sparse.spmatrix, FloatArray], gamma: float = 0.25
) -> Union[sparse.spmatrix, FloatArray, RegularizedAdjacency]:
    """
    平均次数による正則化 A + (γ·d̄/n)·J

    Args:
        A: 対称隣接行列
        gamma: 正則化の強さ（0 なら A をそのまま返す）

    Raises:
        InvalidInput: gamma < 0
    """
    if gamma < 0:
        raise InvalidInput(f"gamma must be nonnegative, got {gamma}")
    if gamma == 0:
        return A
    n = A.shape[0]
    mean_degree = float(A.sum()) / n
    return RegularizedAdjacency(A, gamma * mean_degree / n)
