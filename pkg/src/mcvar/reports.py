"""Diagnostic exports of a fitted coefficient set.

Three views: per-coefficient clusters of classes with equal estimates,
per-class directed networks of one lag block, and class-by-class
similarity of the nonzero supports. Lags are 1-based here, matching how
users name them; series and class indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .panel import CoefficientSet

Position = tuple[int, int, int]  # (lag, i, j) with lag 1-based


@dataclass
class ClusterGroup:
    classes: list[int]
    value: float


@dataclass
class ClusterReport:
    tau: float
    groups: dict[Position, list[ClusterGroup]]

    def n_clusters(self, pos: Position) -> int:
        return len(self.groups[pos])

    def to_dict(self, series_names: Sequence[str] | None = None,
                class_names: Sequence[str] | None = None) -> dict:
        out = []
        for (p, i, j), groups in self.groups.items():
            entry = {"lag": p, "target": i, "source": j}
            if series_names:
                entry["target_name"] = series_names[i]
                entry["source_name"] = series_names[j]
            entry["clusters"] = [
                {"classes": [class_names[c] if class_names else c for c in g.classes], "value": g.value}
                for g in groups
            ]
            out.append(entry)
        return {"tau": self.tau, "positions": out}


def _cluster_values(values: np.ndarray, tau: float) -> list[ClusterGroup]:
    order = np.argsort(values, kind="stable")
    groups: list[list[int]] = [[int(order[0])]]
    for prev, cur in zip(order[:-1], order[1:]):
        # on a line, transitive merging of pairs within tau is a gap test on the sorted values
        if values[cur] - values[prev] <= tau:
            groups[-1].append(int(cur))
        else:
            groups.append([int(cur)])
    return [ClusterGroup(sorted(g), float(np.mean(values[g]))) for g in groups]


def cluster_report(beta: CoefficientSet, tau: float = 1e-4,
                   positions: Sequence[Position] | None = None) -> ClusterReport:
    """Group classes whose estimates for a coefficient agree within ``tau``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if positions is None:
        positions = [(p + 1, i, j) for p in range(beta.P) for i in range(beta.J) for j in range(beta.J)]
    groups = {}
    for p, i, j in positions:
        groups[(p, i, j)] = _cluster_values(beta.coef[:, p - 1, i, j], tau)
    return ClusterReport(float(tau), groups)


@dataclass
class Edge:
    source: int
    target: int
    weight: float

    @property
    def sign(self) -> str:
        return "positive" if self.weight > 0 else "negative"


@dataclass
class NetworkEdgeList:
    lag: int
    nodes: list[int]
    edges: list[list[Edge]]  # one list per class
    series_names: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def n_edges(self) -> int:
        return sum(len(e) for e in self.edges)

    def out_degree(self, node: int) -> int:
        return sum(1 for es in self.edges for e in es if e.source == node and e.target != node)

    def in_degree(self, node: int) -> int:
        return sum(1 for es in self.edges for e in es if e.target == node and e.source != node)

    def _name(self, j: int) -> str:
        return self.series_names[j] if self.series_names else f"y{j + 1}"

    def to_dot(self, max_width: float = 5.0) -> str:
        """Digraph with one cluster subgraph per class; edge width scales with |weight|."""
        wmax = max((abs(e.weight) for es in self.edges for e in es), default=0.0)
        lines = [f'digraph "lag{self.lag}" {{']
        for k, es in enumerate(self.edges):
            cname = self.class_names[k] if self.class_names else str(k + 1)
            lines.append(f'  subgraph "cluster_{k}" {{')
            lines.append(f'    label="{cname}";')
            for j in self.nodes:
                lines.append(f'    "{cname}:{self._name(j)}" [label="{self._name(j)}"];')
            for e in es:
                width = max_width * abs(e.weight) / wmax if wmax > 0 else 1.0
                color = "blue" if e.weight > 0 else "red"
                lines.append(
                    f'    "{cname}:{self._name(e.source)}" -> "{cname}:{self._name(e.target)}" '
                    f'[weight="{e.weight!r}", sign="{e.sign}", penwidth="{width:.6g}", color="{color}"];'
                )
            lines.append("  }")
        lines.append("}")
        return "\n".join(lines) + "\n"


def network_export(beta: CoefficientSet, lag: int = 1, sources: Sequence[int] | None = None,
                   targets: Sequence[int] | None = None, series_names: Sequence[str] | None = None,
                   class_names: Sequence[str] | None = None) -> NetworkEdgeList:
    """Edge ``j -> i`` for every nonzero ``beta[k, lag, i, j]`` in the chosen block."""
    if not 1 <= lag <= beta.P:
        raise ValueError(f"lag must be in 1..{beta.P}")
    J = beta.J
    sources = list(range(J)) if sources is None else list(sources)
    targets = list(range(J)) if targets is None else list(targets)
    nodes = sorted(set(sources) | set(targets))
    edges = []
    for k in range(beta.K):
        B = beta.coef[k, lag - 1]
        edges.append([Edge(j, i, float(B[i, j])) for i in targets for j in sources if B[i, j] != 0.0])
    return NetworkEdgeList(lag, nodes, edges, list(series_names or []), list(class_names or []))


@dataclass
class SimilarityMatrix:
    """``values[i, j]``: share of class i's nonzero effects also nonzero in class j."""

    values: np.ndarray
    empty_rows: list[int]
    class_names: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        K = self.values.shape[0]
        names = self.class_names or [str(k + 1) for k in range(K)]
        lines = ["," + ",".join(names)]
        for k in range(K):
            lines.append(names[k] + "," + ",".join(repr(float(v)) for v in self.values[k]))
        return "\n".join(lines) + "\n"


def similarity_matrix(beta: CoefficientSet, positions: Sequence[Position] | None = None,
                      class_names: Sequence[str] | None = None) -> SimilarityMatrix:
    if positions is None:
        positions = [(p + 1, i, j) for p in range(beta.P) for i in range(beta.J) for j in range(beta.J)]
    positions = list(positions)
    if not positions:
        raise ValueError("coefficient subset is empty")
    p, i, j = (np.array(x) for x in zip(*positions))
    support = beta.coef[:, p - 1, i, j] != 0.0  # (K, n_positions)
    shared = support.astype(float) @ support.T.astype(float)
    size = support.sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.where(size[:, None] > 0, shared / size[:, None], 0.0)
    empty = [int(k) for k in np.flatnonzero(size == 0)]
    return SimilarityMatrix(values, empty, list(class_names or []))


def _resolve(tokens: str, names: Sequence[str]) -> list[int]:
    out = []
    for tok in tokens.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok in names:
            out.append(list(names).index(tok))
        elif tok.isdigit() and 1 <= int(tok) <= len(names):
            out.append(int(tok) - 1)
        else:
            raise ValueError(f"unknown series {tok!r}")
    return out


def parse_subset(spec: str | None, series_names: Sequence[str], P: int) -> tuple[int, list[int], list[int]]:
    """Parse ``"lag=1;sources=a,b;targets=c"`` into ``(lag, sources, targets)``.

    Series may be given by name or 1-based index; omitted parts mean all.
    """
    lag, sources, targets = 1, list(range(len(series_names))), list(range(len(series_names)))
    if not spec:
        return lag, sources, targets
    for part in spec.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise ValueError(f"malformed subset part {part!r}; expected key=value")
        key, val = (s.strip() for s in part.split("=", 1))
        if key == "lag":
            lag = int(val)
            if not 1 <= lag <= P:
                raise ValueError(f"lag must be in 1..{P}")
        elif key == "sources":
            sources = _resolve(val, series_names)
        elif key == "targets":
            targets = _resolve(val, series_names)
        else:
            raise ValueError(f"unknown subset key {key!r}")
    return lag, sources, targets


def subset_positions(lag: int, sources: Sequence[int], targets: Sequence[int]) -> list[Position]:
    return [(lag, i, j) for i in targets for j in sources]
