"""Shared domain types and graph/matrix conversions.

Matrix orientation convention, binding for the whole package: in a
coefficient matrix ``mats[lag][j][i]`` the entry is the signed effect of
variable ``i`` (lagged by ``lag``) on variable ``j``, i.e. rows index the
effect and columns the cause. Lag 0 holds instantaneous effects.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

DEFAULT_ZERO_TOL = 1e-8

_DOT_PALETTE = (
    "black", "blue", "red", "forestgreen", "darkorange",
    "purple", "teal", "brown", "magenta", "gray40",
)


class ShapeMismatch(ValueError):
    """Two stacks or graphs do not share variable count / max lag."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeSeriesDataset:
    """T x n observation matrix with variable names and seed provenance.

    Immutable after construction; the value array is copied and marked
    read-only so instances can be shared across threads.
    """

    values: np.ndarray
    names: tuple[str, ...]
    seed: Optional[int] = None
    allow_missing: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be a 2-D (time x variables) array")
        t_len, n = vals.shape
        if t_len < 2 or n < 1:
            raise ValueError(f"need T >= 2 and n >= 1, got T={t_len}, n={n}")
        names = tuple(str(x) for x in self.names)
        if len(names) != n:
            raise ValueError(f"{len(names)} names for {n} variables")
        if len(set(names)) != n:
            raise ValueError("variable names must be distinct")
        if not self.allow_missing and not np.isfinite(vals).all():
            raise ValueError("values contain NaN/Inf")
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "names", names)

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeriesDataset):
            return NotImplemented
        return (
            self.names == other.names
            and self.seed == other.seed
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def __hash__(self) -> int:
        return hash((self.names, self.seed, self.values.shape))


@dataclass(frozen=True)
class CoefficientStack:
    """Ordered effect matrices [B0, B1, ..., Bp], one per lag."""

    mats: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.mats) == 0:
            raise ValueError("stack needs at least the lag-0 matrix")
        mats = tuple(_readonly(m) for m in self.mats)
        n = mats[0].shape[0]
        for m in mats:
            if m.ndim != 2 or m.shape != (n, n):
                raise ValueError("all matrices must be square with equal size")
        object.__setattr__(self, "mats", mats)

    @property
    def n_vars(self) -> int:
        return self.mats[0].shape[0]

    @property
    def max_lag(self) -> int:
        return len(self.mats) - 1

    def entry(self, key: EdgeKey) -> float:
        return float(self.mats[key.lag][key.effect, key.cause])

    def positions(self) -> Iterator[EdgeKey]:
        """All addressable positions (lag-0 diagonal excluded)."""
        n = self.n_vars
        for lag in range(self.max_lag + 1):
            for j in range(n):
                for i in range(n):
                    if lag == 0 and i == j:
                        continue
                    yield EdgeKey(cause=i, effect=j, lag=lag)

    def same_shape(self, other: "CoefficientStack") -> bool:
        return self.n_vars == other.n_vars and self.max_lag == other.max_lag

    def allclose(self, other: "CoefficientStack", atol: float = 0.0) -> bool:
        return self.same_shape(other) and all(
            np.allclose(a, b, atol=atol) for a, b in zip(self.mats, other.mats)
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoefficientStack):
            return NotImplemented
        return self.same_shape(other) and all(
            np.array_equal(a, b) for a, b in zip(self.mats, other.mats)
        )

    def __hash__(self) -> int:
        return hash((self.n_vars, self.max_lag))


@dataclass(frozen=True, order=True)
class EdgeKey:
    """One potential causal relation: cause -> effect at a given lag."""

    cause: int
    effect: int
    lag: int

    def __post_init__(self) -> None:
        if self.cause < 0 or self.effect < 0 or self.lag < 0:
            raise ValueError("indices and lag must be nonnegative")
        if self.lag == 0 and self.cause == self.effect:
            raise ValueError("instantaneous self-loops are forbidden")


@dataclass(frozen=True)
class CausalGraph:
    """Signed, lag-indexed causal graph over n variables."""

    n: int
    max_lag: int
    edges: frozenset[tuple[EdgeKey, int]]

    def __post_init__(self) -> None:
        if self.n < 1 or self.max_lag < 0:
            raise ValueError("need n >= 1 and max_lag >= 0")
        edges = frozenset(self.edges)
        keys = [k for k, _ in edges]
        if len(set(keys)) != len(keys):
            raise ValueError("edge set contains a duplicated EdgeKey")
        for key, sign in edges:
            if sign not in (1, -1):
                raise ValueError(f"edge sign must be +1/-1, got {sign}")
            if key.cause >= self.n or key.effect >= self.n:
                raise ValueError(f"edge {key} out of range for n={self.n}")
            if key.lag > self.max_lag:
                raise ValueError(f"edge {key} exceeds max_lag={self.max_lag}")
        object.__setattr__(self, "edges", edges)

    def edge_keys(self) -> frozenset[EdgeKey]:
        return frozenset(k for k, _ in self.edges)

    def sign_of(self, key: EdgeKey) -> Optional[int]:
        for k, s in self.edges:
            if k == key:
                return s
        return None

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_dict(self, names: Optional[Sequence[str]] = None) -> dict:
        """JSON-ready structured report."""
        def label(i: int) -> str | int:
            return names[i] if names is not None else i

        rows = [
            {"cause": label(k.cause), "effect": label(k.effect),
             "lag": k.lag, "sign": s}
            for k, s in sorted(self.edges, key=lambda e: e[0])
        ]
        return {"n": self.n, "max_lag": self.max_lag, "edges": rows}

    def to_dot(self, names: Optional[Sequence[str]] = None) -> str:
        """Graphviz DOT text; edge label = lag, edge color indexed by lag."""
        if names is None:
            names = [f"x{i}" for i in range(self.n)]
        lines = ["digraph causal {", "  rankdir=LR;"]
        for name in names:
            lines.append(f'  "{name}";')
        for key, sign in sorted(self.edges, key=lambda e: e[0]):
            color = _DOT_PALETTE[key.lag % len(_DOT_PALETTE)]
            style = "solid" if sign > 0 else "dashed"
            lines.append(
                f'  "{names[key.cause]}" -> "{names[key.effect]}"'
                f' [label="{key.lag}", color="{color}", style={style}];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def stack_to_graph(stack: CoefficientStack,
                   zero_tol: float = DEFAULT_ZERO_TOL) -> CausalGraph:
    """Discretize a coefficient stack into a signed graph.

    An edge i -> j at lag L exists iff |mats[L][j, i]| > zero_tol; the
    lag-0 diagonal is ignored.
    """
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    edges = set()
    for key in stack.positions():
        v = stack.entry(key)
        if abs(v) > zero_tol:
            edges.add((key, 1 if v > 0 else -1))
    return CausalGraph(n=stack.n_vars, max_lag=stack.max_lag,
                       edges=frozenset(edges))


def graph_to_stack(g: CausalGraph) -> CoefficientStack:
    """Inverse of stack_to_graph with unit magnitudes (+1/-1 entries)."""
    mats = [np.zeros((g.n, g.n)) for _ in range(g.max_lag + 1)]
    for key, sign in g.edges:
        mats[key.lag][key.effect, key.cause] = float(sign)
    return CoefficientStack(mats=tuple(mats))


def summary_graph(g: CausalGraph) -> CausalGraph:
    """Collapse lags: i -> j present iff present at any lag.

    Graph edges carry unit magnitudes, so the largest-magnitude rule always
    ties and the smallest contributing lag decides the sign.
    """
    best: dict[tuple[int, int], tuple[int, int]] = {}
    for key, sign in g.edges:
        pair = (key.cause, key.effect)
        if pair not in best or key.lag < best[pair][0]:
            best[pair] = (key.lag, sign)
    edges = set()
    for (cause, effect), (_, sign) in best.items():
        if cause == effect:
            continue  # lag-0 graphs cannot hold self-loops
        edges.add((EdgeKey(cause=cause, effect=effect, lag=0), sign))
    return CausalGraph(n=g.n, max_lag=0, edges=frozenset(edges))


# ---------------------------------------------------------------------------
# CSV / text interchange


def dataset_to_csv(data: TimeSeriesDataset) -> str:
    """Header row of names, one row per time step, '.' decimal."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(data.names)
    for row in data.values:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def dataset_from_csv(text: str, seed: Optional[int] = None,
                     allow_missing: bool = False) -> TimeSeriesDataset:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 3:
        raise ValueError("dataset CSV needs a header and at least two rows")
    names = tuple(rows[0])
    values = np.array(
        [[float(v) if v not in ("", "nan", "NaN") else np.nan for v in r]
         for r in rows[1:]],
        dtype=float,
    )
    return TimeSeriesDataset(values=values, names=names, seed=seed,
                             allow_missing=allow_missing)


def stack_to_csv(stack: CoefficientStack,
                 names: Optional[Sequence[str]] = None) -> str:
    """One matrix per lag, blank-line separated, header row of names."""
    if names is None:
        names = [f"x{i}" for i in range(stack.n_vars)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for lag, mat in enumerate(stack.mats):
        if lag > 0:
            buf.write("\n")
        for row in mat:
            w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def stack_from_csv(text: str) -> tuple[CoefficientStack, tuple[str, ...]]:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty stack CSV")
    names = tuple(next(csv.reader([lines[0]])))
    n = len(names)
    blocks: list[list[list[float]]] = [[]]
    for line in lines[1:]:
        if not line.strip():
            if blocks[-1]:
                blocks.append([])
            continue
        blocks[-1].append([float(v) for v in next(csv.reader([line]))])
    if blocks and not blocks[-1]:
        blocks.pop()
    mats = []
    for block in blocks:
        mat = np.array(block, dtype=float)
        if mat.shape != (n, n):
            raise ValueError(f"lag block with shape {mat.shape}, expected ({n}, {n})")
        mats.append(mat)
    return CoefficientStack(mats=tuple(mats)), names
