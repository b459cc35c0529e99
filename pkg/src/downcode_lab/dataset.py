"""Records, datasets, generalized datasets, and the refinement partial order.

Row order is significant everywhere: row n of an attacker output corresponds
to row n of the published dataset corresponds to row n of the secret data.

A :class:`GeneralizedDataset` stores its cells in two parallel arrays (a node
index per dimension, -1 meaning exact, plus the exact value), which is both
the public in-memory representation and the layout the flush kernels use.
Cell scalars compare by exact binary float equality.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hierarchy import GeneralizedValue, Hierarchy, HierarchyError


class ShapeError(ValueError):
    """Dimension or row-count mismatch between datasets."""


@dataclass(frozen=True)
class QuasiIdentifier:
    """A named set of dimension indices (0-based) anonymity is judged on."""

    dims: frozenset[int]
    name: str = "Q"

    def __post_init__(self):
        if not self.dims:
            raise ValueError("quasi-identifier must name at least one dimension")
        if any(d < 0 for d in self.dims):
            raise ValueError("dimension indices must be non-negative")


@dataclass(frozen=True, eq=False)
class Dataset:
    """N rows of D scalars."""

    values: np.ndarray  # float64, shape (N, D)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError("dataset values must be a 2-d array")
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def row(self, n: int) -> tuple[float, ...]:
        return tuple(self.values[n])


@dataclass(frozen=True)
class GeneralizedRecord:
    cells: tuple[GeneralizedValue, ...]
    hierarchies: tuple[Hierarchy, ...]

    @property
    def dims(self) -> int:
        return len(self.cells)

    def contains(self, row: Sequence[float]) -> bool:
        if len(row) != self.dims:
            raise ShapeError("record dimension mismatch")
        return all(h.cell_contains(c, v) for h, c, v in zip(self.hierarchies, self.cells, row))


EXACT = np.int32(-1)


class GeneralizedDataset:
    """N generalized records sharing one hierarchy per dimension.

    ``cell_node[n, d]`` is the index of the hierarchy node for that cell in
    ``hierarchies[d].node_ids``, or -1 for an exact cell whose scalar is in
    ``cell_val[n, d]``. Singleton-set nodes are canonicalized to exact cells
    at construction, so representational cell equality is set equality.
    """

    def __init__(self, hierarchies: Sequence[Hierarchy], cell_node: np.ndarray, cell_val: np.ndarray):
        self.hierarchies: tuple[Hierarchy, ...] = tuple(hierarchies)
        cell_node = np.asarray(cell_node, dtype=np.int32)
        cell_val = np.asarray(cell_val, dtype=np.float64)
        if cell_node.ndim != 2 or cell_node.shape != cell_val.shape:
            raise ShapeError("cell arrays must be 2-d and congruent")
        if cell_node.shape[1] != len(self.hierarchies):
            raise ShapeError("one hierarchy per dimension required")
        self.cell_node = cell_node
        self.cell_val = cell_val
        self._canonicalize()

    def _canonicalize(self) -> None:
        for d, h in enumerate(self.hierarchies):
            col = self.cell_node[:, d]
            for n in np.nonzero(col >= 0)[0]:
                idx = int(col[n])
                if idx >= len(h.node_ids):
                    raise HierarchyError(f"cell ({n},{d}) references unknown node index {idx}")
                sv = h.nodes[h.node_ids[idx]].set.singleton_value()
                if sv is not None:
                    self.cell_node[n, d] = EXACT
                    self.cell_val[n, d] = sv

    # -- construction --------------------------------------------------------

    @staticmethod
    def from_cells(hierarchies: Sequence[Hierarchy], rows: Sequence[Sequence[GeneralizedValue]]) -> "GeneralizedDataset":
        hs = tuple(hierarchies)
        n, d = len(rows), len(hs)
        node = np.full((n, d), EXACT, dtype=np.int32)
        val = np.zeros((n, d), dtype=np.float64)
        for i, row in enumerate(rows):
            if len(row) != d:
                raise ShapeError(f"row {i} has {len(row)} cells, expected {d}")
            for j, cell in enumerate(row):
                if cell.is_exact:
                    val[i, j] = cell.value
                else:
                    node[i, j] = hs[j].index(cell.node)
        return GeneralizedDataset(hs, node, val)

    @staticmethod
    def all_root(hierarchies: Sequence[Hierarchy], n_rows: int) -> "GeneralizedDataset":
        hs = tuple(hierarchies)
        node = np.empty((n_rows, len(hs)), dtype=np.int32)
        for d, h in enumerate(hs):
            node[:, d] = h.index(h.root)
        return GeneralizedDataset(hs, node, np.zeros((n_rows, len(hs))))

    @staticmethod
    def from_exact(hierarchies: Sequence[Hierarchy], x: Dataset) -> "GeneralizedDataset":
        node = np.full(x.values.shape, EXACT, dtype=np.int32)
        return GeneralizedDataset(hierarchies, node, x.values.copy())

    def copy(self) -> "GeneralizedDataset":
        return GeneralizedDataset(self.hierarchies, self.cell_node.copy(), self.cell_val.copy())

    # -- access ---------------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.cell_node.shape[0]

    @property
    def dims(self) -> int:
        return self.cell_node.shape[1]

    def cell(self, n: int, d: int) -> GeneralizedValue:
        idx = int(self.cell_node[n, d])
        if idx == EXACT:
            return GeneralizedValue.exact(float(self.cell_val[n, d]))
        return GeneralizedValue(node=self.hierarchies[d].node_ids[idx])

    def record(self, n: int) -> GeneralizedRecord:
        return GeneralizedRecord(tuple(self.cell(n, d) for d in range(self.dims)), self.hierarchies)

    def row_key(self, n: int, dims: Iterable[int] | None = None) -> tuple:
        """Hashable representational key of row n restricted to ``dims``."""
        ds = range(self.dims) if dims is None else sorted(dims)
        return tuple(
            (int(self.cell_node[n, d]), float(self.cell_val[n, d]) if self.cell_node[n, d] == EXACT else 0.0)
            for d in ds
        )

    # -- per-cell relations ----------------------------------------------------

    def _cell_subset(self, n: int, d: int, other: "GeneralizedDataset", m: int) -> bool:
        """self[n,d] ⊆ other[m,d] as value sets."""
        a_nd, a_v = int(self.cell_node[n, d]), self.cell_val[n, d]
        b_nd, b_v = int(other.cell_node[m, d]), other.cell_val[m, d]
        h = self.hierarchies[d]
        if a_nd == EXACT and b_nd == EXACT:
            return a_v == b_v
        if a_nd == EXACT:
            return h.nodes[h.node_ids[b_nd]].set.contains(a_v)
        if b_nd == EXACT:
            return False  # canonical node cells are never singletons
        return h.is_ancestor_or_self(h.node_ids[b_nd], h.node_ids[a_nd])

    def _cell_equal(self, n: int, d: int, other: "GeneralizedDataset", m: int) -> bool:
        a_nd, b_nd = int(self.cell_node[n, d]), int(other.cell_node[m, d])
        if a_nd != b_nd:
            return False
        if a_nd == EXACT:
            return self.cell_val[n, d] == other.cell_val[m, d]
        return True


# -- refinement ---------------------------------------------------------------


@dataclass(frozen=True)
class RefinementRelation:
    """How one generalized record relates to another under set containment."""

    kind: str  # "equal" | "strict" | "incomparable"
    refined_dims: frozenset[int] = frozenset()


@dataclass(frozen=True)
class DatasetRefinementReport:
    holds: bool           # every row of the refinement is contained in its counterpart
    refined_rows: int     # rows strictly refined
    min_refined_dims: int  # min over strictly refined rows of their refined dims (0 if none)


def refines(z: GeneralizedRecord, y: GeneralizedRecord) -> RefinementRelation:
    """Does record ``z`` refine record ``y``?

    "strict" carries the dimensions refined properly; reverse containment
    and disjointness both report "incomparable".
    """
    if z.dims != y.dims:
        raise ShapeError("record dimension mismatch")
    zg = GeneralizedDataset.from_cells(z.hierarchies, [z.cells])
    yg = GeneralizedDataset.from_cells(y.hierarchies, [y.cells])
    return _row_refines(zg, 0, yg, 0)


def _row_refines(Z: GeneralizedDataset, n: int, Y: GeneralizedDataset, m: int) -> RefinementRelation:
    refined = []
    for d in range(Z.dims):
        if not Z._cell_subset(n, d, Y, m):
            return RefinementRelation("incomparable")
        if not Z._cell_equal(n, d, Y, m):
            refined.append(d)
    if refined:
        return RefinementRelation("strict", frozenset(refined))
    return RefinementRelation("equal")


def dataset_refines(Z: GeneralizedDataset, Y: GeneralizedDataset) -> DatasetRefinementReport:
    """Row-aligned refinement report: containment, how many rows are strictly
    refined, and the per-row minimum of strictly refined dimensions."""
    if Z.n_rows != Y.n_rows or Z.dims != Y.dims:
        raise ShapeError("dataset shape mismatch")
    holds = True
    refined_rows = 0
    min_dims = 0
    for n in range(Z.n_rows):
        rel = _row_refines(Z, n, Y, n)
        if rel.kind == "incomparable":
            holds = False
        elif rel.kind == "strict":
            refined_rows += 1
            k = len(rel.refined_dims)
            min_dims = k if refined_rows == 1 else min(min_dims, k)
    return DatasetRefinementReport(holds, refined_rows, min_dims)


def generalizes_dataset(Z: GeneralizedDataset, X: Dataset) -> bool:
    """True iff every secret row lies inside its generalized counterpart."""
    if Z.n_rows != X.n_rows or Z.dims != X.dims:
        raise ShapeError("dataset shape mismatch")
    for n in range(Z.n_rows):
        for d in range(Z.dims):
            nd = int(Z.cell_node[n, d])
            v = X.values[n, d]
            if nd == EXACT:
                if Z.cell_val[n, d] != v:
                    return False
            else:
                h = Z.hierarchies[d]
                if not h.nodes[h.node_ids[nd]].set.contains(v):
                    return False
    return True


# -- anonymity ---------------------------------------------------------------


def effective_anonymity(Y: GeneralizedDataset, n: int, q: QuasiIdentifier) -> int:
    """Number of rows (including row n) sharing row n's cells on ``q``."""
    if not 0 <= n < Y.n_rows:
        raise IndexError(f"row {n} out of range")
    if any(d >= Y.dims for d in q.dims):
        raise ShapeError("quasi-identifier names a dimension beyond the dataset")
    key = Y.row_key(n, q.dims)
    return sum(1 for m in range(Y.n_rows) if Y.row_key(m, q.dims) == key)


def _class_sizes(Y: GeneralizedDataset, q: QuasiIdentifier | None = None) -> dict[tuple, int]:
    dims = None if q is None else q.dims
    sizes: dict[tuple, int] = {}
    for n in range(Y.n_rows):
        key = Y.row_key(n, dims)
        sizes[key] = sizes.get(key, 0) + 1
    return sizes


def is_k_anonymous(Y: GeneralizedDataset, k: int, q: QuasiIdentifier | None = None) -> bool:
    """Every row's effective anonymity on ``q`` is at least k (vacuous on N=0).

    ``q`` defaults to all dimensions.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if Y.n_rows == 0:
        return True
    if q is not None and any(d >= Y.dims for d in q.dims):
        raise ShapeError("quasi-identifier names a dimension beyond the dataset")
    return min(_class_sizes(Y, q).values()) >= k


def class_partition(Y: GeneralizedDataset) -> list[list[int]]:
    """Groups of row indices with identical records, ordered by first row."""
    groups: dict[tuple, list[int]] = {}
    for n in range(Y.n_rows):
        groups.setdefault(Y.row_key(n), []).append(n)
    return sorted(groups.values(), key=lambda g: g[0])


# -- CSV round-trip ------------------------------------------------------------


def save_dataset_csv(x: Dataset, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"d{i}" for i in range(x.dims)])
        for row in x.values:
            w.writerow([repr(float(v)) for v in row])


def load_dataset_csv(path: str) -> Dataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return Dataset(np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64))


def save_generalized_csv(Y: GeneralizedDataset, path: str) -> None:
    """Cells serialize as ``v:<scalar>`` or ``n:<node-id>``; the header row
    carries each column's hierarchy name."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([h.name for h in Y.hierarchies])
        for n in range(Y.n_rows):
            out = []
            for d in range(Y.dims):
                idx = int(Y.cell_node[n, d])
                if idx == EXACT:
                    out.append(f"v:{float(Y.cell_val[n, d])!r}")
                else:
                    out.append(f"n:{Y.hierarchies[d].node_ids[idx]}")
            w.writerow(out)


def load_generalized_csv(path: str, hierarchies) -> GeneralizedDataset:
    """``hierarchies`` is a single Hierarchy shared by all columns or a
    mapping of hierarchy name to Hierarchy."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if isinstance(hierarchies, Hierarchy):
        hs = [hierarchies] * len(header)
        for name in header:
            if name != hierarchies.name:
                raise HierarchyError(f"column expects hierarchy {name!r}, got {hierarchies.name!r}")
    else:
        hs = [hierarchies[name] for name in header]
    cells = []
    for r in body:
        row = []
        for d, tok in enumerate(r):
            tag, _, rest = tok.partition(":")
            if tag == "v":
                row.append(GeneralizedValue.exact(float(rest)))
            elif tag == "n":
                row.append(GeneralizedValue.at_node(hs[d], rest))
            else:
                raise ValueError(f"bad cell token {tok!r}")
        cells.append(row)
    return GeneralizedDataset.from_cells(hs, cells)
