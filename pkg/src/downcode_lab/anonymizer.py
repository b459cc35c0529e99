"""Hierarchical k-anonymizers built from local refinement ("flush") moves.

The pipeline is: pick an initial k-anonymous generalization of the secret
data, then run `minimize`, which applies three catalogued move kinds until
none applies:

* adopt-single: one row adopts a strictly finer existing record containing
  its secret value;
* group-split: part of a class descends one hierarchy level on one
  dimension, both sides keeping size >= k;
* class-descent/-merge: a whole class drains away from its record, padded
  by temporary wildcard rows so moves are never blocked by the class itself.

Every move preserves k-anonymity, hierarchy membership, and correctness,
and strictly descends in the refinement order, so minimize terminates.
Whether its fixpoints are globally minimal is checked empirically against
`brute_force_is_minimal` on tiny instances, never assumed.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from ._encode import class_capacity, encoded_space, initial_classes
from .dataset import (
    Dataset,
    GeneralizedDataset,
    GeneralizedRecord,
    ShapeError,
    dataset_refines,
    generalizes_dataset,
    is_k_anonymous,
)
from .hierarchy import GeneralizedValue, Hierarchy

STRATEGIES = ("top", "lca", "random")
_STRATEGY_ALIASES = {
    "top": "top",
    "top-then-minimize": "top",
    "lca": "lca",
    "lca-partition-then-minimize": "lca",
    "random": "random",
    "random-partition-then-minimize": "random",
}

DEBUG_CHECKS = os.environ.get("DOWNCODE_LAB_DEBUG", "") in ("1", "true", "yes")


@dataclass(frozen=True)
class AnonymizerConfig:
    k: int
    strategy: str = "top"
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be at least 2, got {self.k}")
        canon = _STRATEGY_ALIASES.get(self.strategy)
        if canon is None:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        object.__setattr__(self, "strategy", canon)


@dataclass(frozen=True)
class RefinementMove:
    """One applied catalog move, for audit and tests."""

    kind: str  # "adopt-single" | "group-split" | "class-descent" | "class-merge"
    rows: tuple[int, ...]


class _State:
    """Encoded working state shared by the flush operations."""

    def __init__(self, x: Dataset, y: GeneralizedDataset):
        if x.n_rows != y.n_rows or x.dims != y.dims:
            raise ShapeError("dataset and generalization shapes differ")
        self.space = encoded_space(y.hierarchies)
        self.xv = self.space.encode_x(x)
        self.cnode, self.cval = self.space.encode_cells(y)
        cap = class_capacity(self.space, max(x.n_rows, 1))
        self.class_id, self.class_size, self.next_id = initial_classes(self.cnode, self.cval, cap)
        self.henc = self.space.pack()
        self.k_budget = int(x.n_rows * (np.sum(self.space.max_depth + 1) + 1) + 16)

    def result(self) -> GeneralizedDataset:
        return self.space.decode_cells(self.cnode, self.cval)


def _check_triple(x: Dataset, y: GeneralizedDataset, k: int, where: str) -> None:
    if not generalizes_dataset(y, x):
        raise ValueError(f"{where}: input does not generalize the secret data")
    if not is_k_anonymous(y, k):
        raise ValueError(f"{where}: input is not {k}-anonymous")


def _post_debug(x: Dataset, before: GeneralizedDataset, after: GeneralizedDataset, k: int, where: str) -> None:
    if not DEBUG_CHECKS:
        return
    assert generalizes_dataset(after, x), f"{where}: output stopped generalizing X"
    assert is_k_anonymous(after, k), f"{where}: output lost {k}-anonymity"
    assert dataset_refines(after, before).holds, f"{where}: output escaped the input"


# -- initial generalizations ---------------------------------------------------


def initial_anonymize(x: Dataset, hierarchies: tuple[Hierarchy, ...], cfg: AnonymizerConfig) -> GeneralizedDataset:
    """A k-anonymous, hierarchy-respecting starting point.

    "top" puts every cell at the root. The partition strategies group rows
    into blocks of at least k (lexicographically sorted neighbours for
    "lca", a seeded shuffle for "random") and give each block its per-dim
    finest common cover.
    """
    n = x.n_rows
    if n == 0:
        return GeneralizedDataset.all_root(hierarchies, 0)
    if n < cfg.k:
        raise ValueError(f"cannot {cfg.k}-anonymize {n} rows")
    if cfg.strategy == "top":
        return GeneralizedDataset.all_root(hierarchies, n)

    if cfg.strategy == "lca":
        order = np.lexsort(tuple(x.values[:, d] for d in reversed(range(x.dims))))
    else:
        order = np.arange(n)
        np.random.default_rng(cfg.seed).shuffle(order)
    block_of_row = np.empty(n, dtype=np.int64)
    n_blocks = n // cfg.k
    for pos, row in enumerate(order):
        block_of_row[row] = min(pos // cfg.k, n_blocks - 1)

    space = encoded_space(tuple(hierarchies))
    xv = space.encode_x(x)
    cnode = np.full((n, x.dims), -1, dtype=np.int32)
    cval = np.zeros((n, x.dims), dtype=np.float64)
    K._lca_blocks(space.pack(), xv, block_of_row, space.root_g, cnode, cval)
    out = space.decode_cells(cnode, cval)
    if DEBUG_CHECKS:
        _check_triple(x, out, cfg.k, "initial_anonymize")
    return out


# -- public flush operations ----------------------------------------------------


def single_flush(x: Dataset, y: GeneralizedDataset, k: int, n: int) -> GeneralizedDataset:
    """Row n adopts the first existing strictly finer record containing its
    secret row, unless its class is already at the anonymity floor."""
    _check_triple(x, y, k, "single_flush")
    if not 0 <= n < y.n_rows:
        raise IndexError(f"row {n} out of range")
    st = _State(x, y)
    if not K._single_attempt(st.henc, st.xv, st.cnode, st.cval, st.class_id, st.class_size, k, n):
        return y
    out = st.result()
    _post_debug(x, y, out, k, "single_flush")
    return out


def group_flush(x: Dataset, y: GeneralizedDataset, k: int, n: int) -> GeneralizedDataset:
    """Apply the first safe split of row n's class: move r rows whose secret
    value fits a child one level down, keeping both sides at size >= k."""
    _check_triple(x, y, k, "group_flush")
    if not 0 <= n < y.n_rows:
        raise IndexError(f"row {n} out of range")
    st = _State(x, y)
    if not K._group_attempt(st.henc, st.xv, st.cnode, st.cval, st.class_id, st.class_size, k, n, st.next_id, False):
        return y
    out = st.result()
    _post_debug(x, y, out, k, "group_flush")
    return out


def simul_flush(x: Dataset, y: GeneralizedDataset, k: int, class_record: GeneralizedRecord) -> GeneralizedDataset:
    """Try to drain the class at ``class_record`` in one shot, padding it
    with k wildcard phantom rows so the class cannot block itself; keep the
    result only if no real row remains there and the output stays valid."""
    _check_triple(x, y, k, "simul_flush")
    rep = _find_record_row(y, class_record)
    if rep is None:
        raise ValueError("class_record is not present in the dataset")
    st = _State(x, y)
    if not K._simul_attempt(st.henc, st.xv, st.cnode, st.cval, st.class_id, st.class_size, k, rep, st.next_id):
        return y
    out = st.result()
    _post_debug(x, y, out, k, "simul_flush")
    return out


def _find_record_row(y: GeneralizedDataset, rec: GeneralizedRecord) -> int | None:
    probe = GeneralizedDataset.from_cells(y.hierarchies, [rec.cells])
    for n in range(y.n_rows):
        if all(y._cell_equal(n, d, probe, 0) for d in range(y.dims)):
            return n
    return None


def minimize(x: Dataset, y: GeneralizedDataset, k: int) -> GeneralizedDataset:
    """Run all three flush passes to a joint fixpoint.

    Deterministic: rows ascending, dimensions ascending, children in
    hierarchy order, class records by lowest member row. The result admits
    no catalog move; global minimality is adjudicated separately by
    `brute_force_is_minimal` on small instances.
    """
    _check_triple(x, y, k, "minimize")
    if y.n_rows == 0:
        return y
    st = _State(x, y)
    K._minimize(st.henc, st.xv, st.cnode, st.cval, st.class_id, st.class_size, k, st.next_id, st.k_budget)
    out = st.result()
    _post_debug(x, y, out, k, "minimize")
    return out


def minimize_move_count(x: Dataset, y: GeneralizedDataset, k: int) -> tuple[GeneralizedDataset, int]:
    """minimize plus the number of applied moves (for the termination bound)."""
    _check_triple(x, y, k, "minimize")
    if y.n_rows == 0:
        return y, 0
    st = _State(x, y)
    moves = K._minimize(st.henc, st.xv, st.cnode, st.cval, st.class_id, st.class_size, k, st.next_id, st.k_budget)
    return st.result(), int(moves)


def anonymize(x: Dataset, hierarchies: tuple[Hierarchy, ...], cfg: AnonymizerConfig) -> GeneralizedDataset:
    """initial_anonymize followed by minimize."""
    return minimize(x, initial_anonymize(x, hierarchies, cfg), cfg.k)


# -- brute-force minimality oracle ----------------------------------------------


def _cell_candidates(y: GeneralizedDataset, n: int, d: int, xval: float) -> list[GeneralizedValue]:
    """The chain of cells c with c ⊆ y[n,d] and xval ∈ c: the cell itself,
    each descendant node on xval's path, and exact(xval)."""
    h = y.hierarchies[d]
    cell = y.cell(n, d)
    if cell.is_exact:
        return [cell]
    out = [cell]
    cur = cell.node
    while True:
        nxt = None
        for c in h.children(cur):
            if h.nodes[c].set.contains(xval):
                nxt = c
                break
        if nxt is None:
            break
        cur = nxt
        gv = GeneralizedValue.at_node(h, cur)
        if not gv.is_exact:
            out.append(gv)
    out.append(GeneralizedValue.exact(xval))
    return out


def _record_key(cells) -> tuple:
    return tuple((c.node, c.value) for c in cells)


def brute_force_is_minimal(x: Dataset, y: GeneralizedDataset, k: int, guard: int = 10**7) -> bool:
    """Exhaustively search for a strict refinement of y that still
    generalizes x, respects the hierarchies, and is k-anonymous.

    Independent of the flush machinery: per-cell candidate chains are
    enumerated straight from the hierarchies and searched depth-first with a
    dead-record prune. Raises if the instance exceeds ``guard`` candidates.
    """
    _check_triple(x, y, k, "brute_force_is_minimal")
    n_rows = x.n_rows
    if n_rows == 0:
        return True
    row_cands: list[list[tuple]] = []
    y_keys: list[tuple] = []
    space = 1
    for n in range(n_rows):
        chains = [_cell_candidates(y, n, d, x.values[n, d]) for d in range(x.dims)]
        cands = [_record_key(cells) for cells in itertools.product(*chains)]
        space *= len(cands)
        if space > guard:
            raise ValueError(f"minimality search space exceeds {guard} candidates")
        row_cands.append(cands)
        y_keys.append(_record_key([y.cell(n, d) for d in range(x.dims)]))

    last_support: dict[tuple, int] = {}
    for n in range(n_rows):
        for rec in row_cands[n]:
            last_support[rec] = n

    counts: dict[tuple, int] = {}

    def dfs(n: int, any_strict: bool) -> bool:
        if n == n_rows:
            return any_strict and all(c >= k for c in counts.values())
        for rec in row_cands[n]:
            counts[rec] = counts.get(rec, 0) + 1
            ok = True
            for r, c in counts.items():
                if 0 < c < k and last_support[r] <= n:
                    ok = False
                    break
            if ok and dfs(n + 1, any_strict or rec != y_keys[n]):
                return True
            counts[rec] -= 1
            if counts[rec] == 0:
                del counts[rec]
        return False

    return not dfs(0, False)
