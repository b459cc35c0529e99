"""Array encoding of hierarchies and datasets for the flush kernels.

Finite domains are mapped to rank space (value -> index in the ordered
domain), so every node's value set becomes a union of half-open intervals
and membership tests are uniform across domain kinds. Node ids are
concatenated across dimensions into one global index space.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, GeneralizedDataset
from .hierarchy import Hierarchy, HierarchyError


class EncodedSpace:
    """Kernel-facing arrays for one tuple of per-dimension hierarchies."""

    def __init__(self, hierarchies: tuple[Hierarchy, ...]):
        self.hierarchies = hierarchies
        dims = len(hierarchies)
        self.dim_off = np.zeros(dims + 1, dtype=np.int32)
        for d, h in enumerate(hierarchies):
            self.dim_off[d + 1] = self.dim_off[d] + len(h.node_ids)
        total = int(self.dim_off[-1])

        ivl_ptr = np.zeros(total + 1, dtype=np.int32)
        ivl_lo: list[float] = []
        ivl_hi: list[float] = []
        child_ptr = np.zeros(total + 1, dtype=np.int32)
        child_idx: list[int] = []
        tin = np.zeros(total, dtype=np.int32)
        tout = np.zeros(total, dtype=np.int32)
        is_sng = np.zeros(total, dtype=np.bool_)
        sng_val = np.zeros(total, dtype=np.float64)
        self.root_g = np.zeros(dims, dtype=np.int32)
        self.max_depth = np.zeros(dims, dtype=np.int32)

        for d, h in enumerate(hierarchies):
            off = int(self.dim_off[d])
            for i, nid in enumerate(h.node_ids):
                g = off + i
                nd = h.nodes[nid]
                for lo, hi in self._rank_intervals(d, nd.set):
                    ivl_lo.append(lo)
                    ivl_hi.append(hi)
                ivl_ptr[g + 1] = len(ivl_lo)
                kids = h.children(nid)
                child_idx.extend(off + h.index(c) for c in kids)
                child_ptr[g + 1] = len(child_idx)
                sv = nd.set.singleton_value()
                if sv is not None:
                    is_sng[g] = True
                    sng_val[g] = self.to_rank(d, sv)
            self.root_g[d] = off + h.index(h.root)
            self.max_depth[d] = h.max_depth()
            # Euler tour for ancestry tests, child order preserved
            clock = 0
            stack = [(int(self.root_g[d]), False)]
            while stack:
                g, closing = stack.pop()
                if closing:
                    tout[g] = clock
                    continue
                tin[g] = clock
                clock += 1
                stack.append((g, True))
                for c in reversed(range(child_ptr[g], child_ptr[g + 1])):
                    stack.append((int(child_idx[c]), False))

        self.ivl_ptr = ivl_ptr
        self.ivl_lo = np.array(ivl_lo, dtype=np.float64)
        self.ivl_hi = np.array(ivl_hi, dtype=np.float64)
        self.child_ptr = child_ptr
        self.child_idx = np.array(child_idx, dtype=np.int32)
        self.tin = tin
        self.tout = tout
        self.is_sng = is_sng
        self.sng_val = sng_val

    def _rank_intervals(self, d: int, vset) -> list[tuple[float, float]]:
        if vset.intervals is not None:
            return [(float(a), float(b)) for a, b in vset.intervals]
        ranks = sorted(self.to_rank(d, v) for v in vset.values)
        runs: list[tuple[float, float]] = []
        for r in ranks:
            if runs and runs[-1][1] == r:
                runs[-1] = (runs[-1][0], r + 1.0)
            else:
                runs.append((r, r + 1.0))
        return runs

    # -- value transforms ---------------------------------------------------

    def to_rank(self, d: int, v: float) -> float:
        dom = self.hierarchies[d].domain
        if dom.kind == "real-interval":
            return float(v)
        i = int(np.searchsorted(dom.values, v))
        if i >= len(dom.values) or dom.values[i] != v:
            raise HierarchyError(f"value {v!r} outside finite domain (dimension {d})")
        return float(i)

    def from_rank(self, d: int, r: float) -> float:
        dom = self.hierarchies[d].domain
        if dom.kind == "real-interval":
            return float(r)
        return float(dom.values[int(r)])

    def pack(self) -> tuple:
        return (
            self.ivl_ptr,
            self.ivl_lo,
            self.ivl_hi,
            self.child_ptr,
            self.child_idx,
            self.tin,
            self.tout,
            self.is_sng,
            self.sng_val,
        )

    # -- dataset transforms --------------------------------------------------

    def encode_x(self, x: Dataset) -> np.ndarray:
        out = np.empty_like(x.values)
        for d in range(x.dims):
            if self.hierarchies[d].domain.kind == "real-interval":
                dom = self.hierarchies[d].domain
                col = x.values[:, d]
                if ((col < dom.lo) | (col >= dom.hi)).any():
                    raise HierarchyError(f"dataset value outside domain (dimension {d})")
                out[:, d] = col
            else:
                out[:, d] = [self.to_rank(d, v) for v in x.values[:, d]]
        return out

    def encode_cells(self, y: GeneralizedDataset) -> tuple[np.ndarray, np.ndarray]:
        gnode = y.cell_node.astype(np.int32, copy=True)
        gval = y.cell_val.astype(np.float64, copy=True)
        for d in range(y.dims):
            col = gnode[:, d]
            mask = col >= 0
            col[mask] += self.dim_off[d]
            if self.hierarchies[d].domain.kind == "finite":
                ex = ~mask
                gval[ex, d] = [self.to_rank(d, v) for v in gval[ex, d]]
        return gnode, gval

    def decode_cells(self, gnode: np.ndarray, gval: np.ndarray) -> GeneralizedDataset:
        node = gnode.astype(np.int32, copy=True)
        val = gval.astype(np.float64, copy=True)
        for d in range(node.shape[1]):
            col = node[:, d]
            mask = col >= 0
            col[mask] -= self.dim_off[d]
            if self.hierarchies[d].domain.kind == "finite":
                ex = ~mask
                val[ex, d] = [self.from_rank(d, r) for r in val[ex, d]]
        return GeneralizedDataset(self.hierarchies, node, val)


_SPACE_CACHE: dict[tuple[int, ...], EncodedSpace] = {}


def encoded_space(hierarchies: tuple[Hierarchy, ...]) -> EncodedSpace:
    key = tuple(id(h) for h in hierarchies)
    sp = _SPACE_CACHE.get(key)
    if sp is None:
        sp = EncodedSpace(hierarchies)
        _SPACE_CACHE[key] = sp
    return sp


def initial_classes(gnode: np.ndarray, gval: np.ndarray, capacity: int):
    """Group rows by identical records; returns (class_id, class_size, next_id)."""
    n = gnode.shape[0]
    class_id = np.empty(n, dtype=np.int32)
    groups: dict[tuple, int] = {}
    for i in range(n):
        key = tuple(
            (int(gnode[i, d]), float(gval[i, d]) if gnode[i, d] < 0 else 0.0)
            for d in range(gnode.shape[1])
        )
        class_id[i] = groups.setdefault(key, len(groups))
    class_size = np.zeros(capacity, dtype=np.int32)
    for i in range(n):
        class_size[class_id[i]] += 1
    next_id = np.array([len(groups)], dtype=np.int64)
    return class_id, class_size, next_id


def class_capacity(space: EncodedSpace, n_rows: int) -> int:
    per_row = int(np.sum(space.max_depth + 1))
    return n_rows * (per_row + 1) + 16
