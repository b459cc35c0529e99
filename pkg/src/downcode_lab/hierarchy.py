"""Attribute domains, value sets, and generalization hierarchies.

A hierarchy is a rooted tree of nested value sets over one attribute domain.
Every level of the tree (completed by copying childless nodes downward)
partitions the domain, so two node sets are either nested or disjoint.
Exact values act as implicit leaves: a cell referring to a singleton-set
node is always canonicalized to its exact value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence


class HierarchyError(ValueError):
    """Raised when a hierarchy violates the tree/partition invariants."""


@dataclass(frozen=True)
class AttributeDomain:
    """Either a half-open real interval [lo, hi) or an ordered finite set."""

    kind: str  # "real-interval" | "finite"
    lo: float = 0.0
    hi: float = 0.0
    values: tuple[float, ...] = ()

    @staticmethod
    def real(lo: float, hi: float) -> "AttributeDomain":
        if not lo < hi:
            raise HierarchyError(f"real-interval domain needs lo < hi, got [{lo}, {hi})")
        return AttributeDomain("real-interval", lo=float(lo), hi=float(hi))

    @staticmethod
    def finite(values: Iterable[float]) -> "AttributeDomain":
        vals = tuple(float(v) for v in values)
        if not vals:
            raise HierarchyError("finite domain needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise HierarchyError("finite domain values must be strictly increasing")
        return AttributeDomain("finite", values=vals)

    def contains(self, v: float) -> bool:
        if self.kind == "real-interval":
            return self.lo <= v < self.hi
        return v in self.values

    def full_set(self) -> "ValueSet":
        if self.kind == "real-interval":
            return ValueSet.from_intervals([(self.lo, self.hi)])
        return ValueSet.from_values(self.values)


def _normalize_intervals(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    ivls = sorted((float(a), float(b)) for a, b in intervals)
    for a, b in ivls:
        if not a < b:
            raise HierarchyError(f"empty or inverted interval [{a}, {b})")
    merged: list[tuple[float, float]] = []
    for a, b in ivls:
        if merged and a < merged[-1][1]:
            raise HierarchyError(f"overlapping intervals at {a}")
        if merged and a == merged[-1][1]:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return tuple(merged)


@dataclass(frozen=True)
class ValueSet:
    """A subset of an attribute domain.

    Real domains use a sorted union of disjoint half-open intervals
    (adjacent pieces are merged, so the representation is canonical).
    Finite domains use a plain value set.
    """

    intervals: tuple[tuple[float, float], ...] | None = None
    values: frozenset[float] | None = None

    @staticmethod
    def from_intervals(intervals: Iterable[tuple[float, float]]) -> "ValueSet":
        return ValueSet(intervals=_normalize_intervals(intervals))

    @staticmethod
    def from_values(values: Iterable[float]) -> "ValueSet":
        vals = frozenset(float(v) for v in values)
        if not vals:
            raise HierarchyError("empty value set")
        return ValueSet(values=vals)

    @property
    def is_interval_set(self) -> bool:
        return self.intervals is not None

    def contains(self, v: float) -> bool:
        if self.values is not None:
            return v in self.values
        return any(a <= v < b for a, b in self.intervals)

    def issubset(self, other: "ValueSet") -> bool:
        if self.values is not None:
            return self.values <= other.values
        # every piece of self must fit inside one piece of other
        return all(
            any(oa <= a and b <= ob for oa, ob in other.intervals)
            for a, b in self.intervals
        )

    def intersects(self, other: "ValueSet") -> bool:
        if self.values is not None:
            return bool(self.values & other.values)
        return any(
            max(a, oa) < min(b, ob)
            for a, b in self.intervals
            for oa, ob in other.intervals
        )

    def singleton_value(self) -> float | None:
        """The single member if this set is a finite singleton, else None."""
        if self.values is not None and len(self.values) == 1:
            return next(iter(self.values))
        return None

    @staticmethod
    def union_of(sets: Sequence["ValueSet"]) -> "ValueSet":
        if sets[0].values is not None:
            out: set[float] = set()
            for s in sets:
                out |= s.values
            return ValueSet.from_values(out)
        pieces: list[tuple[float, float]] = []
        for s in sets:
            pieces.extend(s.intervals)
        return ValueSet.from_intervals(pieces)


@dataclass(frozen=True)
class GeneralizedValue:
    """One cell of a generalized record: either an exact scalar or a node.

    ``node`` is a hierarchy node id, or None for exact cells. Construction
    through :meth:`at_node` canonicalizes singleton-set nodes to exact
    values, so comparing cells by representation is sound.
    """

    node: str | None
    value: float | None = None

    @staticmethod
    def exact(v: float) -> "GeneralizedValue":
        return GeneralizedValue(node=None, value=float(v))

    @staticmethod
    def at_node(h: "Hierarchy", node_id: str) -> "GeneralizedValue":
        sv = h.node(node_id).set.singleton_value()
        if sv is not None:
            return GeneralizedValue.exact(sv)
        return GeneralizedValue(node=node_id)

    @property
    def is_exact(self) -> bool:
        return self.node is None


@dataclass(frozen=True)
class HierarchyNode:
    id: str
    parent: str | None
    set: ValueSet


class Hierarchy:
    """A validated generalization hierarchy over one attribute domain.

    Children of every internal node partition the node's set; by induction
    every completed level partitions the domain, so any two node sets are
    nested or disjoint and subset tests reduce to ancestry tests.
    """

    def __init__(self, domain: AttributeDomain, nodes: Sequence[HierarchyNode], name: str = "h"):
        self.domain = domain
        self.name = name
        self.nodes: dict[str, HierarchyNode] = {}
        self._children: dict[str, list[str]] = {}
        roots = []
        for nd in nodes:
            if nd.id in self.nodes:
                raise HierarchyError(f"duplicate node id {nd.id!r}")
            self.nodes[nd.id] = nd
            self._children.setdefault(nd.id, [])
            if nd.parent is None:
                roots.append(nd.id)
        for nd in nodes:
            if nd.parent is not None:
                if nd.parent not in self.nodes:
                    raise HierarchyError(f"node {nd.id!r} has unknown parent {nd.parent!r}")
                self._children[nd.parent].append(nd.id)
        if len(roots) != 1:
            raise HierarchyError(f"hierarchy must have exactly one root, found {roots}")
        self.root = roots[0]
        self.node_ids: tuple[str, ...] = tuple(nd.id for nd in nodes)
        self._index = {nid: i for i, nid in enumerate(self.node_ids)}
        self._depth: dict[str, int] = {}
        self._validate()

    # -- structure ---------------------------------------------------------

    def node(self, node_id: str) -> HierarchyNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise HierarchyError(f"unknown node id {node_id!r}") from None

    def children(self, node_id: str) -> list[str]:
        self.node(node_id)
        return list(self._children[node_id])

    def depth(self, node_id: str) -> int:
        return self._depth[self.node(node_id).id]

    def index(self, node_id: str) -> int:
        return self._index[self.node(node_id).id]

    def max_depth(self) -> int:
        return max(self._depth.values())

    def is_ancestor_or_self(self, outer: str, inner: str) -> bool:
        """True iff node ``inner``'s set is contained in node ``outer``'s."""
        cur: str | None = self.node(inner).id
        target = self.node(outer).id
        while cur is not None:
            if cur == target:
                return True
            cur = self.nodes[cur].parent
        return False

    def _validate(self) -> None:
        # reachability + depth (also catches parent cycles)
        stack = [(self.root, 0)]
        while stack:
            nid, d = stack.pop()
            if nid in self._depth:
                raise HierarchyError(f"cycle or duplicate reachability at node {nid!r}")
            self._depth[nid] = d
            for c in self._children[nid]:
                stack.append((c, d + 1))
        unreachable = set(self.nodes) - set(self._depth)
        if unreachable:
            raise HierarchyError(f"nodes not reachable from root: {sorted(unreachable)}")

        root_set = self.nodes[self.root].set
        full = self.domain.full_set()
        if not (root_set.issubset(full) and full.issubset(root_set)):
            raise HierarchyError("root set must equal the full attribute domain")

        seen_sets: dict[tuple, str] = {}
        for nid, nd in self.nodes.items():
            key = (nd.set.intervals, nd.set.values)
            if key in seen_sets:
                raise HierarchyError(f"duplicate-set nodes {seen_sets[key]!r} and {nid!r}")
            seen_sets[key] = nid

        for nid in self.nodes:
            kids = self._children[nid]
            if not kids:
                continue
            depth = self._depth[nid] + 1
            kid_sets = [self.nodes[c].set for c in kids]
            for i in range(len(kids)):
                if not kid_sets[i].issubset(self.nodes[nid].set):
                    raise HierarchyError(
                        f"partition violation at depth {depth}: node {kids[i]!r} "
                        f"escapes its parent {nid!r}"
                    )
                for j in range(i + 1, len(kids)):
                    if kid_sets[i].intersects(kid_sets[j]):
                        raise HierarchyError(
                            f"partition violation at depth {depth}: nodes "
                            f"{kids[i]!r} and {kids[j]!r} overlap"
                        )
            union = ValueSet.union_of(kid_sets)
            parent_set = self.nodes[nid].set
            if not (union.issubset(parent_set) and parent_set.issubset(union)):
                raise HierarchyError(
                    f"partition violation at depth {depth}: children of {nid!r} "
                    f"do not cover it"
                )

    # -- cell helpers ------------------------------------------------------

    def cell_intersects(self, a: GeneralizedValue, b: GeneralizedValue) -> bool:
        if a.is_exact and b.is_exact:
            return a.value == b.value
        if a.is_exact:
            return self.node(b.node).set.contains(a.value)
        if b.is_exact:
            return self.node(a.node).set.contains(b.value)
        return self.node(a.node).set.intersects(self.node(b.node).set)

    def cell_contains(self, cell: GeneralizedValue, v: float) -> bool:
        if cell.is_exact:
            return v == cell.value
        return self.node(cell.node).set.contains(v)

    def cell_subset(self, inner: GeneralizedValue, outer: GeneralizedValue) -> bool:
        """Set containment inner ⊆ outer for two cells of this hierarchy."""
        if inner.is_exact and outer.is_exact:
            return inner.value == outer.value
        if inner.is_exact:
            return self.node(outer.node).set.contains(inner.value)
        if outer.is_exact:
            # canonical node cells are never singletons
            return self.node(inner.node).set.singleton_value() == outer.value
        return self.is_ancestor_or_self(outer.node, inner.node)


# -- module-level operations ------------------------------------------------


def node_contains(h: Hierarchy, node_id: str, v: float) -> bool:
    """True iff ``v`` lies in the value set of ``node_id``."""
    if not h.domain.contains(v):
        raise HierarchyError(f"value {v!r} outside attribute domain")
    return h.node(node_id).set.contains(v)


def least_common_node(h: Hierarchy, values: Iterable[float]) -> GeneralizedValue:
    """Finest hierarchy cover of ``values``: exact for one value, else the
    deepest node containing all of them."""
    vals = sorted(set(float(v) for v in values))
    if not vals:
        raise HierarchyError("least_common_node needs at least one value")
    for v in vals:
        if not h.domain.contains(v):
            raise HierarchyError(f"value {v!r} outside attribute domain")
    if len(vals) == 1:
        return GeneralizedValue.exact(vals[0])
    cur = h.root
    if not all(h.nodes[cur].set.contains(v) for v in vals):
        raise HierarchyError("malformed hierarchy: root does not cover the values")
    while True:
        for c in h.children(cur):
            if all(h.nodes[c].set.contains(v) for v in vals):
                cur = c
                break
        else:
            return GeneralizedValue.at_node(h, cur)


# -- JSON round-trip ---------------------------------------------------------


def _set_to_json(s: ValueSet) -> dict:
    if s.values is not None:
        return {"values": sorted(s.values)}
    return {"intervals": [[a, b] for a, b in s.intervals]}


def _set_from_json(obj: dict, domain: AttributeDomain) -> ValueSet:
    if "values" in obj:
        return ValueSet.from_values(obj["values"])
    if "intervals" in obj:
        if domain.kind == "finite":
            members = [
                v
                for v in domain.values
                if any(a <= v < b for a, b in obj["intervals"])
            ]
            return ValueSet.from_values(members)
        return ValueSet.from_intervals([tuple(p) for p in obj["intervals"]])
    raise HierarchyError("node set must have 'intervals' or 'values'")


def hierarchy_to_json(h: Hierarchy) -> dict:
    if h.domain.kind == "real-interval":
        dom = {"kind": "real-interval", "lo": h.domain.lo, "hi": h.domain.hi}
    else:
        dom = {"kind": "finite", "values": list(h.domain.values)}
    return {
        "name": h.name,
        "domain": dom,
        "nodes": [
            {"id": nid, "parent": h.nodes[nid].parent, "set": _set_to_json(h.nodes[nid].set)}
            for nid in h.node_ids
        ],
    }


def hierarchy_from_json(obj: dict) -> Hierarchy:
    dom = obj["domain"]
    if dom["kind"] == "real-interval":
        domain = AttributeDomain.real(dom["lo"], dom["hi"])
    elif dom["kind"] == "finite":
        domain = AttributeDomain.finite(dom["values"])
    else:
        raise HierarchyError(f"unknown domain kind {dom['kind']!r}")
    nodes = [
        HierarchyNode(n["id"], n.get("parent"), _set_from_json(n["set"], domain))
        for n in obj["nodes"]
    ]
    return Hierarchy(domain, nodes, name=obj.get("name", "h"))


def load_hierarchy(path: str) -> Hierarchy:
    with open(path) as f:
        return hierarchy_from_json(json.load(f))


def save_hierarchy(h: Hierarchy, path: str) -> None:
    with open(path, "w") as f:
        json.dump(hierarchy_to_json(h), f, indent=1, sort_keys=True)
        f.write("\n")
