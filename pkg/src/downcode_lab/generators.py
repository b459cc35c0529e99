"""The two synthetic data distributions and their matched hierarchies.

Clustered: rows are i.i.d. noisy copies of one of T evenly spaced cluster
centers; per row the noise scale is small with probability 1 - 1/k and big
with probability 1/k. The hierarchy tiles the line into one interval per
cluster, each split into an inner band (holding about half the mass of the
big noise, and essentially all of the small noise) and the two-piece outer
remainder.

Prefix: values live on the finite domain {0..T}; each row draws a latent
spike value t and every coordinate is t with probability 1/(2k), else 0.
The hierarchy is the chain [0,T] ⊃ [0,T-1] ⊃ ... ⊃ [0,1] ⊃ {0}, each
interval also owning the singleton child {t}.

Provenance (latent cluster/spike per row) is returned alongside the data
for evaluation only; attack code never sees it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .dataset import Dataset
from .hierarchy import AttributeDomain, GeneralizedValue, Hierarchy, HierarchyNode, ValueSet

# sigma/half-width ratio at which a centered normal puts half its mass
# inside the band: 1 / (sqrt(2) * erfinv(1/2))
HALF_MASS_SCALE = 1.0 / NormalDist().inv_cdf(0.75)


@dataclass(frozen=True)
class ClusteredParams:
    k: int
    n_rows: int
    dims: int
    n_clusters: int
    centers: tuple[float, ...]
    outer_half_width: float
    inner_half_width: float
    sigma_small: float
    sigma_big: float
    p_big: float
    half_mass_scale: float = HALF_MASS_SCALE

    def __post_init__(self):
        if self.k < 2 or self.n_rows <= 0 or self.dims <= 0:
            raise ValueError("need k >= 2 and positive n_rows, dims")
        if self.n_clusters * self.k != self.n_rows:
            raise ValueError("n_clusters must equal n_rows / k exactly")
        if len(self.centers) != self.n_clusters:
            raise ValueError("one center per cluster required")
        if not self.inner_half_width < self.outer_half_width:
            raise ValueError("inner band must be narrower than the cluster interval")
        gaps = np.diff(self.centers)
        if self.n_clusters > 1 and not np.allclose(gaps, 2 * self.outer_half_width):
            raise ValueError("cluster intervals must tile: centers spaced by twice the half-width")
        if not 0 < self.p_big < 1:
            raise ValueError("p_big must be a probability")

    @staticmethod
    def fixed(k: int = 10, n_rows: int = 100, dims: int = 64) -> "ClusteredParams":
        """Concrete desk instantiation: centers 130t, interval half-width 65,
        inner half-width 6.6, noise sigmas 1 and 10, big with probability 1/k."""
        t = n_rows // k
        return ClusteredParams(
            k=k,
            n_rows=n_rows,
            dims=dims,
            n_clusters=t,
            centers=tuple(130.0 * (i + 1) for i in range(t)),
            outer_half_width=65.0,
            inner_half_width=6.6,
            sigma_small=1.0,
            sigma_big=10.0,
            p_big=1.0 / k,
        )

    @staticmethod
    def scaling(k: int, n_rows: int, dims: int) -> "ClusteredParams":
        """Size-driven instantiation: inner half-width log N, big noise
        scaled so exactly half its mass falls in the inner band, intervals
        wide enough that clusters essentially never overlap."""
        t = n_rows // k
        ln = math.log(n_rows)
        outer = HALF_MASS_SCALE * ln * ln
        return ClusteredParams(
            k=k,
            n_rows=n_rows,
            dims=dims,
            n_clusters=t,
            centers=tuple(2.0 * (i + 1) * outer for i in range(t)),
            outer_half_width=outer,
            inner_half_width=ln,
            sigma_small=1.0,
            sigma_big=HALF_MASS_SCALE * ln,
            p_big=1.0 / k,
        )

    def interval_start(self, t: int) -> float:
        """Left endpoint of cluster t's interval (t is 1-based)."""
        return self.centers[t - 1] - self.outer_half_width


@dataclass(frozen=True)
class PrefixParams:
    k: int
    n_rows: int
    dims: int
    alpha: float
    t_max: int = 0
    spike_prob: float = field(default=0.0)

    def __post_init__(self):
        if self.k < 2 or self.n_rows <= 0 or self.dims <= 0:
            raise ValueError("need k >= 2 and positive n_rows, dims")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.t_max == 0:
            object.__setattr__(self, "t_max", math.ceil(self.n_rows**2 / self.alpha))
        if self.t_max < self.n_rows**2:
            raise ValueError("value range must be at least n_rows^2")
        if self.spike_prob == 0.0:
            object.__setattr__(self, "spike_prob", 1.0 / (2 * self.k))
        if not math.isclose(self.spike_prob, 1.0 / (2 * self.k)):
            raise ValueError("spike probability must be 1/(2k)")


@dataclass(frozen=True)
class SampleProvenance:
    """Latent per-row draw values; ground truth for evaluation only."""

    kind: str  # "clustered" | "prefix"
    cluster: tuple[int, ...]  # latent cluster / spike value per row (1-based)
    noise: tuple[str, ...] = ()  # "small" | "big" per row (clustered only)

    def __post_init__(self):
        if self.kind not in ("clustered", "prefix"):
            raise ValueError(f"unknown provenance kind {self.kind!r}")
        if self.kind == "clustered" and len(self.noise) != len(self.cluster):
            raise ValueError("clustered provenance needs one noise tag per row")


# -- hierarchies -----------------------------------------------------------------


def build_clustered_hierarchy(p: ClusteredParams) -> Hierarchy:
    lo = p.interval_start(1)
    hi = p.interval_start(p.n_clusters) + 2 * p.outer_half_width
    nodes = [HierarchyNode("root", None, ValueSet.from_intervals([(lo, hi)]))]
    for t in range(1, p.n_clusters + 1):
        a = p.interval_start(t)
        a_next = a + 2 * p.outer_half_width
        b = p.centers[t - 1] - p.inner_half_width
        d = p.centers[t - 1] + p.inner_half_width
        nodes.append(HierarchyNode(f"c{t}", "root", ValueSet.from_intervals([(a, a_next)])))
        nodes.append(HierarchyNode(f"c{t}.inner", f"c{t}", ValueSet.from_intervals([(b, d)])))
        nodes.append(HierarchyNode(f"c{t}.outer", f"c{t}", ValueSet.from_intervals([(a, b), (d, a_next)])))
    return Hierarchy(AttributeDomain.real(lo, hi), nodes, name=f"clustered{p.n_clusters}")


def build_prefix_hierarchy(t_max: int) -> Hierarchy:
    """Chain of prefixes [0,t] with singleton children {t} over {0..t_max}."""
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    domain = AttributeDomain.finite(range(t_max + 1))
    nodes = [HierarchyNode(f"[0,{t_max}]", None, ValueSet.from_values(range(t_max + 1)))]
    for t in range(t_max - 1, 0, -1):
        nodes.append(HierarchyNode(f"[0,{t}]", f"[0,{t + 1}]", ValueSet.from_values(range(t + 1))))
    nodes.append(HierarchyNode("{0}", "[0,1]", ValueSet.from_values([0])))
    for t in range(1, t_max + 1):
        nodes.append(HierarchyNode(f"{{{t}}}", f"[0,{t}]", ValueSet.from_values([t])))
    return Hierarchy(domain, nodes, name=f"prefix{t_max}")


def prefix_interval_cell(h: Hierarchy, t: int) -> GeneralizedValue:
    """The cell for [0,t] in a prefix hierarchy (exact 0 when t == 0)."""
    if t == 0:
        return GeneralizedValue.exact(0.0)
    return GeneralizedValue.at_node(h, f"[0,{t}]")


def prefix_upper_end(h: Hierarchy, cell: GeneralizedValue) -> int:
    """Upper endpoint classifying a prefix cell: node [0,t] -> t, exact v -> v."""
    if cell.is_exact:
        return int(cell.value)
    name = cell.node
    return int(name[name.index(",") + 1 : -1])


# -- sampling --------------------------------------------------------------------


def _draw_clustered(p: ClusteredParams, rng: np.random.Generator, count: int):
    big = rng.random(count) < p.p_big
    t = rng.integers(1, p.n_clusters + 1, size=count)
    sigma = np.where(big, p.sigma_big, p.sigma_small)
    centers = np.asarray(p.centers)[t - 1]
    values = centers[:, None] + sigma[:, None] * rng.standard_normal((count, p.dims))
    lo = p.interval_start(1)
    hi = p.interval_start(p.n_clusters) + 2 * p.outer_half_width
    # out-of-domain coordinates (vanishing probability at sane parameters)
    # are redrawn so hierarchy membership is unconditional
    while True:
        bad = (values < lo) | (values >= hi)
        if not bad.any():
            break
        rows, cols = np.nonzero(bad)
        values[rows, cols] = centers[rows] + sigma[rows] * rng.standard_normal(rows.shape[0])
    return values, t, big


def sample_clustered(p: ClusteredParams, seed) -> tuple[Dataset, SampleProvenance]:
    values, t, big = _draw_clustered(p, np.random.default_rng(seed), p.n_rows)
    prov = SampleProvenance(
        "clustered",
        cluster=tuple(int(v) for v in t),
        noise=tuple("big" if b else "small" for b in big),
    )
    return Dataset(values), prov


def sample_prefix(p: PrefixParams, seed) -> tuple[Dataset, SampleProvenance]:
    rng = np.random.default_rng(seed)
    t = rng.integers(1, p.t_max + 1, size=p.n_rows)
    spikes = rng.random((p.n_rows, p.dims)) < p.spike_prob
    values = np.where(spikes, t[:, None], 0).astype(np.float64)
    return Dataset(values), SampleProvenance("prefix", cluster=tuple(int(v) for v in t))


def is_collision_free(prov: SampleProvenance) -> bool:
    """All latent spike values distinct (prefix provenance only)."""
    if prov.kind != "prefix":
        raise ValueError("collision-freeness is a prefix-sample property")
    return len(set(prov.cluster)) == len(prov.cluster)


# -- diagnostics -------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterDiagnostics:
    """Per-cluster membership counts from actual hierarchy containment."""

    sizes: tuple[int, ...]
    big_counts: tuple[int, ...]  # members with >= 1 coordinate in an outer band
    is_target: tuple[bool, ...]  # exactly k members, exactly one of them big
    all_clustered: bool  # every row fell inside a single cluster interval


def classify_clusters(x: Dataset, prov: SampleProvenance, p: ClusteredParams) -> ClusterDiagnostics:
    if prov.kind != "clustered":
        raise ValueError("classify_clusters needs clustered provenance")
    starts = np.array([p.interval_start(t) for t in range(1, p.n_clusters + 1)])
    width = 2 * p.outer_half_width
    sizes = [0] * p.n_clusters
    bigs = [0] * p.n_clusters
    assigned = 0
    inner_lo = np.asarray(p.centers) - p.inner_half_width
    inner_hi = np.asarray(p.centers) + p.inner_half_width
    for n in range(x.n_rows):
        row = x.values[n]
        for ti in range(p.n_clusters):
            lo = starts[ti]
            if ((row >= lo) & (row < lo + width)).all():
                sizes[ti] += 1
                assigned += 1
                outer = (row < inner_lo[ti]) | (row >= inner_hi[ti])
                if outer.any():
                    bigs[ti] += 1
                break
    return ClusterDiagnostics(
        sizes=tuple(sizes),
        big_counts=tuple(bigs),
        is_target=tuple(s == p.k and b == 1 for s, b in zip(sizes, bigs)),
        all_clustered=assigned == x.n_rows,
    )


# -- closed-form box weights under each distribution --------------------------------


def _normal_mass(mu: float, sigma: float, pieces) -> float:
    nd = NormalDist(mu, sigma)
    return sum(nd.cdf(b) - nd.cdf(a) for a, b in pieces)


class ClusteredSampler:
    """Draws rows of the clustered distribution and integrates boxes under it."""

    def __init__(self, p: ClusteredParams):
        self.p = p

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        values, _, _ = _draw_clustered(self.p, rng, count)
        return values

    def box_weight(self, pieces_per_dim) -> float:
        """Exact probability that one fresh row lands in the box (ignoring
        the vanishing out-of-domain resampling mass)."""
        p = self.p
        total = 0.0
        for ti in range(p.n_clusters):
            mu = p.centers[ti]
            for sigma, pr in ((p.sigma_small, 1 - p.p_big), (p.sigma_big, p.p_big)):
                prod = pr / p.n_clusters
                for pieces in pieces_per_dim:
                    prod *= _normal_mass(mu, sigma, pieces)
                    if prod == 0.0:
                        break
                total += prod
        return total


class PrefixSampler:
    def __init__(self, p: PrefixParams):
        self.p = p

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        t = rng.integers(1, self.p.t_max + 1, size=count)
        spikes = rng.random((count, self.p.dims)) < self.p.spike_prob
        return np.where(spikes, t[:, None], 0).astype(np.float64)

    def box_weight(self, pieces_per_dim) -> float:
        """Exact probability that one fresh row lands in the box: average
        over the latent spike value of the per-dimension membership odds."""
        p = self.p
        q = p.spike_prob
        total = 0.0
        for t in range(1, p.t_max + 1):
            prod = 1.0 / p.t_max
            for pieces in pieces_per_dim:
                has0 = any(a <= 0 < b for a, b in pieces)
                hast = any(a <= t < b for a, b in pieces)
                prod *= (1 - q) * has0 + q * hast
                if prod == 0.0:
                    break
            total += prod
        return total


# -- params JSON --------------------------------------------------------------------


def params_to_json(p) -> dict:
    if isinstance(p, ClusteredParams):
        return {
            "kind": "clustered",
            "k": p.k,
            "n_rows": p.n_rows,
            "dims": p.dims,
            "n_clusters": p.n_clusters,
            "centers": list(p.centers),
            "outer_half_width": p.outer_half_width,
            "inner_half_width": p.inner_half_width,
            "sigma_small": p.sigma_small,
            "sigma_big": p.sigma_big,
            "p_big": p.p_big,
            "half_mass_scale": p.half_mass_scale,
        }
    if isinstance(p, PrefixParams):
        return {
            "kind": "prefix",
            "k": p.k,
            "n_rows": p.n_rows,
            "dims": p.dims,
            "alpha": p.alpha,
            "t_max": p.t_max,
            "spike_prob": p.spike_prob,
        }
    raise TypeError(f"not a params object: {type(p)!r}")


def params_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "clustered":
        preset = obj.get("preset")
        if preset == "fixed":
            return ClusteredParams.fixed(obj["k"], obj["n_rows"], obj["dims"])
        if preset == "scaling":
            return ClusteredParams.scaling(obj["k"], obj["n_rows"], obj["dims"])
        return ClusteredParams(
            k=obj["k"],
            n_rows=obj["n_rows"],
            dims=obj["dims"],
            n_clusters=obj["n_clusters"],
            centers=tuple(obj["centers"]),
            outer_half_width=obj["outer_half_width"],
            inner_half_width=obj["inner_half_width"],
            sigma_small=obj["sigma_small"],
            sigma_big=obj["sigma_big"],
            p_big=obj["p_big"],
        )
    if kind == "prefix":
        return PrefixParams(
            k=obj["k"],
            n_rows=obj["n_rows"],
            dims=obj["dims"],
            alpha=obj["alpha"],
            t_max=obj.get("t_max", 0),
            spike_prob=obj.get("spike_prob", 0.0),
        )
    raise ValueError(f"unknown params kind {kind!r}")


def load_params(path: str):
    with open(path) as f:
        return params_from_json(json.load(f))


def save_params(p, path: str) -> None:
    with open(path, "w") as f:
        json.dump(params_to_json(p), f, indent=1, sort_keys=True)
        f.write("\n")


def provenance_to_json(prov: SampleProvenance) -> dict:
    out = {"kind": prov.kind, "cluster": list(prov.cluster)}
    if prov.kind == "clustered":
        out["noise"] = list(prov.noise)
    return out


def provenance_from_json(obj: dict) -> SampleProvenance:
    return SampleProvenance(obj["kind"], tuple(obj["cluster"]), tuple(obj.get("noise", ())))
