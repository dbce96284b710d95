"""Voronoi, power, and cluster-induced diagram queries in feature space.

Assignment rules implemented here:

* Voronoi diagram (VD): nearest site by Euclidean distance.
* Power diagram (PD): smallest ``d(z, mu_k)^2 - v_k^2``.
* Cluster-induced VD (CIVD): largest influence
  ``F(z, C_k) = -sign(gamma) * sum_a d(mu_k^(a), z)^gamma``.
* Cluster-induced PD (CIPD): same aggregation over power terms
  ``d(mu_k^(a), z)^2 - v_k^2``.

All queries accept a single point of shape ``(dim,)`` or a batch of shape
``(n, dim)`` and are pure functions of their inputs. Ties are always broken
toward the lowest cell index so that repeated calls are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray

# Geometric comparisons in compute_cells_2d use this absolute slack.
_CLIP_EPS = 1e-12


def _check_points(z, dim: int) -> Array:
    z = np.asarray(z, dtype=float)
    if z.ndim not in (1, 2) or z.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("points must be finite")
    return z


@dataclass(frozen=True)
class SiteSet:
    """K diagram sites (class prototypes) in a common feature space."""

    sites: Array  # (K, dim)

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        if sites.ndim != 2 or sites.shape[0] < 1:
            raise ValueError("sites must be a non-empty (K, dim) array")
        if not np.all(np.isfinite(sites)):
            raise ValueError("sites must be finite")
        object.__setattr__(self, "sites", sites)

    @property
    def n_cells(self) -> int:
        return self.sites.shape[0]

    @property
    def dim(self) -> int:
        return self.sites.shape[1]


@dataclass(frozen=True)
class PowerSiteSet:
    """Sites plus signed squared weights v_k^2.

    The stored weight is the squared value: sources such as logistic heads
    yield negative v_k^2, and the power distance d^2 - v^2 stays well defined
    either way.
    """

    base: SiteSet
    weight_sq: Array  # (K,)

    def __post_init__(self):
        w = np.asarray(self.weight_sq, dtype=float)
        if w.shape != (self.base.n_cells,):
            raise ValueError("need one squared weight per site")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weight_sq", w)

    @property
    def n_cells(self) -> int:
        return self.base.n_cells

    @property
    def dim(self) -> int:
        return self.base.dim


@dataclass(frozen=True)
class ClusterSiteSet:
    """K clusters of A sites each, with optional per-cluster squared weights.

    Cluster k holds the augmentation-expanded prototypes mu_k^(a); index a=0
    is the identity augmentation, so ``base_sites`` recovers the plain
    one-site-per-class SiteSet.
    """

    clusters: Array  # (K, A, dim)
    weight_sq: Array | None = None  # (K,)

    def __post_init__(self):
        c = np.asarray(self.clusters, dtype=float)
        if c.ndim != 3 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError("clusters must be a non-empty (K, A, dim) array")
        if not np.all(np.isfinite(c)):
            raise ValueError("cluster sites must be finite")
        object.__setattr__(self, "clusters", c)
        if self.weight_sq is not None:
            w = np.asarray(self.weight_sq, dtype=float)
            if w.shape != (c.shape[0],):
                raise ValueError("need one squared weight per cluster")
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")
            object.__setattr__(self, "weight_sq", w)

    @property
    def n_cells(self) -> int:
        return self.clusters.shape[0]

    @property
    def n_sites_per_cluster(self) -> int:
        return self.clusters.shape[1]

    @property
    def dim(self) -> int:
        return self.clusters.shape[2]

    def base_sites(self) -> SiteSet:
        return SiteSet(self.clusters[:, 0, :])

    def with_weights(self, weight_sq) -> "ClusterSiteSet":
        return ClusterSiteSet(self.clusters, np.asarray(weight_sq, dtype=float))

    @staticmethod
    def from_sites(sites: SiteSet, weight_sq=None) -> "ClusterSiteSet":
        """Wrap plain sites as singleton clusters (A = 1)."""
        return ClusterSiteSet(sites.sites[:, None, :], weight_sq)


@dataclass(frozen=True)
class LogisticHead:
    """Multinomial logistic classifier: logits = weights @ z + bias."""

    weights: Array  # (K, dim)
    bias: Array  # (K,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("weights must be (K, dim) with one bias per row")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    def logits(self, z) -> Array:
        z = _check_points(z, self.weights.shape[1])
        return z @ self.weights.T + self.bias


@dataclass(frozen=True)
class InfluenceConfig:
    """Influence exponent gamma plus the positive floor applied to each
    distance (or power) term before it is raised to gamma."""

    gamma: float = -0.8
    distance_floor: float = 1e-8

    def __post_init__(self):
        if self.gamma == 0:
            raise ValueError("gamma must be nonzero")
        if not self.distance_floor > 0:
            raise ValueError("distance_floor must be positive")


@dataclass(frozen=True)
class CellPolygon2D:
    """One diagram cell clipped to a bounding box.

    ``vertices`` is a convex counterclockwise (V, 2) array; it may be empty
    when the cell does not intersect the box. ``clipped`` marks cells whose
    polygon touches the box boundary and is therefore truncated.
    """

    cell_index: int
    vertices: Array
    clipped: bool


# ---------------------------------------------------------------------------
# Score kernels. Each returns (K,) for a single point or (n, K) for a batch,
# computed identically for both layouts so callers can share the arrays.
# ---------------------------------------------------------------------------


def vd_distances(z, s: SiteSet) -> Array:
    """Euclidean distance from z to every site."""
    z = _check_points(z, s.dim)
    diff = np.atleast_2d(z)[:, None, :] - s.sites[None, :, :]
    d = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))
    return d[0] if z.ndim == 1 else d


def pd_power(z, p: PowerSiteSet) -> Array:
    """Power distance d(z, mu_k)^2 - v_k^2 for every cell."""
    z = _check_points(z, p.dim)
    diff = np.atleast_2d(z)[:, None, :] - p.base.sites[None, :, :]
    power = np.einsum("nkd,nkd->nk", diff, diff) - p.weight_sq[None, :]
    return power[0] if z.ndim == 1 else power


def _cluster_distances(z, c: ClusterSiteSet) -> Array:
    """(n, K, A) Euclidean distances from each point to every cluster site."""
    z2 = np.atleast_2d(_check_points(z, c.dim))
    diff = z2[:, None, None, :] - c.clusters[None, :, :, :]
    return np.sqrt(np.einsum("nkad,nkad->nka", diff, diff))


def _influence_from_terms(terms: Array, cfg: InfluenceConfig) -> Array:
    """Aggregate per-site terms: -sign(gamma) * sum_a clamp(term)^gamma."""
    clamped = np.maximum(terms, cfg.distance_floor)
    return -np.sign(cfg.gamma) * np.sum(clamped**cfg.gamma, axis=-1)


def civd_influence(z, cluster, cfg: InfluenceConfig) -> float | Array:
    """Influence of one cluster of sites on z (distance-based form)."""
    cluster = np.asarray(cluster, dtype=float)
    if cluster.ndim != 2 or cluster.shape[0] == 0:
        raise ValueError("cluster must be a non-empty (A, dim) array")
    z = _check_points(z, cluster.shape[1])
    diff = np.atleast_2d(z)[:, None, :] - cluster[None, :, :]
    d = np.sqrt(np.einsum("nad,nad->na", diff, diff))
    f = _influence_from_terms(d, cfg)
    return float(f[0]) if z.ndim == 1 else f


def cipd_influence(z, cluster, weight_sq: float, cfg: InfluenceConfig) -> float | Array:
    """Influence of one weighted cluster on z (power-based form)."""
    cluster = np.asarray(cluster, dtype=float)
    if cluster.ndim != 2 or cluster.shape[0] == 0:
        raise ValueError("cluster must be a non-empty (A, dim) array")
    z = _check_points(z, cluster.shape[1])
    diff = np.atleast_2d(z)[:, None, :] - cluster[None, :, :]
    terms = np.einsum("nad,nad->na", diff, diff) - float(weight_sq)
    f = _influence_from_terms(terms, cfg)
    return float(f[0]) if z.ndim == 1 else f


def civd_influences(z, c: ClusterSiteSet, cfg: InfluenceConfig) -> Array:
    """Distance-based influence of every cluster; (K,) or (n, K)."""
    d = _cluster_distances(z, c)
    f = _influence_from_terms(d, cfg)
    return f[0] if np.asarray(z).ndim == 1 else f


def cipd_influences(z, c: ClusterSiteSet, cfg: InfluenceConfig, weight_sq=None) -> Array:
    """Power-based influence of every cluster; (K,) or (n, K).

    ``weight_sq`` overrides the weights stored on the cluster set, which lets
    the filter evaluate the zero-weight (unweighted) diagram of the same
    clusters.
    """
    w = c.weight_sq if weight_sq is None else np.asarray(weight_sq, dtype=float)
    if w is None:
        raise ValueError("cluster set has no weights")
    if w.shape != (c.n_cells,):
        raise ValueError("need one squared weight per cluster")
    d = _cluster_distances(z, c)
    terms = d**2 - w[None, :, None]
    f = _influence_from_terms(terms, cfg)
    return f[0] if np.asarray(z).ndim == 1 else f


# ---------------------------------------------------------------------------
# Assignments: lowest index attaining the extreme value.
# ---------------------------------------------------------------------------


def vd_assign(z, s: SiteSet) -> int | Array:
    d = vd_distances(z, s)
    idx = np.argmin(d, axis=-1)
    return int(idx) if d.ndim == 1 else idx


def pd_assign(z, p: PowerSiteSet) -> int | Array:
    power = pd_power(z, p)
    idx = np.argmin(power, axis=-1)
    return int(idx) if power.ndim == 1 else idx


def civd_assign(z, c: ClusterSiteSet, cfg: InfluenceConfig) -> int | Array:
    f = civd_influences(z, c, cfg)
    idx = np.argmax(f, axis=-1)
    return int(idx) if f.ndim == 1 else idx


def cipd_assign(z, c: ClusterSiteSet, cfg: InfluenceConfig) -> int | Array:
    f = cipd_influences(z, c, cfg)
    idx = np.argmax(f, axis=-1)
    return int(idx) if f.ndim == 1 else idx


def logistic_to_power(h: LogisticHead) -> PowerSiteSet:
    """Convert a logistic head to the power diagram it induces.

    Sites are half the weight rows and the squared weights are
    ``bias_k + ||W_k||^2 / 4``; the resulting pd_assign reproduces the
    head's argmax everywhere.
    """
    mu = h.weights / 2.0
    weight_sq = h.bias + np.sum(h.weights**2, axis=1) / 4.0
    return PowerSiteSet(SiteSet(mu), weight_sq)


def diagram_disagreement(z, c: ClusterSiteSet, cfg: InfluenceConfig) -> bool | Array:
    """True where the unweighted and weighted cluster diagrams assign z to
    different cells.

    Both sides use the power-based influence over the same clusters; the
    unweighted side sets every v_k^2 to zero. With all-zero weights the two
    diagrams coincide and the result is identically False. For singleton
    clusters this is exactly the VD-vs-PD cell difference.
    """
    if c.weight_sq is None:
        raise ValueError("cluster set has no weights")
    zeros = np.zeros(c.n_cells)
    unweighted = cipd_influences(z, c, cfg, weight_sq=zeros)
    weighted = cipd_influences(z, c, cfg)
    neq = np.argmax(unweighted, axis=-1) != np.argmax(weighted, axis=-1)
    return bool(neq) if unweighted.ndim == 1 else neq


# ---------------------------------------------------------------------------
# Exact 2-D cell polygons by sequential half-plane clipping.
# ---------------------------------------------------------------------------


def _clip_halfplane(poly: Array, a: Array, rhs: float) -> Array:
    """Clip a convex CCW polygon to the half-plane a . p <= rhs."""
    if len(poly) == 0:
        return poly
    vals = poly @ a - rhs
    inside = vals <= _CLIP_EPS
    if np.all(inside):
        return poly
    out = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        pi, pj = poly[i], poly[j]
        vi, vj = vals[i], vals[j]
        if inside[i]:
            out.append(pi)
        if inside[i] != inside[j]:
            # Edge crosses the boundary; vi != vj because exactly one side
            # is strictly outside the eps band.
            t = vi / (vi - vj)
            out.append(pi + t * (pj - pi))
    if not out:
        return np.empty((0, 2))
    return _dedupe_vertices(np.asarray(out))


def _dedupe_vertices(poly: Array) -> Array:
    if len(poly) < 2:
        return poly
    keep = [0]
    for i in range(1, len(poly)):
        if np.max(np.abs(poly[i] - poly[keep[-1]])) > 1e-9:
            keep.append(i)
    if len(keep) > 1 and np.max(np.abs(poly[keep[-1]] - poly[keep[0]])) <= 1e-9:
        keep.pop()
    return poly[keep]


def compute_cells_2d(p: PowerSiteSet, bbox) -> list[CellPolygon2D]:
    """Power-diagram cells clipped to an axis-aligned box.

    ``bbox`` is (xmin, xmax, ymin, ymax). Cell k is the intersection of the
    half-planes ``2 (mu_j - mu_k) . z <= |mu_j|^2 - v_j^2 - |mu_k|^2 + v_k^2``
    over all j != k, clipped to the box; the K polygons tile the box up to
    shared edges. Only dimension-2 site sets are supported.
    """
    if p.dim != 2:
        raise ValueError("compute_cells_2d requires 2-D sites")
    xmin, xmax, ymin, ymax = (float(v) for v in bbox)
    if not (xmin < xmax and ymin < ymax):
        raise ValueError("bounding box must have positive extent")
    box = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    mu = p.base.sites
    norm_less_w = np.einsum("kd,kd->k", mu, mu) - p.weight_sq

    cells = []
    for k in range(p.n_cells):
        poly = box
        for j in range(p.n_cells):
            if j == k or len(poly) == 0:
                continue
            a = 2.0 * (mu[j] - mu[k])
            rhs = norm_less_w[j] - norm_less_w[k]
            if np.max(np.abs(a)) < _CLIP_EPS:
                # Coincident sites: the cell survives only if its power is
                # not strictly larger (lowest-index tie keeps j > k side out).
                if rhs < -_CLIP_EPS or (abs(rhs) <= _CLIP_EPS and j < k):
                    poly = np.empty((0, 2))
                continue
            poly = _clip_halfplane(poly, a, rhs)
        if len(poly) < 3:
            poly = np.empty((0, 2))
        on_box = len(poly) > 0 and bool(
            np.any(
                (np.abs(poly[:, 0] - xmin) < 1e-9)
                | (np.abs(poly[:, 0] - xmax) < 1e-9)
                | (np.abs(poly[:, 1] - ymin) < 1e-9)
                | (np.abs(poly[:, 1] - ymax) < 1e-9)
            )
        )
        cells.append(CellPolygon2D(cell_index=k, vertices=poly, clipped=on_box))
    return cells
