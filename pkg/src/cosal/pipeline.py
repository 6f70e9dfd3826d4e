"""End-to-end group inference: project, refine, and fuse.

Per image group: co-attention maps from the projection stage are refined by
graph ranking on a small lattice, upsampled to the prior's resolution, and
multiplied pointwise with the per-image saliency prior. Refinement is a
pluggable stage; graph ranking is the shipped implementation and identity is
available as a second one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coattention import DegenerateCovarianceError, GroupFeatureSet, GroupStats, coattention_maps, group_stats
from .core import (
    CosalError,
    ScalarMap,
    adaptive_threshold,
    area_average_resize,
    as_scalar_values,
    minmax_normalize,
    resize_bilinear,
)

DEFAULT_ALPHA = 0.99
DEFAULT_RANK_TOL = 1e-8
DEFAULT_RANK_MAX_ITER = 10_000
MAX_LATTICE_SIDE = 64


class NoSeedsError(CosalError):
    """The attention map offers no cells above the adaptive threshold."""


class RankingConvergenceError(CosalError):
    """Fixed-point ranking iteration did not reach the residual target."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class RankingGraph:
    """Symmetric non-negative affinity over lattice cells with seed labels."""

    def __init__(self, n_nodes, edges_u, edges_v, edge_weights, seeds, shape=None):
        u = np.asarray(edges_u, dtype=np.int64)
        v = np.asarray(edges_v, dtype=np.int64)
        w = np.asarray(edge_weights, dtype=np.float64)
        if u.shape != v.shape or u.shape != w.shape:
            raise ValueError("edge arrays must share a shape")
        if u.size and ((u == v).any() or u.min() < 0 or v.min() < 0
                       or max(u.max(), v.max()) >= n_nodes):
            raise ValueError("edges must connect distinct valid nodes")
        if w.size and w.min() < 0:
            raise ValueError("affinities must be non-negative")
        y = np.asarray(seeds, dtype=np.float64).ravel()
        if y.size != n_nodes or (y.size and y.min() < 0):
            raise ValueError("seeds must be one non-negative value per node")
        self.n_nodes = int(n_nodes)
        self.shape = shape
        self.seeds = y
        self._src = np.concatenate([u, v])
        self._dst = np.concatenate([v, u])
        w_dir = np.concatenate([w, w])
        self.degrees = np.bincount(self._dst, weights=w_dir, minlength=n_nodes)
        inv_sqrt = np.zeros(n_nodes)
        nz = self.degrees > 0
        inv_sqrt[nz] = 1.0 / np.sqrt(self.degrees[nz])
        self._norm_w = w_dir * inv_sqrt[self._src] * inv_sqrt[self._dst]
        self._edges_u = u
        self._edges_v = v
        self._edge_w = w

    @classmethod
    def from_dense(cls, affinity, seeds, shape=None) -> "RankingGraph":
        a = np.asarray(affinity, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("affinity must be square")
        if not np.array_equal(a, a.T):
            raise ValueError("affinity must be symmetric")
        if np.diagonal(a).any():
            raise ValueError("affinity diagonal must be zero")
        iu, iv = np.triu_indices(a.shape[0], k=1)
        keep = a[iu, iv] != 0
        return cls(a.shape[0], iu[keep], iv[keep], a[iu, iv][keep], seeds, shape=shape)

    def dense_affinity(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self._edges_u, self._edges_v] = self._edge_w
        a[self._edges_v, self._edges_u] = self._edge_w
        return a

    def smoothed(self, f: np.ndarray) -> np.ndarray:
        """One application of the degree-normalized affinity."""
        return np.bincount(self._dst, weights=self._norm_w * f[self._src],
                           minlength=self.n_nodes)


def build_ranking_graph(attention, image=None, max_side: int = MAX_LATTICE_SIDE) -> RankingGraph:
    """Lattice graph over a downsampled attention map.

    Nodes are cells of an area-averaged lattice of at most max_side per
    dimension, 8-connected. Affinity is a Gaussian on feature distance over
    (attention value, optional color triple), with the bandwidth set to the
    mean neighbor distance. Seeds are cells at or above the adaptive
    threshold of the lattice attention.
    """
    att = as_scalar_values(attention)
    if att.max() == 0.0:
        raise NoSeedsError("no seeds: attention map is all zero")
    h, w = att.shape
    lh, lw = min(h, max_side), min(w, max_side)
    lat = area_average_resize(att, lh, lw)
    feats = [lat]
    if image is not None:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError("image must be an (h, w, 3) color array")
        if img.shape[:2] != att.shape:
            raise ValueError("image dimensions must match the attention map")
        for c in range(3):
            feats.append(area_average_resize(img[:, :, c], lh, lw))
    stacked = np.stack([f.ravel() for f in feats], axis=1)

    idx = np.arange(lh * lw).reshape(lh, lw)
    us = []
    vs = []
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        r0 = max(0, -dr)
        r1 = lh - max(0, dr)
        c0 = max(0, -dc)
        c1 = lw - max(0, dc)
        if r1 <= r0 or c1 <= c0:
            continue
        us.append(idx[r0:r1, c0:c1].ravel())
        vs.append(idx[r0 + dr:r1 + dr, c0 + dc:c1 + dc].ravel())
    if us:
        u = np.concatenate(us)
        v = np.concatenate(vs)
        diff = stacked[u] - stacked[v]
        dist = np.sqrt((diff * diff).sum(axis=1))
        sigma = dist.mean()
        if sigma > 0:
            weights = np.exp(-(dist * dist) / (2.0 * sigma * sigma))
        else:
            weights = np.ones_like(dist)
    else:
        u = np.empty(0, dtype=np.int64)
        v = np.empty(0, dtype=np.int64)
        weights = np.empty(0)

    seeds = (lat.ravel() >= adaptive_threshold(lat)).astype(np.float64)
    if not seeds.any():
        raise NoSeedsError("no seeds: no cell reaches the adaptive threshold")
    return RankingGraph(lh * lw, u, v, weights, seeds, shape=(lh, lw))


def rank_scores(graph: RankingGraph, alpha: float = DEFAULT_ALPHA, tol: float = DEFAULT_RANK_TOL,
                max_iter: int = DEFAULT_RANK_MAX_ITER):
    """Raw diffusion scores by fixed-point iteration f <- alpha*S*f + y.

    Runs until the solution is within tol of the closed form (the fixed-point
    residual is driven below tol*(1-alpha), which bounds the solution error by
    tol through the contraction). Returns (scores, iterations).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    y = graph.seeds
    f = np.zeros_like(y)
    target = tol * (1.0 - alpha)
    for it in range(max_iter):
        f_next = alpha * graph.smoothed(f) + y
        step = float(np.linalg.norm(f_next - f))
        f = f_next
        if step <= target:
            return f, it + 1
    raise RankingConvergenceError(
        f"ranking did not converge in {max_iter} iterations (residual {step:.3e})",
        residual=step,
    )


def manifold_rank(graph: RankingGraph, alpha: float = DEFAULT_ALPHA, tol: float = DEFAULT_RANK_TOL,
                  max_iter: int = DEFAULT_RANK_MAX_ITER) -> np.ndarray:
    """Minmax-normalized diffusion scores.

    Constant positive scores (every node ranked equally, e.g. a single seeded
    node) normalize to all-ones rather than collapsing to zero.
    """
    f, _ = rank_scores(graph, alpha, tol, max_iter)
    if f.max() == f.min():
        return np.ones_like(f) if f.max() > 0 else np.zeros_like(f)
    return minmax_normalize(f)


def refine_attention(attention, image=None, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Graph-ranking refinement of an attention map, at the map's resolution.

    Degenerate inputs (all-zero, constant, or seedless attention; constant
    ranking scores) fall back to the input unchanged.
    """
    refined, _ = _refine_with_warnings(attention, image, alpha)
    return refined


def _refine_with_warnings(attention, image=None, alpha: float = DEFAULT_ALPHA):
    att = as_scalar_values(attention)
    if att.max() == att.min():
        return att.copy(), ["constant attention left unrefined"]
    try:
        graph = build_ranking_graph(att, image)
    except NoSeedsError as exc:
        return att.copy(), [f"refinement fallback: {exc}"]
    f, iterations = rank_scores(graph, alpha)
    if f.max() == f.min():
        return att.copy(), ["refinement fallback: constant ranking scores"]
    lattice_scores = minmax_normalize(f).reshape(graph.shape)
    up = resize_bilinear(lattice_scores, att.shape[0], att.shape[1])
    return minmax_normalize(up), [f"ranking iterations: {iterations}"]


def fuse(attention, prior) -> np.ndarray:
    """Pointwise product after resampling attention to the prior's grid."""
    att = as_scalar_values(attention)
    pri = as_scalar_values(prior)
    if att.shape != pri.shape:
        att = resize_bilinear(att, pri.shape[0], pri.shape[1])
    return att * pri


@dataclass
class ImagePrediction:
    image_id: str
    attention: ScalarMap
    refined: ScalarMap
    prior: ScalarMap
    final: ScalarMap


@dataclass
class GroupPrediction:
    images: list[ImagePrediction]
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)
    eigen_iterations: int = 0


def run_group(features: GroupFeatureSet, priors, images=None, refiner: str = "ranking",
              alpha: float = DEFAULT_ALPHA) -> GroupPrediction:
    """Full inference for one group: co-attention, refinement, fusion.

    priors: one unit-interval map per image, at output resolution.
    images: optional color arrays (at prior resolution) for the graph stage.
    refiner: "ranking" or "identity".
    """
    if refiner not in ("ranking", "identity"):
        raise ValueError("refiner must be 'ranking' or 'identity'")
    prior_maps = [p if isinstance(p, ScalarMap) else ScalarMap(np.asarray(p, dtype=np.float64))
                  for p in priors]
    if len(prior_maps) != features.n_images:
        raise ValueError(
            f"need one prior per image: got {len(prior_maps)} priors for {features.n_images} images"
        )
    if images is not None and len(images) != features.n_images:
        raise ValueError("need one color image per prior when images are given")

    warnings = []
    degenerate = False
    stats: GroupStats | None = None
    try:
        stats = group_stats(features)
    except DegenerateCovarianceError:
        degenerate = True
        warnings.append("degenerate covariance: emitting all-zero maps")
    if stats is not None and stats.near_degenerate:
        warnings.append("near-degenerate leading eigenvalues; projection direction is arbitrary")

    if degenerate:
        attention = [ScalarMap(np.zeros((s.fheight, s.fwidth))) for s in features.stacks]
    else:
        attention = [maps[0] for maps in coattention_maps(features, m=1, stats=stats)]

    out = []
    for i, att in enumerate(attention):
        if refiner == "identity":
            refined_feat = att.values.copy()
        else:
            color = None
            if images is not None:
                img = np.asarray(images[i], dtype=np.float64)
                color = np.stack(
                    [
                        area_average_resize(img[:, :, c], att.height, att.width)
                        for c in range(3)
                    ],
                    axis=2,
                )
            refined_feat, refine_warnings = _refine_with_warnings(att, color, alpha)
            warnings.extend(f"{features.ids[i]}: {w}" for w in refine_warnings)
        prior = prior_maps[i]
        refined_full = ScalarMap(resize_bilinear(refined_feat, prior.height, prior.width))
        final = ScalarMap(fuse(refined_full, prior))
        out.append(
            ImagePrediction(
                image_id=features.ids[i],
                attention=att,
                refined=refined_full,
                prior=prior,
                final=final,
            )
        )
    return GroupPrediction(
        images=out,
        degenerate=degenerate,
        warnings=warnings,
        eigen_iterations=stats.iterations if stats is not None else 0,
    )


def naive_prior(gray) -> np.ndarray:
    """Centered Gaussian times local contrast.

    A crude stand-in prior for smoke tests only; real runs should feed the
    prior maps of an actual saliency model.
    """
    g = as_scalar_values(gray)
    h, w = g.shape
    yy = (np.arange(h) - (h - 1) / 2.0) / max(h / 2.0, 1.0)
    xx = (np.arange(w) - (w - 1) / 2.0) / max(w / 2.0, 1.0)
    gauss = np.exp(-(yy[:, None] ** 2 + xx[None, :] ** 2) / (2.0 * 0.5**2))
    small = area_average_resize(g, max(1, h // 8), max(1, w // 8))
    blurred = resize_bilinear(small, h, w)
    contrast = minmax_normalize(np.abs(g - blurred))
    return minmax_normalize(gauss * (0.25 + 0.75 * contrast))
