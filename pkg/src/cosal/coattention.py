"""Unsupervised common-object discovery over image groups.

Pools the channel descriptors of every image in a group, eigen-analyzes their
covariance, and projects each image onto the leading directions to get
per-image co-attention maps. All cross-image reductions are keyed by image
identity (not list position), so results are bitwise independent of input
order.
"""

from __future__ import annotations

import numpy as np

from .core import CosalError, FeatureStack, ScalarMap, minmax_normalize

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000
NEAR_DEGENERATE_REL_GAP = 1e-6

_START_SEED = 0x5EED


class DegenerateCovarianceError(CosalError):
    """The group covariance carries no variance at all."""


class PowerIterationError(CosalError):
    """Eigensolve did not converge; carries the last iterate and residual."""

    def __init__(self, message, last_vector, residual, iterations):
        super().__init__(message)
        self.last_vector = last_vector
        self.residual = residual
        self.iterations = iterations


class GroupFeatureSet:
    """N feature stacks of one image group, sharing a channel count."""

    def __init__(self, stacks, ids=None):
        stacks = tuple(s if isinstance(s, FeatureStack) else FeatureStack(s) for s in stacks)
        if not stacks:
            raise ValueError("a group needs at least one image")
        k = stacks[0].channels
        for s in stacks:
            if s.channels != k:
                raise ValueError("all stacks in a group must share the channel count")
        if ids is None:
            ids = tuple(f"{i:04d}" for i in range(len(stacks)))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != len(stacks):
                raise ValueError("need exactly one id per stack")
            if len(set(ids)) != len(ids):
                raise ValueError("image ids must be unique within a group")
        self.stacks = stacks
        self.ids = ids

    @property
    def n_images(self) -> int:
        return len(self.stacks)

    @property
    def channels(self) -> int:
        return self.stacks[0].channels

    @property
    def descriptor_count(self) -> int:
        return sum(s.fheight * s.fwidth for s in self.stacks)

    def sorted_items(self):
        return sorted(zip(self.ids, self.stacks), key=lambda kv: kv[0])


class ProjectionWeights:
    """A K-vector mapping descriptors to activation scores."""

    SOURCES = ("supervised", "principal", "custom")

    def __init__(self, weights, source: str = "custom"):
        w = np.ascontiguousarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a 1-d vector")
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        if source not in self.SOURCES:
            raise ValueError(f"source must be one of {self.SOURCES}")
        if source == "principal" and abs(np.linalg.norm(w) - 1.0) > 1e-8:
            raise ValueError("principal weights must be unit norm")
        w.flags.writeable = False
        self.weights = w
        self.source = source


class GroupStats:
    """Mean, covariance and leading eigenpairs of one group's descriptors."""

    def __init__(self, mean, covariance, eigenvalues, eigenvectors, near_degenerate=False,
                 iterations=0):
        self.mean = mean
        self.covariance = covariance
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors  # (K, m), columns are unit vectors
        self.near_degenerate = near_degenerate
        self.iterations = iterations


def group_mean(group: GroupFeatureSet) -> np.ndarray:
    """Descriptor mean over every spatial cell of every image."""
    total = None
    for _, stack in group.sorted_items():
        part = stack.values.sum(axis=(0, 1))
        total = part if total is None else total + part
    return total / group.descriptor_count


def group_covariance(group: GroupFeatureSet, mean=None) -> np.ndarray:
    """Covariance of centered descriptors, symmetric by construction."""
    if mean is None:
        mean = group_mean(group)
    k = group.channels
    acc = np.zeros((k, k))
    for _, stack in group.sorted_items():
        centered = stack.values.reshape(-1, k) - mean
        acc = acc + centered.T @ centered
    cov = acc / group.descriptor_count
    return (cov + cov.T) / 2.0


def top_eigenvectors(cov, m: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Leading m eigenpairs of a symmetric matrix by power iteration with
    Hotelling deflation.

    Power iteration extracts pairs in dominant-magnitude order; extraction
    continues (deflating each accepted pair) until the m algebraically
    largest are settled, which for a PSD covariance means exactly m rounds.
    Convergence is on the residual ||Av - lambda*v|| <= tol * scale; a
    residual plateau below the near-tie gap is accepted since any vector of a
    (near-)degenerate eigenspace is equally valid. Returns eigenvalues
    descending and unit eigenvectors as columns, each with its
    largest-magnitude component made positive.
    """
    a = np.asarray(cov, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("covariance must be a square matrix")
    k = a.shape[0]
    if not (1 <= m <= k):
        raise ValueError(f"m must lie in [1, {k}]")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise ValueError("covariance must be symmetric")
    if not a.any():
        raise DegenerateCovarianceError("degenerate covariance: zero matrix")

    scale0 = max(float(np.linalg.norm(a)) / np.sqrt(k), 1e-300)
    rng = np.random.default_rng(_START_SEED)
    values = []
    vectors = []
    total_iterations = 0
    while len(values) < k:
        v = rng.standard_normal(k)
        v = _orthogonalize(v, vectors)
        v /= np.linalg.norm(v)
        converged = False
        residual = np.inf
        for _ in range(max_iter):
            w = _deflated_apply(a, v, values, vectors)
            norm_w = np.linalg.norm(w)
            if norm_w <= 1e-14 * scale0:
                # the remaining (deflated) spectrum is numerically zero; the
                # current iterate spans it as well as any vector
                converged = True
                break
            mu = float(v @ w)
            residual = float(np.linalg.norm(w - mu * v))
            v = w / norm_w
            total_iterations += 1
            if residual <= tol * max(abs(mu), scale0 * 1e-6):
                converged = True
                break
        if not converged:
            # oscillation between two opposite-sign eigenvalues of similar
            # magnitude: resolve the pair inside span{v, Av}
            v, residual = _ritz_rescue(a, v, values, vectors, scale0)
            mu = float(v @ _deflated_apply(a, v, values, vectors))
            if residual > tol * max(abs(mu), scale0 * 1e-6) and (
                residual > NEAR_DEGENERATE_REL_GAP * scale0
            ):
                raise PowerIterationError(
                    f"power iteration did not converge in {max_iter} iterations "
                    f"(residual {residual:.3e})",
                    last_vector=v,
                    residual=residual,
                    iterations=max_iter,
                )
        mu = float(v @ (a @ v))
        idx = int(np.argmax(np.abs(v)))
        if v[idx] < 0:
            v = -v
        values.append(mu)
        vectors.append(v)
        # remaining eigenvalues are bounded by the magnitude just extracted;
        # stop once the m-th best algebraic value cannot be displaced
        if len(values) >= m:
            best = sorted(values, reverse=True)
            if best[m - 1] >= abs(mu) - 1e-12 * scale0:
                break

    order = sorted(range(len(values)), key=lambda i: -values[i])[:m]
    eigenvalues = np.array([values[i] for i in order])
    eigenvectors = np.column_stack([vectors[i] for i in order])
    return eigenvalues, eigenvectors, total_iterations


def _orthogonalize(v, vectors):
    for u in vectors:
        v = v - (u @ v) * u
    return v


def _deflated_apply(a, x, values, vectors):
    w = a @ x
    for prev_mu, prev_v in zip(values, vectors):
        w -= prev_mu * (prev_v @ x) * prev_v
    return _orthogonalize(w, vectors)


def _ritz_rescue(a, v, values, vectors, scale0):
    """Best eigenpair of the 2-d Krylov span {v, Av} (deflated operator).

    A stalled iterate oscillating between a +lambda/-lambda pair carries both
    eigenvectors in this span, where a closed-form 2x2 solve separates them.
    Returns (unit vector, residual), preferring the larger-magnitude Ritz
    value among converged candidates.
    """
    w1 = v / np.linalg.norm(v)
    t = _deflated_apply(a, w1, values, vectors)
    t = t - (w1 @ t) * w1
    n2 = np.linalg.norm(t)
    if n2 <= 1e-14 * scale0:
        r = _deflated_apply(a, w1, values, vectors)
        mu = float(w1 @ r)
        return w1, float(np.linalg.norm(r - mu * w1))
    w2 = t / n2
    b1 = _deflated_apply(a, w1, values, vectors)
    b2 = _deflated_apply(a, w2, values, vectors)
    m11 = float(w1 @ b1)
    m12 = 0.5 * (float(w1 @ b2) + float(w2 @ b1))
    m22 = float(w2 @ b2)
    # analytic eigenpairs of [[m11, m12], [m12, m22]]
    half_tr = 0.5 * (m11 + m22)
    disc = np.sqrt(max(0.0, (0.5 * (m11 - m22)) ** 2 + m12 * m12))
    candidates = []
    for lam in (half_tr + disc, half_tr - disc):
        c_a = np.array([m12, lam - m11])
        c_b = np.array([lam - m22, m12])
        c = c_a if np.linalg.norm(c_a) >= np.linalg.norm(c_b) else c_b
        norm_c = np.linalg.norm(c)
        c = c / norm_c if norm_c > 0 else np.array([1.0, 0.0])
        u = c[0] * w1 + c[1] * w2
        u /= np.linalg.norm(u)
        r = _deflated_apply(a, u, values, vectors) - lam * u
        candidates.append((abs(lam), u, float(np.linalg.norm(r))))
    candidates.sort(key=lambda t: -t[0])
    tol_ok = [cand for cand in candidates if cand[2] <= 1e-8 * max(cand[0], scale0)]
    chosen = tol_ok[0] if tol_ok else min(candidates, key=lambda t: t[2])
    return chosen[1], chosen[2]


def group_stats(group: GroupFeatureSet, m: int = 1, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> GroupStats:
    """Full statistics bundle; probes one extra eigenpair to flag near-ties."""
    mean = group_mean(group)
    cov = group_covariance(group, mean)
    k = cov.shape[0]
    probe = min(k, max(m, 2))
    eigenvalues, eigenvectors, iterations = top_eigenvectors(cov, probe, tol=tol, max_iter=max_iter)
    near = False
    if probe >= 2:
        near = (eigenvalues[0] - eigenvalues[1]) < NEAR_DEGENERATE_REL_GAP * max(
            eigenvalues[0], 1e-300
        )
    return GroupStats(mean, cov, eigenvalues[:m], eigenvectors[:, :m],
                      near_degenerate=near, iterations=iterations)


def project(weights, stack, mean) -> np.ndarray:
    """Linear activation scores: grid(i, j) = w . (x(i, j) - mean).

    Pass a zero mean to project raw (uncentered) descriptors.
    """
    w = weights.weights if isinstance(weights, ProjectionWeights) else np.asarray(weights, dtype=np.float64)
    values = stack.values if isinstance(stack, FeatureStack) else np.asarray(stack, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if w.ndim != 1 or values.ndim != 3 or values.shape[2] != w.size or mean.shape != w.shape:
        raise ValueError(
            f"weights ({w.shape}), stack ({values.shape}) and mean ({mean.shape}) disagree"
        )
    return (values - mean) @ w


def orientation_sign(projections: np.ndarray) -> float:
    """Sign making the projection distribution positively skewed.

    Common objects form a compact positive tail over a large background. Exact
    zero skewness falls back to whichever sign gives the larger top-1% mass.
    """
    vals = np.asarray(projections, dtype=np.float64).ravel()
    d = vals - vals.mean()
    m2 = float((d * d).mean())
    if m2 > 0:
        skew = float((d * d * d).mean()) / m2**1.5
        if skew > 0:
            return 1.0
        if skew < 0:
            return -1.0
    q = max(1, vals.size // 100)
    ordered = np.sort(vals)
    top_pos = float(ordered[-q:].sum())
    top_neg = float(-ordered[:q].sum())
    return -1.0 if top_neg > top_pos else 1.0


def coattention_maps(group: GroupFeatureSet, m: int = 1, stats: GroupStats | None = None):
    """Per-image co-attention maps from the m leading projections.

    Returns a list over images (input order) of m ScalarMaps each. A
    degenerate (zero-variance) group yields all-zero maps.
    """
    if stats is None:
        try:
            stats = group_stats(group, m)
        except DegenerateCovarianceError:
            return [
                [ScalarMap(np.zeros((s.fheight, s.fwidth))) for _ in range(m)]
                for s in group.stacks
            ]
    order = sorted(range(group.n_images), key=lambda i: group.ids[i])
    out = [[None] * m for _ in range(group.n_images)]
    for vec_idx in range(m):
        w = stats.eigenvectors[:, vec_idx]
        grids = {i: project(w, group.stacks[i], stats.mean) for i in order}
        pooled = np.concatenate([grids[i].ravel() for i in order])
        sign = orientation_sign(pooled)
        for i in range(group.n_images):
            out[i][vec_idx] = ScalarMap(minmax_normalize(sign * grids[i]))
    return out
