"""Deterministic k-means (greedy k-means++ seeding, Lloyd iterations).

Written against a fixed seed and fixed tie-breaking so repeated runs
produce identical labels: assignment ties go to the lowest cluster
index, empty clusters are refilled with the farthest point, restarts
are compared by strict inertia improvement, and iteration stops when
no center moves more than ``tol``.
"""

import warnings

import numpy as np

from .errors import ConfigError
from .validation import check_feature_matrix


def _pairwise_sq_dists(x, centers):
    sq_x = np.einsum("ij,ij->i", x, x)
    sq_c = np.einsum("ij,ij->i", centers, centers)
    d = sq_x[:, None] + sq_c[None, :] - 2.0 * (x @ centers.T)
    return np.clip(d, 0.0, None)


def _plus_plus_init(x, k, rng):
    """Greedy k-means++: several D^2-sampled candidates per center, the
    one shrinking the potential most wins."""
    n = x.shape[0]
    n_trials = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = _pairwise_sq_dists(x, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            probs = np.full(n, 1.0 / n)
        else:
            probs = closest / total
        candidates = rng.choice(n, size=n_trials, p=probs)
        best_pot = np.inf
        best_candidate = int(candidates[0])
        best_closest = None
        for cand in candidates:
            cand_closest = np.minimum(
                closest, _pairwise_sq_dists(x, x[cand : cand + 1])[:, 0]
            )
            pot = cand_closest.sum()
            if pot < best_pot:
                best_pot = pot
                best_candidate = int(cand)
                best_closest = cand_closest
        centers[i] = x[best_candidate]
        closest = best_closest
    return centers


def _lloyd(x, centers, max_iter, tol):
    n = x.shape[0]
    n_clusters = centers.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d = _pairwise_sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        dist_to_own = d[np.arange(n), labels].copy()
        new_centers = np.empty_like(centers)
        for c in range(n_clusters):
            members = labels == c
            if members.any():
                new_centers[c] = x[members].mean(axis=0)
            else:
                # refill with the point farthest from its center
                far = int(np.argmax(dist_to_own))
                new_centers[c] = x[far]
                labels[far] = c
                dist_to_own[far] = -1.0
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift <= tol:
            break
    d = _pairwise_sq_dists(x, centers)
    labels = np.argmin(d, axis=1).astype(np.int64)
    inertia = float(d[np.arange(n), labels].sum())
    return labels, centers, inertia


def kmeans(x, n_clusters, seed=0, max_iter=300, tol=1e-6, n_init=10):
    """Cluster rows of ``x`` into ``n_clusters`` groups.

    Runs ``n_init`` seeded restarts and keeps the lowest-inertia
    solution.  Returns ``(labels, centers)``.  If ``x`` has fewer
    distinct rows than requested clusters the count is reduced with a
    warning.
    """
    x = check_feature_matrix(x, name="samples")
    if n_clusters < 1:
        raise ConfigError(f"n_clusters must be >= 1, got {n_clusters}")
    if n_init < 1:
        raise ConfigError(f"n_init must be >= 1, got {n_init}")
    n = x.shape[0]
    n_distinct = np.unique(x, axis=0).shape[0]
    if n_distinct < n_clusters:
        warnings.warn(
            f"only {n_distinct} distinct samples for {n_clusters} clusters; "
            f"reducing to {n_distinct}",
            stacklevel=2,
        )
        n_clusters = n_distinct
    if n_clusters == 1:
        return np.zeros(n, dtype=np.int64), x.mean(axis=0, keepdims=True)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers0 = _plus_plus_init(x, n_clusters, rng)
        labels, centers, inertia = _lloyd(x, centers0, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best[0], best[1]


def relabel_by_size(labels):
    """Renumber labels so 0 is the most populous; ties keep old order."""
    labels = np.asarray(labels)
    present, counts = np.unique(labels, return_counts=True)
    order = np.argsort(-counts, kind="stable")
    mapping = np.empty(present.max() + 1, dtype=np.int64)
    for new, idx in enumerate(order):
        mapping[present[idx]] = new
    return mapping[labels]
