"""Classical zero-shot segmentation baselines.

``slic`` is localized k-means over (scaled intensity, x, y) from a
square seed grid with a 4-connectivity post-pass.  ``felzenszwalb`` is
greedy minimum-spanning-forest merging with the adaptive threshold
``tau(C) = scale / |C|`` over 8-connected intensity differences.  Both
are deterministic for fixed inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClusterMixin

from .errors import ConfigError
from .preprocess import gaussian_blur
from .validation import check_gray_image

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class SlicParams:
    n_superpixels: int = 100
    compactness: float = 10.0
    max_iters: int = 10

    def validate(self):
        if self.n_superpixels < 1:
            raise ConfigError(f"n_superpixels must be >= 1, got {self.n_superpixels}")
        if self.compactness <= 0:
            raise ConfigError(f"compactness must be > 0, got {self.compactness}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        return self


@dataclass
class FzParams:
    scale: float = 100.0
    sigma: float = 0.8
    min_size: int = 20

    def validate(self):
        if self.scale <= 0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.min_size < 1:
            raise ConfigError(f"min_size must be >= 1, got {self.min_size}")
        return self


def _relabel_sequential(labels):
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    lut = np.empty(int(uniq.max()) + 1, dtype=np.int64)
    for new, o in enumerate(order):
        lut[uniq[o]] = new
    return lut[labels]


def _enforce_connectivity(labels):
    """Keep each label's largest 4-connected component, absorb the rest."""
    out = np.full_like(labels, -1)
    for label in np.unique(labels):
        comp, n_comp = ndimage.label(labels == label, structure=_CROSS)
        if n_comp == 0:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        keep = int(np.argmax(sizes)) + 1
        out[comp == keep] = label
    while True:
        orphan = out < 0
        if not orphan.any():
            break
        comp, n_comp = ndimage.label(orphan, structure=_CROSS)
        progress = False
        for ci in range(1, n_comp + 1):
            m = comp == ci
            ring = ndimage.binary_dilation(m, structure=_CROSS) & ~m & (out >= 0)
            if not ring.any():
                continue
            vals, cnts = np.unique(out[ring], return_counts=True)
            out[m] = int(vals[np.argmax(cnts)])
            progress = True
        if not progress:  # pragma: no cover - cannot happen once one label is kept
            out[orphan] = 0
            break
    return out


def slic(image, params=None, seed=0):
    """Superpixels by localized k-means; returns labels 0..L-1.

    ``seed`` is accepted for interface symmetry; the seed grid and
    update order make the algorithm deterministic without it.
    """
    del seed
    img = check_gray_image(image)
    params = (params or SlicParams()).validate()
    h, w = img.shape
    n_pixels = h * w
    n_target = min(params.n_superpixels, n_pixels)
    interval = np.sqrt(n_pixels / n_target)
    n_y = max(1, int(round(h / interval)))
    n_x = max(1, int(round(w / interval)))

    # seeds snap to the pixel lattice so a fully dense request still
    # gives every pixel its own nearest center
    cy = np.floor((np.arange(n_y)[:, None] + 0.5) * h / n_y)
    cx = np.floor((np.arange(n_x)[None, :] + 0.5) * w / n_x)
    cy = np.broadcast_to(cy, (n_y, n_x)).ravel()
    cx = np.broadcast_to(cx, (n_y, n_x)).ravel()
    scale = 100.0 / params.compactness
    feat = img * scale
    cf = feat[np.minimum(cy.astype(int), h - 1), np.minimum(cx.astype(int), w - 1)]
    centers = np.column_stack([cf, cy, cx])

    yy, xx = np.mgrid[0:h, 0:w]
    yy = yy.astype(np.float64)
    xx = xx.astype(np.float64)
    labels = np.zeros((h, w), dtype=np.int64)
    radius = interval
    for _ in range(params.max_iters):
        best = np.full((h, w), np.inf)
        labels.fill(-1)
        for c in range(centers.shape[0]):
            f0, y0, x0 = centers[c]
            ylo = max(0, int(np.floor(y0 - radius)))
            yhi = min(h, int(np.ceil(y0 + radius)) + 1)
            xlo = max(0, int(np.floor(x0 - radius)))
            xhi = min(w, int(np.ceil(x0 + radius)) + 1)
            win = (slice(ylo, yhi), slice(xlo, xhi))
            d = (
                (feat[win] - f0) ** 2
                + (yy[win] - y0) ** 2
                + (xx[win] - x0) ** 2
            )
            closer = d < best[win]
            best[win][closer] = d[closer]
            labels[win][closer] = c
        stray = labels < 0
        if stray.any():
            # pixels outside every search window: assign globally
            py, px = np.nonzero(stray)
            d = (
                (feat[py, px][:, None] - centers[:, 0][None, :]) ** 2
                + (py[:, None] - centers[:, 1][None, :]) ** 2
                + (px[:, None] - centers[:, 2][None, :]) ** 2
            )
            labels[py, px] = np.argmin(d, axis=1)
        for c in range(centers.shape[0]):
            members = labels == c
            if members.any():
                centers[c, 0] = feat[members].mean()
                centers[c, 1] = yy[members].mean()
                centers[c, 2] = xx[members].mean()

    return _relabel_sequential(_enforce_connectivity(labels))


def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


def _build_edges(img):
    h, w = img.shape
    idx = np.arange(h * w).reshape(h, w)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),
        (idx[:-1, :], idx[1:, :]),
        (idx[:-1, :-1], idx[1:, 1:]),
        (idx[:-1, 1:], idx[1:, :-1]),
    ]
    a = np.concatenate([p.ravel() for p, _ in pairs])
    b = np.concatenate([q.ravel() for _, q in pairs])
    flat = img.ravel()
    weights = np.abs(flat[a] - flat[b])
    return a, b, weights


def _segment_graph(n_nodes, a, b, weights, scale, min_size):
    """Greedy forest merging; deterministic via full lexicographic order."""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    order = np.lexsort((hi, lo, weights))
    parent = np.arange(n_nodes, dtype=np.int64)
    size = np.ones(n_nodes, dtype=np.int64)
    threshold = np.full(n_nodes, float(scale))
    for e in order:
        ra = _find(parent, int(a[e]))
        rb = _find(parent, int(b[e]))
        if ra == rb:
            continue
        wgt = weights[e]
        if wgt <= threshold[ra] and wgt <= threshold[rb]:
            root, child = (ra, rb) if ra < rb else (rb, ra)
            parent[child] = root
            size[root] += size[child]
            threshold[root] = wgt + scale / size[root]
    if min_size > 1:
        for e in order:
            ra = _find(parent, int(a[e]))
            rb = _find(parent, int(b[e]))
            if ra == rb:
                continue
            if size[ra] < min_size or size[rb] < min_size:
                root, child = (ra, rb) if ra < rb else (rb, ra)
                parent[child] = root
                size[root] += size[child]
    return np.array([_find(parent, i) for i in range(n_nodes)], dtype=np.int64)


def felzenszwalb(image, params=None):
    """Graph-based segmentation; returns labels 0..L-1."""
    img = check_gray_image(image)
    params = (params or FzParams()).validate()
    if params.sigma > 0:
        img = gaussian_blur(img, params.sigma)
    h, w = img.shape
    if h * w == 1:
        return np.zeros((1, 1), dtype=np.int64)
    a, b, weights = _build_edges(img)
    roots = _segment_graph(h * w, a, b, weights, params.scale, params.min_size)
    return _relabel_sequential(roots.reshape(h, w))


class SlicSegmenter(BaseEstimator, ClusterMixin):
    """Estimator wrapper over :func:`slic`; ``fit`` takes one image."""

    def __init__(self, n_superpixels=100, compactness=10.0, max_iters=10):
        self.n_superpixels = n_superpixels
        self.compactness = compactness
        self.max_iters = max_iters

    def fit(self, X, y=None):
        params = SlicParams(
            n_superpixels=self.n_superpixels,
            compactness=self.compactness,
            max_iters=self.max_iters,
        )
        self.labels_ = slic(X, params)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_


class FelzenszwalbSegmenter(BaseEstimator, ClusterMixin):
    """Estimator wrapper over :func:`felzenszwalb`."""

    def __init__(self, scale=100.0, sigma=0.8, min_size=20):
        self.scale = scale
        self.sigma = sigma
        self.min_size = min_size

    def fit(self, X, y=None):
        params = FzParams(scale=self.scale, sigma=self.sigma, min_size=self.min_size)
        self.labels_ = felzenszwalb(X, params)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_
