"""Patch-graph affinity construction.

The image is partitioned into non-overlapping k x k patches (centered,
borders cropped) and up to four pairwise similarity matrices are built
over them:

* feature affinity: thresholded correlation of per-patch feature rows,
* SSD affinity: Gaussian kernel over mean squared intensity difference,
* MI affinity: Gaussian kernel over an entropy-ratio dissimilarity,
* positional affinity: k-nearest-neighbor closeness of normalized
  patch coordinates.

Their weighted sum, clamped to be non-negative, is the graph adjacency
consumed by spectral clustering.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, DegenerateFeatureError, ShapeError
from .validation import check_feature_matrix, check_gray_image


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping k x k patches of an image in row-major order."""

    patches: np.ndarray
    shape: tuple
    patch_size: int
    offset: tuple

    @property
    def n_patches(self):
        return self.patches.shape[0]


def extract_patch_grid(img, patch_size):
    """Split an image into its centered grid of k x k patches.

    The image is center-cropped to the largest multiple of k in each
    dimension; an image smaller than one patch is an error.
    """
    img = check_gray_image(img)
    if patch_size < 1:
        raise ConfigError(f"patch_size must be >= 1, got {patch_size}")
    h, w = img.shape
    k = int(patch_size)
    n_h, n_w = h // k, w // k
    if n_h == 0 or n_w == 0:
        raise ShapeError(f"image {h}x{w} is smaller than one {k}x{k} patch")
    off_y = (h - n_h * k) // 2
    off_x = (w - n_w * k) // 2
    crop = img[off_y : off_y + n_h * k, off_x : off_x + n_w * k]
    patches = (
        crop.reshape(n_h, k, n_w, k).transpose(0, 2, 1, 3).reshape(n_h * n_w, k, k)
    )
    return PatchGrid(patches=patches, shape=(n_h, n_w), patch_size=k, offset=(off_y, off_x))


def position_encoding(n_h, n_w):
    """Normalized (x, y) coordinates per patch, row-major.

    Both axes are linearly interpolated over [0, 1]; a single row or
    column collapses to coordinate 0.
    """
    if n_h < 1 or n_w < 1:
        raise ShapeError(f"grid must be at least 1x1, got {n_h}x{n_w}")
    ys = np.linspace(0.0, 1.0, n_h) if n_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, 1.0, n_w) if n_w > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def feature_affinity(features):
    """Correlation affinity between feature rows, thresholded at zero.

    Rows are L2-normalized first, so entries are cosine similarities;
    anti-correlated pairs are cut to 0 and the diagonal is exactly 1.
    """
    f = check_feature_matrix(features, name="features")
    norms = np.linalg.norm(f, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateFeatureError(
            f"feature row {int(zero[0])} has zero norm and cannot be normalized"
        )
    fn = f / norms[:, None]
    w = fn @ fn.T
    w = (w + w.T) / 2.0
    np.clip(w, 0.0, 1.0, out=w)
    np.fill_diagonal(w, 1.0)
    return w


def _entropy_from_counts(counts):
    c = counts[counts > 0].astype(np.float64)
    n = c.sum()
    return np.log2(n) - (c * np.log2(c)).sum() / n


def _mi_distance(flat, bins):
    n, m = flat.shape
    q = np.minimum((flat * bins).astype(np.int64), bins - 1)
    marg = np.zeros(n)
    for i in range(n):
        marg[i] = _entropy_from_counts(np.bincount(q[i], minlength=bins))
    bins_sq = bins * bins
    row_offsets = np.arange(n, dtype=np.int64)[:, None] * bins_sq
    log_m = np.log2(m)
    d = np.empty((n, n))
    for i in range(n):
        codes = q[i][None, :] * bins + q + row_offsets
        uniq, cnt = np.unique(codes.ravel(), return_counts=True)
        rows = uniq // bins_sq
        s = np.zeros(n)
        np.add.at(s, rows, cnt * np.log2(cnt))
        h12 = log_m - s / m
        with np.errstate(divide="ignore", invalid="ignore"):
            mi = (marg[i] + marg) / h12
        degenerate = h12 <= 0
        if np.any(degenerate):
            same = np.all(q[degenerate] == q[i][None, :], axis=1)
            mi[degenerate] = np.where(same, 2.0, 1.0)
        d[i] = 1.0 - mi
    d = (d + d.T) / 2.0
    # self-MI is the entropy ratio 2H/H = 2 by definition, so the
    # diagonal is pinned rather than left to summation rounding
    np.fill_diagonal(d, -1.0)
    return d


def patchwise_distance(patches, metric="ssd", mi_bins=32):
    """Pairwise patch dissimilarity matrix.

    ``ssd`` entries are squared intensity differences summed over the
    patch and divided by k*k, keeping values in [0, 1].  ``mi`` entries
    are ``1 - MI`` with the mutual information expressed as the entropy
    ratio ``(H(P1) + H(P2)) / H(P1, P2)`` over ``mi_bins``-bin
    histograms; identical patches score MI = 2 (distance -1) and
    independent patches score MI = 1 (distance 0).  Patch pairs with
    zero joint entropy are defined to have MI 2 when they are equal
    constants and MI 1 otherwise.
    """
    if isinstance(patches, PatchGrid):
        patches = patches.patches
    arr = np.asarray(patches, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"patches must be (n, k, k), got shape {arr.shape}")
    n = arr.shape[0]
    flat = arr.reshape(n, -1)
    if metric == "ssd":
        sq = np.einsum("ij,ij->i", flat, flat)
        d = sq[:, None] + sq[None, :] - 2.0 * (flat @ flat.T)
        d /= flat.shape[1]
        d = (d + d.T) / 2.0
        np.clip(d, 0.0, None, out=d)
        np.fill_diagonal(d, 0.0)
        return d
    if metric == "mi":
        if mi_bins < 2:
            raise ConfigError(f"mi_bins must be >= 2, got {mi_bins}")
        return _mi_distance(flat, int(mi_bins))
    raise ConfigError(f"unknown patch metric {metric!r}")


def gaussian_kernel(distances, delta):
    """Map a dissimilarity matrix to affinities via ``exp(-delta * D)``.

    ``D = 0`` maps to 1; the MI distance reaches -1 for identical
    patches, so MI affinities may exceed 1 (up to ``exp(delta)``).
    """
    if delta <= 0:
        raise ConfigError(f"delta must be > 0, got {delta}")
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ShapeError(f"distance matrix must be square, got shape {d.shape}")
    w = np.exp(-delta * d)
    return (w + w.T) / 2.0


def positional_affinity(psi, knn):
    """Closeness of normalized patch positions, restricted to neighbors.

    ``w[i, j] = max(0, 1 - |psi_i - psi_j|)`` when i is among the knn
    nearest patches of j (self excluded), 0 otherwise; the result is
    symmetrized with the elementwise maximum and the diagonal set to 1.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if psi.ndim != 2 or psi.shape[1] != 2:
        raise ShapeError(f"psi must be (n, 2), got shape {psi.shape}")
    n = psi.shape[0]
    if not 1 <= knn < max(n, 2):
        raise ConfigError(f"knn must be in [1, n_patches), got {knn} for n={n}")
    diff = psi[:, None, :] - psi[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    d = np.sqrt(d2)
    order = np.argsort(d2, axis=0, kind="stable")
    neighbor = np.zeros((n, n), dtype=bool)
    take = order[1 : knn + 1, :]
    neighbor[take.ravel(), np.tile(np.arange(n), knn)] = True
    w = np.clip(1.0 - d, 0.0, None) * neighbor
    w = np.maximum(w, w.T)
    np.fill_diagonal(w, 1.0)
    return w


def combine(w_feat=None, w_ssd=None, w_mi=None, w_pos=None,
            c_ssd=1.0, c_mi=1.0, c_pos=0.1):
    """Weighted sum of the available affinity terms.

    The feature term enters with weight 1 when present; absent terms
    are skipped.  Negative totals are clamped to 0.
    """
    for name, c in (("c_ssd", c_ssd), ("c_mi", c_mi), ("c_pos", c_pos)):
        if c < 0:
            raise ConfigError(f"{name} must be >= 0, got {c}")
    terms = [
        (w_feat, 1.0),
        (w_ssd, c_ssd),
        (w_mi, c_mi),
        (w_pos, c_pos),
    ]
    present = [(np.asarray(w, dtype=np.float64), c) for w, c in terms if w is not None]
    if not present:
        raise ConfigError("no affinity terms supplied")
    n = present[0][0].shape[0]
    for w, _ in present:
        if w.ndim != 2 or w.shape != (n, n):
            raise ShapeError(
                f"affinity terms disagree on size: {w.shape} vs {(n, n)}"
            )
    total = np.zeros((n, n))
    for w, c in present:
        if c != 0.0:
            total += c * w
    total = (total + total.T) / 2.0
    np.clip(total, 0.0, None, out=total)
    return total


class AffinityBuilder(BaseEstimator):
    """Configured builder for the combined patch-affinity matrix.

    Terms with a zero coefficient are never computed; supplying
    per-patch features enables the feature-correlation term.
    """

    def __init__(self, patch_size=8, c_ssd=1.0, c_mi=1.0, c_pos=0.1,
                 delta=5.0, knn=8, mi_bins=32):
        self.patch_size = patch_size
        self.c_ssd = c_ssd
        self.c_mi = c_mi
        self.c_pos = c_pos
        self.delta = delta
        self.knn = knn
        self.mi_bins = mi_bins

    def build(self, image, features=None):
        """Return ``(affinity, grid)`` for one image.

        ``features`` is an optional (n_patches, dim) matrix aligned
        with the row-major patch grid.
        """
        grid = extract_patch_grid(image, self.patch_size)
        n = grid.n_patches
        w_feat = None
        if features is not None:
            f = check_feature_matrix(features, name="features")
            if f.shape[0] != n:
                raise ShapeError(
                    f"features have {f.shape[0]} rows but the image yields "
                    f"{n} patches ({grid.shape[0]}x{grid.shape[1]})"
                )
            w_feat = feature_affinity(f)
        if w_feat is None and self.c_ssd == 0 and self.c_mi == 0 and self.c_pos == 0:
            raise ConfigError(
                "no affinity terms enabled: supply features or a positive "
                "coefficient for ssd/mi/pos"
            )
        w_ssd = w_mi = w_pos = None
        if self.c_ssd > 0:
            w_ssd = gaussian_kernel(
                patchwise_distance(grid, "ssd"), self.delta
            )
        if self.c_mi > 0:
            w_mi = gaussian_kernel(
                patchwise_distance(grid, "mi", mi_bins=self.mi_bins), self.delta
            )
        if self.c_pos > 0 and n > 1:
            knn = min(self.knn, n - 1)
            w_pos = positional_affinity(position_encoding(*grid.shape), knn)
        w = combine(
            w_feat=w_feat, w_ssd=w_ssd, w_mi=w_mi, w_pos=w_pos,
            c_ssd=self.c_ssd, c_mi=self.c_mi, c_pos=self.c_pos,
        )
        return w, grid
