"""Dataset-level semantic clustering of per-image segments.

Each oversegmentation fragment becomes a :class:`SegmentRecord` with a
descriptor fusing crop appearance, a fixed-size shape silhouette and
normalized position.  Descriptors from the whole dataset are k-means
clustered so matching anatomy receives the same class across images.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, ClusterMixin

from .cluster import kmeans
from .errors import ConfigError, DescriptorError, ShapeError
from .validation import check_gray_image, check_label_mask

SHAPE_SIZE = 16
HIST_BINS = 64


@dataclass
class SegmentRecord:
    """One connected (or label-wise) fragment of a segmentation mask."""

    image_id: str
    label: int
    bbox: tuple  # (x, y, w, h) in pixel coordinates
    pixel_count: int
    mask: np.ndarray = field(repr=False)  # bool, full image resolution


@dataclass
class SegmentDescriptor:
    """Per-segment feature blocks and their fused vector."""

    f_image: np.ndarray
    f_mask: np.ndarray
    f_pos: np.ndarray
    fused: np.ndarray


def _bbox_of(mask):
    ys, xs = np.nonzero(mask)
    y0, y1 = int(ys.min()), int(ys.max())
    x0, x1 = int(xs.min()), int(xs.max())
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def extract_segments(mask, image=None, image_id="", split_components=False):
    """Turn a label mask into per-segment records.

    When ``image`` is given and the mask is coarser, the mask is first
    upscaled to the image resolution.  ``split_components`` breaks each
    label into its 4-connected components, giving one record apiece.
    """
    mask = check_label_mask(mask)
    if image is not None:
        image = check_gray_image(image)
        if mask.shape != image.shape:
            from .postprocess import upscale_mask

            mask = upscale_mask(mask, image.shape)
    records = []
    for label in np.unique(mask):
        support = mask == label
        if split_components:
            comp, n_comp = ndimage.label(support)
            parts = [comp == i for i in range(1, n_comp + 1)]
        else:
            parts = [support]
        for part in parts:
            records.append(
                SegmentRecord(
                    image_id=image_id,
                    label=int(label),
                    bbox=_bbox_of(part),
                    pixel_count=int(part.sum()),
                    mask=part,
                )
            )
    return records


def _overlap_matrix(n_src, n_dst):
    """Row-stochastic matrix averaging n_src cells into n_dst cells."""
    edges_src = np.arange(n_src + 1)
    edges_dst = np.arange(n_dst + 1) * (n_src / n_dst)
    m = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        lo, hi = edges_dst[i], edges_dst[i + 1]
        j0 = int(np.floor(lo))
        j1 = min(int(np.ceil(hi)), n_src)
        for j in range(j0, j1):
            overlap = min(hi, edges_src[j + 1]) - max(lo, edges_src[j])
            if overlap > 0:
                m[i, j] = overlap
    return m / (n_src / n_dst)


def _area_resample(a, out_h, out_w):
    rows = _overlap_matrix(a.shape[0], out_h)
    cols = _overlap_matrix(a.shape[1], out_w)
    return rows @ a @ cols.T


def shape_embedding(record):
    """Scale-normalized silhouette of a segment.

    The mask is cropped to its bounding box, area-resampled to a
    16 x 16 patch and flattened to a unit-norm 256-vector, making the
    embedding invariant to uniform rescaling of the segment.
    """
    x, y, w, h = record.bbox
    crop = record.mask[y : y + h, x : x + w].astype(np.float64)
    resized = _area_resample(crop, SHAPE_SIZE, SHAPE_SIZE)
    v = resized.ravel()
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DescriptorError(f"segment {record.label} has an empty silhouette")
    return v / norm


def position_embedding(record, image_shape):
    """Normalized centroid and bounding-box extent: (cx, cy, w, h)."""
    img_h, img_w = image_shape
    ys, xs = np.nonzero(record.mask)
    cx = (xs.mean() + 0.5) / img_w
    cy = (ys.mean() + 0.5) / img_h
    _, _, w, h = record.bbox
    return np.array([cx, cy, w / img_w, h / img_h])


def crop_histogram(image, record, bins=HIST_BINS):
    """Intensity histogram of the bounding-box crop, unit-normalized.

    This is the appearance fallback used when no learned crop
    embeddings are available.
    """
    image = check_gray_image(image)
    x, y, w, h = record.bbox
    crop = image[y : y + h, x : x + w]
    idx = np.minimum((crop * bins).astype(np.int64), bins - 1)
    hist = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    norm = np.linalg.norm(hist)
    return hist / norm if norm > 0 else hist


def _unit(v):
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v.copy()


def fuse(f_image, f_mask, f_pos, lambda_mask=0.5, lambda_pos=0.5):
    """Concatenate the descriptor blocks with per-block normalization.

    Every block is L2-normalized on its own, then the shape and
    position blocks are scaled by their lambda weights.  The fused
    length is always the sum of the block lengths; a missing appearance
    block is an error rather than a silent hole.
    """
    if f_image is None:
        raise DescriptorError(
            "appearance features missing: provide crop embeddings or a "
            "crop histogram for every segment"
        )
    if lambda_mask < 0 or lambda_pos < 0:
        raise ConfigError("lambda weights must be >= 0")
    f_image = np.asarray(f_image, dtype=np.float64)
    f_mask = np.asarray(f_mask, dtype=np.float64)
    f_pos = np.asarray(f_pos, dtype=np.float64)
    fused = np.concatenate(
        [_unit(f_image), lambda_mask * _unit(f_mask), lambda_pos * _unit(f_pos)]
    )
    return SegmentDescriptor(f_image=f_image, f_mask=f_mask, f_pos=f_pos, fused=fused)


def build_descriptor(record, image, image_shape=None, crop_features=None,
                     lambda_mask=0.5, lambda_pos=0.5):
    """Full descriptor for one record.

    ``crop_features`` overrides the histogram appearance block; pass
    the matching row of a learned crop-embedding matrix.
    """
    shape = image_shape or image.shape
    f_image = crop_features if crop_features is not None else crop_histogram(image, record)
    return fuse(
        f_image,
        shape_embedding(record),
        position_embedding(record, shape),
        lambda_mask=lambda_mask,
        lambda_pos=lambda_pos,
    )


def cluster_dataset(descriptors, n_classes, seed=0):
    """K-means over fused descriptors from the whole dataset.

    ``descriptors`` is a sequence of :class:`SegmentDescriptor` or raw
    fused vectors; returns one class id per descriptor.
    """
    if n_classes < 1:
        raise ConfigError(f"n_classes must be >= 1, got {n_classes}")
    rows = [
        d.fused if isinstance(d, SegmentDescriptor) else np.asarray(d, dtype=np.float64)
        for d in descriptors
    ]
    if not rows:
        raise DescriptorError("no segment descriptors to cluster")
    lengths = {r.shape[0] for r in rows}
    if len(lengths) != 1:
        raise ShapeError(f"descriptor lengths differ: {sorted(lengths)}")
    x = np.vstack(rows)
    labels, _ = kmeans(x, n_classes, seed=seed)
    return labels


def render_semantic_mask(records, classes, image_shape):
    """Paint per-segment class ids back into an image-sized mask.

    Overlapping records are resolved by larger-segment priority; since
    step-I records partition the image this only matters for externally
    supplied record sets.
    """
    if len(records) != len(classes):
        raise ShapeError(
            f"{len(records)} records but {len(classes)} class assignments"
        )
    out = np.zeros(image_shape, dtype=np.int64)
    order = sorted(range(len(records)), key=lambda i: (records[i].pixel_count, i))
    for i in order:
        out[records[i].mask] = int(classes[i])
    return out


class SemanticClusterer(BaseEstimator, ClusterMixin):
    """Dataset-level k-means over fused segment descriptors."""

    def __init__(self, n_classes=6, lambda_mask=0.5, lambda_pos=0.5, random_state=0):
        self.n_classes = n_classes
        self.lambda_mask = lambda_mask
        self.lambda_pos = lambda_pos
        self.random_state = random_state

    def fit(self, X, y=None):
        """Cluster a stacked (n_segments, dim) fused-descriptor matrix."""
        self.labels_ = cluster_dataset(
            list(np.asarray(X, dtype=np.float64)),
            self.n_classes,
            seed=self.random_state,
        )
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_
