"""Segmentation quality metrics.

Covers pairwise DICE, optimal and majority label matching between
pseudo-labels and ground truth, cross-image label consistency, and the
superpixel scores (undersegmentation error, boundary recall).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ShapeError
from .validation import check_label_mask


def dice(a, b):
    """DICE overlap of two binary masks; two empty masks score 1."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / denom


def _overlap_counts(pred, gt):
    pred = check_label_mask(pred, name="predicted mask")
    gt = check_label_mask(gt, name="ground-truth mask")
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    p_labels, p_idx = np.unique(pred, return_inverse=True)
    g_labels, g_idx = np.unique(gt, return_inverse=True)
    counts = np.bincount(
        p_idx.ravel() * g_labels.size + g_idx.ravel(),
        minlength=p_labels.size * g_labels.size,
    ).reshape(p_labels.size, g_labels.size)
    return counts, p_labels, g_labels


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching pseudo-labels against ground-truth classes."""

    mapping: dict  # pseudo label -> gt label
    objective: float
    method: str
    unmatched: tuple = ()


def hungarian_match(pred, gt):
    """Injective assignment of pseudo-labels to gt classes.

    Maximizes the total per-pair DICE; with more pseudo-labels than
    classes the surplus labels are left unmatched and reported.
    """
    counts, p_labels, g_labels = _overlap_counts(pred, gt)
    p_sizes = counts.sum(axis=1)
    g_sizes = counts.sum(axis=0)
    denom = p_sizes[:, None] + g_sizes[None, :]
    dice_matrix = np.where(denom > 0, 2.0 * counts / np.maximum(denom, 1), 0.0)
    rows, cols = linear_sum_assignment(-dice_matrix)
    mapping = {int(p_labels[r]): int(g_labels[c]) for r, c in zip(rows, cols)}
    objective = float(dice_matrix[rows, cols].sum())
    unmatched = tuple(int(l) for l in p_labels if int(l) not in mapping)
    return MatchResult(mapping=mapping, objective=objective,
                       method="hungarian", unmatched=unmatched)


def majority_match(pred, gt):
    """Map every pseudo-label to the gt class covering most of it.

    Ties resolve to the lower gt label.  The objective is the total
    overlap captured by the chosen classes.
    """
    counts, p_labels, g_labels = _overlap_counts(pred, gt)
    best = np.argmax(counts, axis=1)
    mapping = {int(p): int(g_labels[b]) for p, b in zip(p_labels, best)}
    objective = float(counts[np.arange(p_labels.size), best].sum())
    return MatchResult(mapping=mapping, objective=objective, method="majority")


def apply_mapping(pred, match, fill=0):
    """Rewrite pseudo-labels through a match mapping.

    Unmatched pseudo-labels take ``fill``.
    """
    pred = check_label_mask(pred, name="predicted mask")
    out = np.full_like(pred, fill)
    for p, g in match.mapping.items():
        out[pred == p] = g
    return out


def label_consistency(matches, gt_presence):
    """Cross-image stability of the pseudo-label assignment.

    ``matches`` holds one :class:`MatchResult` per image and
    ``gt_presence`` the set of gt classes present in that image.  For
    each class the dataset-prevalent pseudo-label is found and the
    score is the percentage of images containing the class where that
    assignment holds.  Returns ``(overall, per_class)`` with the
    overall score the unweighted class mean.  Classes present nowhere
    are excluded with a warning.
    """
    if len(matches) != len(gt_presence):
        raise ShapeError(
            f"{len(matches)} match results but {len(gt_presence)} presence sets"
        )
    all_classes = sorted(set().union(*gt_presence)) if gt_presence else []
    assignments = []  # per image: gt class -> sorted tuple of pseudo labels
    for match in matches:
        inv = {}
        for p, g in match.mapping.items():
            inv.setdefault(g, []).append(p)
        assignments.append({g: tuple(sorted(ps)) for g, ps in inv.items()})

    per_class = {}
    for cls in all_classes:
        votes = {}
        for img_assign, present in zip(assignments, gt_presence):
            if cls not in present:
                continue
            chosen = img_assign.get(cls, ())
            votes[chosen] = votes.get(chosen, 0) + 1
        n_present = sum(votes.values())
        if n_present == 0:
            warnings.warn(f"gt class {cls} appears in no image; skipped", stacklevel=2)
            continue
        prevalent = min(
            votes.items(), key=lambda kv: (-kv[1], kv[0])
        )[0]
        per_class[cls] = 100.0 * votes[prevalent] / n_present
    if not per_class:
        warnings.warn("no ground-truth classes present anywhere", stacklevel=2)
        return 0.0, {}
    overall = float(np.mean(list(per_class.values())))
    return overall, per_class


def undersegmentation_error(superpixels, gt):
    """Average leakage of superpixels across ground-truth regions.

    For each superpixel the pixels outside its best-covered gt region
    count as error; the total is normalized by the image area, so the
    result sits in [0, 1) and is 0 exactly when every superpixel nests
    inside one gt region.
    """
    counts, _, _ = _overlap_counts(superpixels, gt)
    n = counts.sum()
    leaked = n - counts.max(axis=1).sum()
    return float(leaked / n)


def _boundary_map(mask):
    mask = np.asarray(mask)
    b = np.zeros(mask.shape, dtype=bool)
    b[:-1, :] |= mask[:-1, :] != mask[1:, :]
    b[1:, :] |= mask[:-1, :] != mask[1:, :]
    b[:, :-1] |= mask[:, :-1] != mask[:, 1:]
    b[:, 1:] |= mask[:, :-1] != mask[:, 1:]
    return b


def boundary_recall(pred, gt, d=3):
    """Fraction of gt boundary pixels with a predicted boundary nearby.

    Boundaries are pixels whose 4-neighborhood crosses a label change;
    a gt boundary pixel counts as recalled when a predicted boundary
    pixel lies within Chebyshev distance ``d``.  A ground truth with no
    boundary at all scores 1 with a warning.
    """
    if d < 0:
        raise ConfigError(f"d must be >= 0, got {d}")
    pred = check_label_mask(pred, name="predicted mask")
    gt = check_label_mask(gt, name="ground-truth mask")
    if pred.shape != gt.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    gt_b = _boundary_map(gt)
    if not gt_b.any():
        warnings.warn("ground truth has no boundary pixels; recall is 1", stacklevel=2)
        return 1.0
    pred_b = _boundary_map(pred)
    if d > 0:
        footprint = np.ones((2 * d + 1, 2 * d + 1), dtype=bool)
        pred_b = ndimage.binary_dilation(pred_b, structure=footprint)
    return float((gt_b & pred_b).sum() / gt_b.sum())
