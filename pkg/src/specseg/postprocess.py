"""Mask upscaling and mean-field CRF refinement.

The CRF holds a softened one-hot unary fixed and iterates mean-field
updates with two Potts-compatibility pairwise kernels: a spatial
Gaussian and a bilateral Gaussian over (position, intensity).  Kernels
are evaluated exactly on truncated windows (radius 3 sigma), so small
sigmas keep the cost proportional to the window area.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ShapeError
from .validation import check_gray_image, check_label_mask


@dataclass
class CrfParams:
    """Mean-field CRF settings."""

    n_iters: int = 5
    spatial_sigma: float = 3.0
    bilateral_sigma_xy: float = 40.0
    bilateral_sigma_int: float = 0.1
    w_spatial: float = 3.0
    w_bilateral: float = 5.0
    unary_confidence: float = 0.7

    def validate(self):
        if self.n_iters < 0:
            raise ConfigError(f"n_iters must be >= 0, got {self.n_iters}")
        if self.spatial_sigma <= 0 or self.bilateral_sigma_xy <= 0:
            raise ConfigError("CRF sigmas must be > 0")
        if self.bilateral_sigma_int <= 0:
            raise ConfigError("bilateral intensity sigma must be > 0")
        if self.w_spatial < 0 or self.w_bilateral < 0:
            raise ConfigError("CRF kernel weights must be >= 0")
        if not 0.0 < self.unary_confidence < 1.0:
            raise ConfigError(
                f"unary_confidence must be in (0, 1), got {self.unary_confidence}"
            )
        return self


def upscale_mask(mask, target_shape, patch_size=None, offset=(0, 0)):
    """Nearest-label upscaling of a coarse mask to image resolution.

    Without ``patch_size`` the coordinate mapping is proportional
    (floor rounding), so relative label areas are preserved to within
    one source cell.  With ``patch_size`` each source cell expands to
    an exact k x k block placed at ``offset``, and border pixels
    outside the covered region take the nearest block's label.
    """
    mask = check_label_mask(mask)
    h, w = int(target_shape[0]), int(target_shape[1])
    if h < 1 or w < 1:
        raise ShapeError(f"target shape must be positive, got {target_shape}")
    gh, gw = mask.shape
    if h < gh or w < gw:
        raise ShapeError(
            f"target shape {target_shape} is smaller than the mask {mask.shape}"
        )
    if patch_size is None:
        rows = (np.arange(h) * gh) // h
        cols = (np.arange(w) * gw) // w
    else:
        k = int(patch_size)
        if k < 1:
            raise ConfigError(f"patch_size must be >= 1, got {patch_size}")
        oy, ox = offset
        rows = np.clip((np.arange(h) - oy) // k, 0, gh - 1)
        cols = np.clip((np.arange(w) - ox) // k, 0, gw - 1)
    return mask[np.ix_(rows, cols)]


def _spatial_messages(q, sigma):
    # unnormalized truncated Gaussian with the center tap removed
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(t * t) / (2.0 * sigma * sigma))
    out = np.empty_like(q)
    for i in range(q.shape[0]):
        tmp = ndimage.correlate1d(q[i], kernel, axis=0, mode="constant", cval=0.0)
        out[i] = ndimage.correlate1d(tmp, kernel, axis=1, mode="constant", cval=0.0)
    return out - q


def _bilateral_messages(q, image, sigma_xy, sigma_int):
    radius = int(np.ceil(3.0 * sigma_xy))
    h, w = image.shape
    out = np.zeros_like(q)
    inv_xy = 1.0 / (2.0 * sigma_xy * sigma_xy)
    inv_int = 1.0 / (2.0 * sigma_int * sigma_int)
    for dy in range(-min(radius, h - 1), min(radius, h - 1) + 1):
        for dx in range(-min(radius, w - 1), min(radius, w - 1) + 1):
            if dy == 0 and dx == 0:
                continue
            g = np.exp(-(dy * dy + dx * dx) * inv_xy)
            if g < 1e-12:
                continue
            dst_y = slice(max(0, dy), min(h, h + dy))
            dst_x = slice(max(0, dx), min(w, w + dx))
            src_y = slice(max(0, -dy), min(h, h - dy))
            src_x = slice(max(0, -dx), min(w, w - dx))
            di = image[dst_y, dst_x] - image[src_y, src_x]
            f = g * np.exp(-(di * di) * inv_int)
            out[:, dst_y, dst_x] += f[None, :, :] * q[:, src_y, src_x]
    return out


def _mean_field_step(q, log_unary, image, params):
    """One mean-field update; returns the next normalized distribution."""
    messages = np.zeros_like(q)
    if params.w_spatial > 0:
        messages += params.w_spatial * _spatial_messages(q, params.spatial_sigma)
    if params.w_bilateral > 0:
        messages += params.w_bilateral * _bilateral_messages(
            q, image, params.bilateral_sigma_xy, params.bilateral_sigma_int
        )
    # Potts pairwise: the exponent keeps the same-label message only
    logit = log_unary + messages
    logit -= logit.max(axis=0, keepdims=True)
    q = np.exp(logit)
    q /= q.sum(axis=0, keepdims=True)
    return q


def crf_refine(labels, image, params=None):
    """Mean-field refinement of a label mask against its image.

    Returns a mask over the same label set; ``n_iters = 0`` or a
    single present label returns the input unchanged.
    """
    params = (params or CrfParams()).validate()
    labels = check_label_mask(labels)
    image = check_gray_image(image)
    if labels.shape != image.shape:
        raise ShapeError(
            f"mask shape {labels.shape} does not match image shape {image.shape}"
        )
    present = np.unique(labels)
    n_labels = present.shape[0]
    if params.n_iters == 0 or n_labels == 1:
        return labels.copy()

    index = np.searchsorted(present, labels)
    conf = params.unary_confidence
    off = (1.0 - conf) / (n_labels - 1)
    q = np.full((n_labels, *labels.shape), off)
    for i in range(n_labels):
        q[i][index == i] = conf
    log_unary = np.log(q)

    for _ in range(params.n_iters):
        q = _mean_field_step(q, log_unary, image, params)

    return present[np.argmax(q, axis=0)]
