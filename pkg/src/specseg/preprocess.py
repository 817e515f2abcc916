"""Intensity preprocessing: Gaussian denoising and histogram equalization.

Blurring uses symmetric boundary handling so the image mean is
preserved; equalization maps intensities through the (tile-local for
CLAHE) cumulative histogram over 256 bins.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError
from .validation import check_gray_image

HIST_EQ_MODES = ("none", "global", "clahe")

_N_BINS = 256


@dataclass
class PreprocessSpec:
    """Preprocessing choices applied before patch extraction."""

    gaussian_sigma: float = 0.0
    hist_eq: str = "none"
    clahe_clip: float = 2.0
    clahe_tiles: int = 8

    def validate(self):
        if self.gaussian_sigma < 0:
            raise ConfigError(f"gaussian_sigma must be >= 0, got {self.gaussian_sigma}")
        if self.hist_eq not in HIST_EQ_MODES:
            raise ConfigError(
                f"hist_eq must be one of {HIST_EQ_MODES}, got {self.hist_eq!r}"
            )
        if self.clahe_clip <= 0:
            raise ConfigError(f"clahe_clip must be > 0, got {self.clahe_clip}")
        if self.clahe_tiles < 1:
            raise ConfigError(f"clahe_tiles must be >= 1, got {self.clahe_tiles}")
        return self


def gaussian_blur(img, sigma):
    """Blur with a truncated Gaussian (radius 3 sigma, symmetric borders).

    ``sigma = 0`` returns the input unchanged.
    """
    img = check_gray_image(img)
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    radius = int(np.ceil(3.0 * sigma))
    out = ndimage.gaussian_filter(img, sigma, mode="reflect", radius=radius)
    return np.clip(out, 0.0, 1.0)


def _intensity_bins(img):
    return np.minimum((img * _N_BINS).astype(np.int64), _N_BINS - 1)


def _equalize_global(img):
    bins = _intensity_bins(img)
    hist = np.bincount(bins.ravel(), minlength=_N_BINS)
    cdf = np.cumsum(hist) / img.size
    return cdf[bins]


def _clipped_cdf(hist, n, clip):
    # clip limit is relative to the uniform bin height; overflow is
    # spread evenly over all bins
    limit = max(clip * n / _N_BINS, 1.0)
    excess = np.clip(hist - limit, 0.0, None).sum()
    clipped = np.minimum(hist, limit) + excess / _N_BINS
    return np.cumsum(clipped) / n


def _equalize_clahe(img, clip, tiles):
    h, w = img.shape
    t = min(tiles, h, w)
    ys = np.linspace(0, h, t + 1).astype(int)
    xs = np.linspace(0, w, t + 1).astype(int)
    lut = np.empty((t, t, _N_BINS))
    for ti in range(t):
        for tj in range(t):
            tile = img[ys[ti] : ys[ti + 1], xs[tj] : xs[tj + 1]]
            hist = np.bincount(_intensity_bins(tile).ravel(), minlength=_N_BINS)
            lut[ti, tj] = _clipped_cdf(hist.astype(np.float64), tile.size, clip)

    cy = (ys[:-1] + ys[1:]) / 2.0
    cx = (xs[:-1] + xs[1:]) / 2.0
    row = np.arange(h) + 0.5
    col = np.arange(w) + 0.5
    # fractional tile coordinates, clamped so border pixels extrapolate flat
    fy = np.clip(np.interp(row, cy, np.arange(t)), 0, t - 1)
    fx = np.clip(np.interp(col, cx, np.arange(t)), 0, t - 1)
    y0 = np.minimum(fy.astype(int), t - 1)
    x0 = np.minimum(fx.astype(int), t - 1)
    y1 = np.minimum(y0 + 1, t - 1)
    x1 = np.minimum(x0 + 1, t - 1)
    wy = (fy - y0)[:, None]
    wx = (fx - x0)[None, :]

    b = _intensity_bins(img)
    yy0 = y0[:, None]
    yy1 = y1[:, None]
    xx0 = x0[None, :]
    xx1 = x1[None, :]
    v00 = lut[np.broadcast_to(yy0, b.shape), np.broadcast_to(xx0, b.shape), b]
    v01 = lut[np.broadcast_to(yy0, b.shape), np.broadcast_to(xx1, b.shape), b]
    v10 = lut[np.broadcast_to(yy1, b.shape), np.broadcast_to(xx0, b.shape), b]
    v11 = lut[np.broadcast_to(yy1, b.shape), np.broadcast_to(xx1, b.shape), b]
    top = v00 * (1 - wx) + v01 * wx
    bot = v10 * (1 - wx) + v11 * wx
    return top * (1 - wy) + bot * wy


def equalize_histogram(img, spec=None):
    """Histogram equalization per ``spec.hist_eq`` (none, global or clahe)."""
    img = check_gray_image(img)
    spec = (spec or PreprocessSpec()).validate()
    if spec.hist_eq == "none":
        return img.copy()
    if spec.hist_eq == "global":
        out = _equalize_global(img)
    else:
        out = _equalize_clahe(img, spec.clahe_clip, spec.clahe_tiles)
    return np.clip(out, 0.0, 1.0)


def preprocess_image(img, spec):
    """Apply the configured blur, then equalization."""
    spec.validate()
    out = gaussian_blur(img, spec.gaussian_sigma)
    if spec.hist_eq != "none":
        out = equalize_histogram(out, spec)
    return out


class Preprocessor(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`preprocess_image`.

    ``transform`` accepts a single 2-D image and returns the processed
    image at the same resolution.
    """

    def __init__(self, gaussian_sigma=0.0, hist_eq="none", clahe_clip=2.0, clahe_tiles=8):
        self.gaussian_sigma = gaussian_sigma
        self.hist_eq = hist_eq
        self.clahe_clip = clahe_clip
        self.clahe_tiles = clahe_tiles

    def _spec(self):
        return PreprocessSpec(
            gaussian_sigma=self.gaussian_sigma,
            hist_eq=self.hist_eq,
            clahe_clip=self.clahe_clip,
            clahe_tiles=self.clahe_tiles,
        )

    def fit(self, X, y=None):
        self._spec().validate()
        return self

    def transform(self, X):
        return preprocess_image(X, self._spec())
