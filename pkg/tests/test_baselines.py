"""Classical baseline segmenters."""

import numpy as np
import pytest
from scipy import ndimage

from specseg.baselines import (
    FelzenszwalbSegmenter,
    FzParams,
    SlicParams,
    SlicSegmenter,
    _build_edges,
    _segment_graph,
    felzenszwalb,
    slic,
)
from specseg.errors import ConfigError

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _assert_partition(labels):
    uniq = np.unique(labels)
    assert uniq.min() == 0
    assert np.array_equal(uniq, np.arange(uniq.size))


def _assert_connected(labels):
    for label in np.unique(labels):
        _, n_comp = ndimage.label(labels == label, structure=_CROSS)
        assert n_comp == 1


# ------------------------------------------------------------------ slic

def test_slic_constant_image_regular_grid():
    img = np.full((60, 60), 0.5)
    labels = slic(img, SlicParams(n_superpixels=36))
    _assert_partition(labels)
    _assert_connected(labels)
    assert np.unique(labels).size == 36
    sizes = np.bincount(labels.ravel())
    assert sizes.min() >= 60
    assert sizes.max() <= 160


def test_slic_centroid_spacing_near_interval():
    img = np.full((80, 80), 0.3)
    n = 16
    labels = slic(img, SlicParams(n_superpixels=n))
    interval = np.sqrt(img.size / n)
    coms = ndimage.center_of_mass(np.ones_like(img), labels, np.unique(labels))
    rows = np.sort([cy for cy, _ in coms]).reshape(4, 4).mean(axis=1)
    gaps = np.diff(rows)
    assert np.all(np.abs(gaps - interval) < interval / 4)


def test_slic_respects_strong_tone_boundary():
    img = np.full((40, 40), 0.1)
    img[:, 20:] = 0.9
    labels = slic(img, SlicParams(n_superpixels=16, compactness=0.5))
    for label in np.unique(labels):
        xs = np.nonzero(labels == label)[1]
        assert xs.max() < 20 or xs.min() >= 20


def test_slic_single_superpixel():
    img = np.linspace(0, 1, 100).reshape(10, 10)
    labels = slic(img, SlicParams(n_superpixels=1))
    assert np.array_equal(labels, np.zeros((10, 10), dtype=int))


def test_slic_more_superpixels_than_pixels():
    img = np.full((5, 5), 0.5)
    labels = slic(img, SlicParams(n_superpixels=100))
    assert np.unique(labels).size == 25


def test_slic_count_tracks_request(rng):
    img = rng.random((50, 70))
    for n in (20, 60):
        labels = slic(img, SlicParams(n_superpixels=n))
        got = np.unique(labels).size
        assert abs(got - n) <= 0.3 * n


def test_slic_connectivity_on_noise(rng):
    img = rng.random((40, 40))
    labels = slic(img, SlicParams(n_superpixels=25))
    _assert_partition(labels)
    _assert_connected(labels)


def test_slic_deterministic(rng):
    img = rng.random((30, 30))
    a = slic(img, SlicParams(n_superpixels=12))
    b = slic(img, SlicParams(n_superpixels=12))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kwargs", [
    {"n_superpixels": 0},
    {"compactness": 0.0},
    {"max_iters": 0},
])
def test_slic_params_validation(kwargs):
    with pytest.raises(ConfigError):
        SlicParams(**kwargs).validate()


# --------------------------------------------------------- felzenszwalb

def test_fz_constant_image_single_segment():
    img = np.full((20, 20), 0.4)
    labels = felzenszwalb(img, FzParams(scale=1.0, sigma=0.0, min_size=1))
    assert np.unique(labels).size == 1


def test_fz_two_tone_exactly_two_segments():
    img = np.full((16, 16), 0.2)
    img[:, 8:] = 0.9
    labels = felzenszwalb(img, FzParams(scale=0.01, sigma=0.0, min_size=5))
    assert np.unique(labels).size == 2
    assert np.all(labels[:, :8] == labels[0, 0])
    assert np.all(labels[:, 8:] == labels[0, 8])
    assert labels[0, 0] != labels[0, 8]


def test_fz_huge_scale_merges_everything(rng):
    img = rng.random((15, 15))
    labels = felzenszwalb(img, FzParams(scale=1e6, sigma=0.0, min_size=1))
    assert np.unique(labels).size == 1


def test_fz_min_size_respected(rng):
    img = rng.random((24, 24))
    labels = felzenszwalb(img, FzParams(scale=0.05, sigma=0.0, min_size=30))
    sizes = np.bincount(labels.ravel())
    assert sizes.min() >= 30


def test_fz_diagonal_connectivity_on_checkerboard():
    yy, xx = np.mgrid[0:8, 0:8]
    img = np.where((yy + xx) % 2 == 0, 0.2, 0.8)
    labels = felzenszwalb(img, FzParams(scale=1e-4, sigma=0.0, min_size=1))
    # same-parity cells chain together through zero-weight diagonal edges
    assert np.unique(labels).size == 2
    assert np.unique(labels[(yy + xx) % 2 == 0]).size == 1


def test_fz_partition_and_sequential_labels(rng):
    img = rng.random((18, 22))
    labels = felzenszwalb(img, FzParams(scale=0.2, sigma=0.5, min_size=4))
    _assert_partition(labels)


def test_fz_edge_order_invariance(rng):
    img = rng.random((9, 9))
    a, b, w = _build_edges(img)
    base = _segment_graph(img.size, a, b, w, scale=0.1, min_size=3)
    perm = rng.permutation(a.size)
    swap = rng.random(a.size) < 0.5
    a2 = np.where(swap, b, a)[perm]
    b2 = np.where(swap, a, b)[perm]
    shuffled = _segment_graph(img.size, a2, b2, w[perm], scale=0.1, min_size=3)
    assert np.array_equal(base, shuffled)


def test_fz_single_pixel():
    labels = felzenszwalb(np.array([[0.5]]))
    assert np.array_equal(labels, [[0]])


def test_fz_deterministic(rng):
    img = rng.random((20, 20))
    a = felzenszwalb(img, FzParams(scale=0.3))
    b = felzenszwalb(img, FzParams(scale=0.3))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kwargs", [
    {"scale": 0.0},
    {"sigma": -1.0},
    {"min_size": 0},
])
def test_fz_params_validation(kwargs):
    with pytest.raises(ConfigError):
        FzParams(**kwargs).validate()


# ------------------------------------------------------------ estimators

def test_slic_estimator(rng):
    img = rng.random((30, 30))
    est = SlicSegmenter(n_superpixels=9)
    labels = est.fit_predict(img)
    assert labels.shape == img.shape
    assert est.get_params()["n_superpixels"] == 9
    assert np.array_equal(labels, slic(img, SlicParams(n_superpixels=9)))


def test_fz_estimator(rng):
    img = rng.random((30, 30))
    est = FelzenszwalbSegmenter(scale=0.5, sigma=0.0, min_size=2)
    labels = est.fit_predict(img)
    assert np.array_equal(
        labels, felzenszwalb(img, FzParams(scale=0.5, sigma=0.0, min_size=2))
    )
