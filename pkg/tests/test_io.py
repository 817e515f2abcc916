"""Tensor container, image loading, masks and manifests."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from specseg.errors import (
    CapacityError,
    DataError,
    FormatError,
    ManifestError,
    ShapeError,
)
from specseg.io import (
    DST_MAGIC,
    FeatureMap,
    load_image,
    load_manifest,
    load_mask,
    read_feature_map,
    read_tensor,
    save_mask,
    write_tensor,
)


def test_round_trip_is_bit_exact(tmp_path, rng):
    values = rng.standard_normal((784, 384)).astype(np.float32)
    path = tmp_path / "t.dst"
    write_tensor(values, path)
    back = read_tensor(path)
    assert back.dtype == np.float32
    assert back.shape == (784, 384)
    assert np.array_equal(back, values)


def test_round_trip_square(tmp_path, rng):
    values = rng.random((60, 60)).astype(np.float32)
    path = tmp_path / "t.dst"
    write_tensor(values, path)
    assert np.array_equal(read_tensor(path), values)


def test_round_trip_3d(tmp_path, rng):
    values = rng.random((5, 7, 3)).astype(np.float32)
    path = tmp_path / "t.dst"
    write_tensor(values, path)
    assert np.array_equal(read_tensor(path), values)


@settings(max_examples=25, deadline=None)
@given(
    shape=st.tuples(st.integers(1, 6), st.integers(1, 6)),
    seed=st.integers(0, 2**31 - 1),
)
def test_round_trip_property(tmp_path_factory, shape, seed):
    values = np.random.default_rng(seed).standard_normal(shape).astype(np.float32)
    path = tmp_path_factory.mktemp("dst") / "t.dst"
    write_tensor(values, path)
    assert np.array_equal(read_tensor(path), values)


def test_header_layout_one_element(tmp_path):
    # magic(4) + rank(1) + 2 * u32 dims(8) + one f32(4) = 17 bytes
    path = tmp_path / "t.dst"
    write_tensor(np.array([[0.5]], dtype=np.float32), path)
    raw = path.read_bytes()
    assert len(raw) == 17
    assert raw[:4] == DST_MAGIC
    assert raw[4] == 2
    assert struct.unpack_from("<2I", raw, 5) == (1, 1)
    assert struct.unpack_from("<f", raw, 13)[0] == 0.5


def test_header_dims_define_shape(tmp_path):
    path = tmp_path / "t.dst"
    payload = np.arange(12, dtype=np.float32).reshape(4, 3)
    write_tensor(payload, path)
    fm = read_feature_map(path)
    assert isinstance(fm, FeatureMap)
    assert fm.n_patches == 4
    assert fm.dim == 3
    assert np.array_equal(fm.values, payload)


def test_feature_map_grid_attachment(tmp_path):
    path = tmp_path / "t.dst"
    write_tensor(np.zeros((6, 2), dtype=np.float32), path)
    fm = read_feature_map(path).with_grid(2, 3)
    assert fm.grid == (2, 3)
    with pytest.raises(ShapeError):
        read_feature_map(path).with_grid(2, 2)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "t.dst"
    write_tensor(np.ones((2, 2), dtype=np.float32), path)
    raw = bytearray(path.read_bytes())
    raw[0] = ord("X")
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_tensor(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "t.dst"
    write_tensor(np.ones((3, 3), dtype=np.float32), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-2])
    with pytest.raises(FormatError):
        read_tensor(path)


def test_oversized_header_rejected(tmp_path):
    path = tmp_path / "t.dst"
    header = DST_MAGIC + struct.pack("<B", 2) + struct.pack("<2I", 2**31, 2**31)
    path.write_bytes(header)
    with pytest.raises(CapacityError):
        read_tensor(path)


def test_zero_dim_rejected_on_read(tmp_path):
    path = tmp_path / "t.dst"
    header = DST_MAGIC + struct.pack("<B", 2) + struct.pack("<2I", 0, 3)
    path.write_bytes(header)
    with pytest.raises(FormatError):
        read_tensor(path)


def test_empty_write_rejected(tmp_path):
    with pytest.raises(DataError):
        write_tensor(np.empty((0, 4), dtype=np.float32), tmp_path / "t.dst")


def test_non_finite_write_rejected(tmp_path):
    with pytest.raises(DataError):
        write_tensor(np.array([[np.nan]], dtype=np.float32), tmp_path / "t.dst")


def test_non_finite_read_rejected(tmp_path):
    path = tmp_path / "t.dst"
    header = DST_MAGIC + struct.pack("<B", 1) + struct.pack("<I", 1)
    path.write_bytes(header + struct.pack("<f", np.inf))
    with pytest.raises(DataError):
        read_tensor(path)


def test_load_image_8bit_scaling(tmp_path):
    arr = np.array([[0, 128, 255]], dtype=np.uint8)
    path = tmp_path / "g.png"
    Image.fromarray(arr, mode="L").save(path)
    img = load_image(path)
    assert img[0, 0] == 0.0
    assert img[0, 2] == 1.0
    assert abs(img[0, 1] - 128 / 255) < 1e-12


def test_load_image_16bit_scaling(tmp_path):
    arr = np.array([[0, 65535]], dtype=np.uint16)
    path = tmp_path / "g.png"
    Image.fromarray(arr).save(path)
    img = load_image(path)
    assert img[0, 0] == 0.0
    assert img[0, 1] == 1.0


def test_load_image_rgb_channel_mean(tmp_path):
    arr = np.zeros((1, 1, 3), dtype=np.uint8)
    arr[0, 0] = (30, 60, 90)
    path = tmp_path / "c.png"
    Image.fromarray(arr, mode="RGB").save(path)
    img = load_image(path)
    assert abs(img[0, 0] - 60 / 255) < 1e-12


def test_load_image_garbage_rejected(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"this is not an image at all")
    with pytest.raises(FormatError):
        load_image(path)


def test_mask_round_trip_with_legend(tmp_path):
    mask = np.array([[0, 1], [2, 2]])
    path = tmp_path / "m.png"
    save_mask(mask, path, legend={0: "background", 1: "left", 2: "right"})
    assert np.array_equal(load_mask(path), mask)
    legend = (tmp_path / "m.labels.txt").read_text()
    assert "0\tbackground" in legend
    assert "2\tright" in legend


def test_mask_too_many_labels_rejected(tmp_path):
    with pytest.raises(CapacityError):
        save_mask(np.arange(300).reshape(20, 15), tmp_path / "m.png")


def test_manifest_order_and_fields(tmp_path):
    (tmp_path / "a.png").touch()
    (tmp_path / "b.png").touch()
    (tmp_path / "c.png").touch()
    (tmp_path / "b_gt.png").touch()
    (tmp_path / "c_feat.dst").touch()
    manifest_path = tmp_path / "m.tsv"
    manifest_path.write_text(
        "b.png\tb_gt.png\n"
        "a.png\n"
        "c.png\t\tc_feat.dst\n"
    )
    m = load_manifest(manifest_path)
    assert [e.image_id for e in m] == ["b", "a", "c"]
    assert m[0].gt_mask_path == (tmp_path / "b_gt.png").resolve()
    assert m[1].gt_mask_path is None
    assert m[2].gt_mask_path is None
    assert m[2].feature_path == (tmp_path / "c_feat.dst").resolve()
    assert m.has_ground_truth
    assert m.has_features


def test_manifest_duplicate_image_rejected(tmp_path):
    manifest_path = tmp_path / "m.tsv"
    manifest_path.write_text("a.png\nb.png\na.png\n")
    with pytest.raises(ManifestError):
        load_manifest(manifest_path)


def test_manifest_blank_lines_and_comments(tmp_path):
    manifest_path = tmp_path / "m.tsv"
    manifest_path.write_text("\n# header comment\na.png\n\nb.png\n")
    m = load_manifest(manifest_path)
    assert [e.image_id for e in m] == ["a", "b"]


def test_manifest_colliding_stems_get_path_ids(tmp_path):
    manifest_path = tmp_path / "m.tsv"
    manifest_path.write_text("left/x.png\nright/x.png\n")
    m = load_manifest(manifest_path)
    ids = [e.image_id for e in m]
    assert len(set(ids)) == 2
