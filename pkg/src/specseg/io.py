"""On-disk formats: DST tensors, raster images, label masks, manifests.

The DST container is the interchange format for dense numeric data
(per-patch features, eigenvector stacks, preprocessed images).  Layout,
all little-endian:

* 4 magic bytes ``DST1``
* 1 byte unsigned tensor rank
* rank x u32 dimension sizes
* float32 payload in row-major order

Payloads must be finite; zero-sized dimensions are rejected.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CapacityError, DataError, FormatError, ManifestError, ShapeError

DST_MAGIC = b"DST1"

_MAX_RANK = 8
_MAX_ELEMENTS = 1 << 32


def write_tensor(values, path):
    """Serialize an array to ``path`` in the DST layout.

    Values are stored as float32; pass float32 data for a bit-exact
    round trip.
    """
    arr = np.asarray(values)
    if arr.ndim == 0:
        raise DataError("cannot write a scalar as a tensor")
    if arr.ndim > _MAX_RANK:
        raise CapacityError(f"rank {arr.ndim} exceeds the supported maximum {_MAX_RANK}")
    if arr.size == 0:
        raise DataError("cannot write a tensor with a zero-sized dimension")
    if not np.all(np.isfinite(arr)):
        raise DataError("tensor payload contains non-finite values")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = DST_MAGIC + struct.pack("<B", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_tensor(path):
    """Read a DST file back into a float32 array.

    Raises :class:`FormatError` on structural problems (bad magic,
    truncation, size mismatch), :class:`CapacityError` when the header
    declares more elements than this build will allocate, and
    :class:`DataError` on non-finite payload values.
    """
    data = Path(path).read_bytes()
    if len(data) < 5:
        raise FormatError(f"{path}: file too short for a DST header")
    if data[:4] != DST_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {DST_MAGIC!r}")
    rank = data[4]
    if not 1 <= rank <= _MAX_RANK:
        raise FormatError(f"{path}: unsupported tensor rank {rank}")
    header_len = 5 + 4 * rank
    if len(data) < header_len:
        raise FormatError(f"{path}: truncated dimension header")
    dims = struct.unpack_from(f"<{rank}I", data, 5)
    if any(d == 0 for d in dims):
        raise FormatError(f"{path}: zero-sized dimension in header")
    n_elements = 1
    for d in dims:
        n_elements *= d
    if n_elements > _MAX_ELEMENTS:
        raise CapacityError(
            f"{path}: {n_elements} elements exceed the supported capacity"
        )
    expected = header_len + 4 * n_elements
    if len(data) != expected:
        raise FormatError(
            f"{path}: payload is {len(data) - header_len} bytes, "
            f"expected {4 * n_elements}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=header_len).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: payload contains non-finite values")
    return arr.copy()


@dataclass(frozen=True)
class FeatureMap:
    """Per-patch feature matrix in row-major patch-grid order."""

    values: np.ndarray
    grid: tuple | None = None

    @property
    def n_patches(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def with_grid(self, n_h, n_w):
        """Attach the patch-grid shape, checking it covers every row."""
        if n_h * n_w != self.n_patches:
            raise ShapeError(
                f"grid {n_h}x{n_w} does not cover {self.n_patches} feature rows"
            )
        return FeatureMap(self.values, (int(n_h), int(n_w)))


def read_feature_map(path):
    """Read a 2-D DST file as a :class:`FeatureMap` (grid unattached)."""
    arr = read_tensor(path)
    if arr.ndim != 2:
        raise FormatError(f"{path}: feature maps must be rank 2, got rank {arr.ndim}")
    return FeatureMap(arr)


def load_image(path):
    """Load a raster image as float64 intensities in [0, 1].

    8-bit channels map 255 to 1.0 and 16-bit channels map 65535 to 1.0.
    RGB(A) inputs are reduced to gray by the plain mean of the R, G and
    B channels before scaling.
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ("L", "P"):
                arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            elif mode == "LA":
                arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            elif mode in ("RGB", "RGBA"):
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
                arr = rgb.mean(axis=2) / 255.0
            elif mode in ("I", "I;16", "I;16B", "I;16L"):
                raw = np.asarray(img, dtype=np.float64)
                if raw.max() > 65535:
                    raise FormatError(f"{path}: integer image exceeds 16-bit range")
                arr = raw / 65535.0
            else:
                raise FormatError(f"{path}: unsupported image mode {mode!r}")
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a recognized raster image") from exc
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image")
    return np.clip(arr, 0.0, 1.0)


def save_mask(labels, path, legend=None):
    """Write an integer label mask as an 8-bit PNG plus a text legend.

    The legend lands next to the image with a ``.labels.txt`` suffix and
    holds one ``label<TAB>name`` line per present label.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise CapacityError(
            f"mask labels must fit 8 bits, got range [{arr.min()}, {arr.max()}]"
        )
    path = Path(path)
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")
    present = [int(v) for v in np.unique(arr)]
    if legend is None:
        legend = {v: f"segment {v}" for v in present}
    lines = [f"{v}\t{legend.get(v, f'segment {v}')}" for v in present]
    legend_path = path.with_name(path.stem + ".labels.txt")
    legend_path.write_text("\n".join(lines) + "\n")


def load_mask(path):
    """Read an 8-bit PNG label mask back as an int64 array."""
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.int64)
    return arr


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset record: image path plus optional ground truth/features."""

    image_id: str
    image_path: Path
    gt_mask_path: Path | None = None
    feature_path: Path | None = None


class DatasetManifest:
    """Ordered collection of dataset entries parsed from a manifest file."""

    def __init__(self, entries, root=None):
        self.entries = list(entries)
        self.root = Path(root) if root is not None else None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def has_ground_truth(self):
        return any(e.gt_mask_path is not None for e in self.entries)

    @property
    def has_features(self):
        return any(e.feature_path is not None for e in self.entries)


def _sanitize_id(text):
    out = []
    for ch in text:
        out.append(ch if (ch.isalnum() or ch in "-_.") else "_")
    return "".join(out)


def load_manifest(path):
    """Parse a tab-separated manifest file.

    Each non-empty line holds ``image<TAB>[gt_mask]<TAB>[features]``;
    the optional fields may be blank.  Relative paths resolve against
    the manifest's directory.  Record order is preserved and duplicate
    image paths are rejected.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    root = path.parent
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) > 3:
            raise ManifestError(f"{path}:{lineno}: expected at most 3 fields")
        image = fields[0].strip()
        if not image:
            raise ManifestError(f"{path}:{lineno}: missing image path")
        gt = fields[1].strip() if len(fields) > 1 else ""
        feat = fields[2].strip() if len(fields) > 2 else ""
        rows.append((lineno, image, gt or None, feat or None))

    seen = {}
    for lineno, image, _, _ in rows:
        if image in seen:
            raise ManifestError(
                f"{path}:{lineno}: duplicate image path {image!r} "
                f"(first seen on line {seen[image]})"
            )
        seen[image] = lineno

    stems = [Path(image).stem for _, image, _, _ in rows]
    use_stems = len(set(stems)) == len(stems)
    entries = []
    for (lineno, image, gt, feat), stem in zip(rows, stems):
        if use_stems:
            image_id = _sanitize_id(stem)
        else:
            rel = Path(image).with_suffix("")
            image_id = _sanitize_id("_".join(rel.parts))
        entries.append(
            ManifestEntry(
                image_id=image_id,
                image_path=(root / image).resolve(),
                gt_mask_path=(root / gt).resolve() if gt else None,
                feature_path=(root / feat).resolve() if feat else None,
            )
        )
    ids = [e.image_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: derived image ids collide; rename inputs")
    return DatasetManifest(entries, root=root)
