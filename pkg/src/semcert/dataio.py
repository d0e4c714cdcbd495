"""Image tensors, IDX dataset ingestion, and CSV export.

Images are float64 arrays of shape (H, W, C) with intensities in [0, 1].
Transforms may leave [0, 1] in intermediate stages; clamping is owned by the
prediction path, never by I/O.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def validate_image(x: np.ndarray) -> np.ndarray:
    """Check the (H, W, C) layout and finiteness of an image tensor."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] not in (1, 3):
        raise DomainError(f"image must have shape (H, W, C) with C in {{1, 3}}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("image intensities must be finite")
    return x


def clamp01(x: np.ndarray) -> np.ndarray:
    """Clamp intensities into [0, 1] (applied only right before a classifier)."""
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class LabeledDataset:
    """Images (N, H, W, C) in [0,1] with integer labels in {0..num_classes-1}."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DomainError("dataset images must be a (N, H, W, C) array")
        if len(self.images) == 0:
            raise DomainError("dataset must be non-empty")
        if self.labels.shape != (len(self.images),):
            raise ConsistencyError("labels must align one-to-one with images")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ConsistencyError("labels must lie in {0..num_classes-1}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def take(self, n: int) -> "LabeledDataset":
        n = min(n, len(self))
        return LabeledDataset(self.images[:n], self.labels[:n], self.num_classes)


def _read_idx(path: str, expected_magic: int):
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise FormatError(f"{path}: truncated IDX header")
        magic, count = struct.unpack(">II", header)
        if magic != expected_magic:
            raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
        if expected_magic == IDX_IMAGES_MAGIC:
            dims = fh.read(8)
            if len(dims) < 8:
                raise FormatError(f"{path}: truncated IDX dimension fields")
            rows, cols = struct.unpack(">II", dims)
            body = fh.read()
            if len(body) != count * rows * cols:
                raise ConsistencyError(
                    f"{path}: body holds {len(body)} bytes, header declares {count}x{rows}x{cols}")
            data = np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)
            return data
        body = fh.read()
        if len(body) != count:
            raise ConsistencyError(f"{path}: body holds {len(body)} labels, header declares {count}")
        return np.frombuffer(body, dtype=np.uint8)


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """Load a big-endian IDX image/label pair, scaling bytes to [0, 1] by /255."""
    raw_images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    raw_labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(raw_images) != len(raw_labels):
        raise ConsistencyError(
            f"image count {len(raw_images)} does not match label count {len(raw_labels)}")
    images = raw_images.astype(np.float64) / 255.0
    images = images[..., None]
    labels = raw_labels.astype(np.int64)
    num_classes = int(labels.max()) + 1 if len(labels) else 0
    return LabeledDataset(images, labels, num_classes)


def save_idx(dataset: LabeledDataset, images_path: str, labels_path: str) -> None:
    """Serialize back to IDX; exact inverse of load_idx for /255-scaled data."""
    images = dataset.images
    if images.shape[3] != 1:
        raise DomainError("IDX serialization supports single-channel images only")
    n, rows, cols, _ = images.shape
    raw = np.round(images[..., 0] * 255.0)
    if raw.min() < 0 or raw.max() > 255:
        raise DomainError("intensities outside [0, 1] cannot be IDX-serialized")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(raw.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


def export_grid_csv(rows, path: str) -> None:
    """Write (parameter point, value) rows as CSV: beta_1,...,beta_d,value.

    Floats are written with repr precision so files round-trip exactly.
    """
    rows = list(rows)
    if rows:
        d = len(rows[0][0])
        if any(len(point) != d for point, _ in rows):
            raise DomainError("all rows must share one parameter dimension")
    else:
        d = 1
    header = ",".join(f"beta_{i + 1}" for i in range(d)) + ",value"
    lines = [header]
    for point, value in rows:
        lines.append(",".join(repr(float(c)) for c in point) + "," + repr(float(value)))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
