"""IDX ingestion, round-trips, and CSV export."""

import struct

import numpy as np
import pytest

from semcert.dataio import (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, LabeledDataset,
                            clamp01, export_grid_csv, load_idx, save_idx)
from semcert.errors import ConsistencyError, DomainError, FormatError


def _write_idx_pair(tmp_path, pixels, labels, rows, cols):
    """pixels: (N, rows, cols) uint8 array."""
    img = tmp_path / "images.idx"
    lab = tmp_path / "labels.idx"
    with open(img, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(pixels), rows, cols))
        fh.write(np.asarray(pixels, dtype=np.uint8).tobytes())
    with open(lab, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())
    return str(img), str(lab)


class TestLoadIdx:
    def test_byte_scaling(self, tmp_path):
        pixels = np.array([[[0, 128], [255, 7]]] * 4, dtype=np.uint8)
        img, lab = _write_idx_pair(tmp_path, pixels, [0, 1, 1, 0], 2, 2)
        ds = load_idx(img, lab)
        assert ds.images.shape == (4, 2, 2, 1)
        assert ds.images[0, 0, 0, 0] == 0.0
        assert ds.images[0, 0, 1, 0] == pytest.approx(128 / 255)
        assert ds.images[0, 1, 0, 0] == 1.0

    def test_magic_mismatch(self, tmp_path):
        img, lab = _write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0], 2, 2)
        with open(img, "r+b") as fh:
            fh.write(struct.pack(">I", 0xDEADBEEF))
        with pytest.raises(FormatError):
            load_idx(img, lab)

    def test_empty_body_nonzero_count(self, tmp_path):
        img = tmp_path / "img.idx"
        lab = tmp_path / "lab.idx"
        with open(img, "wb") as fh:
            fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, 5, 2, 2))
        with open(lab, "wb") as fh:
            fh.write(struct.pack(">II", IDX_LABELS_MAGIC, 5))
            fh.write(bytes(5))
        with pytest.raises(ConsistencyError):
            load_idx(str(img), str(lab))

    def test_count_mismatch(self, tmp_path):
        img, _ = _write_idx_pair(tmp_path, np.zeros((3, 2, 2)), [0, 1, 0], 2, 2)
        _, lab = _write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1], 2, 2)
        with pytest.raises(ConsistencyError):
            load_idx(img, lab)

    def test_standard_10k_file_header_oracle(self, tmp_path):
        rng = np.random.default_rng(0)
        pixels = rng.integers(0, 256, size=(10_000, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=10_000, dtype=np.uint8)
        img, lab = _write_idx_pair(tmp_path, pixels, labels, 28, 28)
        # independent header check straight off the raw bytes
        with open(img, "rb") as fh:
            raw = fh.read(16)
        magic, count, rows, cols = struct.unpack(">IIII", raw)
        assert (magic, count, rows, cols) == (0x00000803, 10_000, 28, 28)
        ds = load_idx(img, lab)
        assert len(ds) == 10_000
        assert ds.image_shape == (28, 28, 1)

    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        pixels = rng.integers(0, 256, size=(32, 5, 7), dtype=np.uint8)
        labels = rng.integers(0, 4, size=32, dtype=np.uint8)
        img, lab = _write_idx_pair(tmp_path, pixels, labels, 5, 7)
        ds = load_idx(img, lab)
        img2 = str(tmp_path / "img2.idx")
        lab2 = str(tmp_path / "lab2.idx")
        save_idx(ds, img2, lab2)
        assert open(img, "rb").read() == open(img2, "rb").read()
        assert open(lab, "rb").read() == open(lab2, "rb").read()

    def test_scaling_rounds_back(self, tmp_path):
        pixels = np.arange(256, dtype=np.uint8).reshape(1, 16, 16)
        img, lab = _write_idx_pair(tmp_path, pixels, [0], 16, 16)
        ds = load_idx(img, lab)
        back = np.round(ds.images[..., 0] * 255).astype(np.uint8)
        assert np.array_equal(back, pixels)


class TestLabeledDataset:
    def test_label_range_enforced(self):
        with pytest.raises(ConsistencyError):
            LabeledDataset(np.zeros((2, 2, 2, 1)), np.array([0, 5]), num_classes=3)

    def test_non_empty(self):
        with pytest.raises(DomainError):
            LabeledDataset(np.zeros((0, 2, 2, 1)), np.zeros(0, dtype=int), num_classes=1)

    def test_take(self):
        ds = LabeledDataset(np.zeros((5, 2, 2, 1)), np.zeros(5, dtype=int), 1)
        assert len(ds.take(3)) == 3
        assert len(ds.take(99)) == 5


class TestClamp:
    def test_clamp01(self):
        out = clamp01(np.array([-0.5, 0.2, 1.7]))
        assert out == pytest.approx([0.0, 0.2, 1.0])


class TestExportGridCsv:
    def test_single_row(self, tmp_path):
        path = str(tmp_path / "grid.csv")
        export_grid_csv([((0.0, 0.0), 1.0)], path)
        lines = open(path).read().splitlines()
        assert lines[0] == "beta_1,beta_2,value"
        vals = [float(tok) for tok in lines[1].split(",")]
        assert vals == [0.0, 0.0, 1.0]

    def test_empty_rows_header_only(self, tmp_path):
        path = str(tmp_path / "empty.csv")
        export_grid_csv([], path)
        assert open(path).read().splitlines() == ["beta_1,value"]

    def test_11x11_grid_row_count(self, tmp_path):
        cs = np.linspace(0.5, 2.0, 11)
        bs = np.linspace(-0.4, 0.4, 11)
        rows = [((c, b), 1.0) for c in cs for b in bs]
        path = str(tmp_path / "grid.csv")
        export_grid_csv(rows, path)
        assert len(open(path).read().splitlines()) == 1 + 121

    def test_mixed_dimensions_rejected(self, tmp_path):
        with pytest.raises(DomainError):
            export_grid_csv([((0.0,), 1.0), ((0.0, 1.0), 2.0)], str(tmp_path / "x.csv"))

    def test_full_precision_round_trip(self, tmp_path):
        value = 0.1234567890123456789
        path = str(tmp_path / "prec.csv")
        export_grid_csv([((value,), value)], path)
        line = open(path).read().splitlines()[1]
        got = [float(tok) for tok in line.split(",")]
        assert got[0] == float(value) and got[1] == float(value)
