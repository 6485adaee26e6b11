import gzip
import os
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counternet.mnist import (DATA_DIR_ENV, Dataset, EventStream,
                              IdxFormatError, binarize, binarize_batch,
                              integer_encode, integer_encode_batch, load_idx,
                              load_mnist, resolve_data_dir, stream_pixels)


def write_idx_images(path, images, gz=False):
    n, h, w = images.shape
    blob = struct.pack(">IIII", 0x803, n, h, w) + images.astype(np.uint8).tobytes()
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(blob)


def write_idx_labels(path, labels, gz=False):
    blob = struct.pack(">II", 0x801, len(labels)) + bytes(int(v) for v in labels)
    opener = gzip.open if gz else open
    with opener(path, "wb") as f:
        f.write(blob)


class TestIdxParsing:
    def test_round_trip_raw_and_gzip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 28, 28)).astype(np.uint8)
        labels = rng.integers(0, 10, size=5)
        for gz in (False, True):
            ip = tmp_path / f"imgs{gz}"
            lp = tmp_path / f"labs{gz}"
            write_idx_images(ip, images, gz)
            write_idx_labels(lp, labels, gz)
            ds = load_idx(ip, lp)
            assert len(ds) == 5
            assert np.array_equal(ds.images, images)
            assert np.array_equal(ds.labels, labels)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">IIII", 0x999, 1, 28, 28) + b"\0" * 784)
        lp = tmp_path / "labs"
        write_idx_labels(lp, [3])
        with pytest.raises(IdxFormatError):
            load_idx(path, lp)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "trunc"
        path.write_bytes(struct.pack(">IIII", 0x803, 2, 28, 28) + b"\0" * 784)
        lp = tmp_path / "labs"
        write_idx_labels(lp, [3, 4])
        with pytest.raises(IdxFormatError):
            load_idx(path, lp)

    def test_count_mismatch_rejected(self, tmp_path):
        ip = tmp_path / "imgs"
        lp = tmp_path / "labs"
        write_idx_images(ip, np.zeros((3, 28, 28), dtype=np.uint8))
        write_idx_labels(lp, [1, 2])
        with pytest.raises(IdxFormatError):
            load_idx(ip, lp)

    def test_label_out_of_range_rejected(self, tmp_path):
        ip = tmp_path / "imgs"
        lp = tmp_path / "labs"
        write_idx_images(ip, np.zeros((1, 28, 28), dtype=np.uint8))
        write_idx_labels(lp, [11])
        with pytest.raises(IdxFormatError):
            load_idx(ip, lp)


class TestRealData:
    def test_split_sizes(self):
        train, val, test = load_mnist()
        assert len(train) == 50000
        assert len(val) == 10000
        assert len(test) == 10000

    def test_well_known_first_labels(self):
        train, _, _ = load_mnist()
        assert train.labels[:10].tolist() == [5, 0, 4, 1, 9, 2, 1, 3, 1, 4]

    def test_pixel_and_label_ranges(self):
        train, _, test = load_mnist()
        assert train.images.dtype == np.uint8
        assert int(test.labels.min()) >= 0 and int(test.labels.max()) <= 9

    def test_env_var_overrides_data_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv(DATA_DIR_ENV, str(tmp_path))
        assert resolve_data_dir(None) == str(tmp_path)

    def test_stream_length_distribution(self):
        # binarized test images: frozen bounds on active-pixel counts
        _, _, test = load_mnist()
        counts = binarize_batch(test.images).sum(axis=1)
        assert counts.min() >= 10
        assert np.percentile(counts, 5) >= 40
        assert 80 <= np.median(counts) <= 180
        assert np.percentile(counts, 95) <= 300
        assert counts.max() <= 350


class TestEncodings:
    def test_binarize_tie_rounds_up(self):
        img = np.zeros((28, 28), dtype=np.uint8)
        img[0, 0] = 127
        img[0, 1] = 128
        from counternet.mnist import LabeledImage
        vec = binarize(LabeledImage(img, 7))
        assert vec[0] == 0 and vec[1] == 1

    def test_integer_encode_examples(self):
        from counternet.mnist import LabeledImage
        img = np.zeros((28, 28), dtype=np.uint8)
        img[0, 0] = 255
        img[0, 1] = 100
        vec = integer_encode(LabeledImage(img, 0), levels=4)
        assert vec[0] == 3
        assert vec[1] == 1

    def test_levels_below_two_rejected(self):
        from counternet.mnist import LabeledImage
        img = np.zeros((28, 28), dtype=np.uint8)
        with pytest.raises(ValueError):
            integer_encode(LabeledImage(img, 0), levels=1)

    @settings(max_examples=60)
    @given(st.integers(2, 16))
    def test_matches_exact_rational_rounding(self, levels):
        pixels = np.arange(256, dtype=np.uint8).reshape(16, 16)
        batch = integer_encode_batch(pixels[None, :, :], levels).ravel()
        for p in range(256):
            exact = Fraction(p * (levels - 1), 255)
            want = int(exact + Fraction(1, 2))  # round half up
            assert batch[p] == want

    def test_levels_two_equals_binarize(self):
        rng = np.random.default_rng(1)
        imgs = rng.integers(0, 256, size=(20, 28, 28)).astype(np.uint8)
        assert np.array_equal(integer_encode_batch(imgs, 2), binarize_batch(imgs))


class TestStreams:
    def test_event_count_conservation(self):
        rng = np.random.default_rng(0)
        encoded = rng.integers(0, 4, size=50)
        stream = stream_pixels(encoded, order_seed=3)
        assert len(stream.timesteps) == encoded.sum()
        for u in range(50):
            assert int(np.sum(stream.units == u)) == encoded[u]

    def test_all_positive_unit_signs(self):
        stream = stream_pixels(np.array([2, 0, 1]), order_seed=0)
        assert set(stream.signs.tolist()) <= {1}

    def test_one_event_per_timestep(self):
        stream = stream_pixels(np.array([2, 3, 1]), order_seed=9)
        assert stream.timesteps.tolist() == list(range(6))

    def test_seed_determinism_and_variation(self):
        encoded = np.arange(10)
        a = stream_pixels(encoded, order_seed=4)
        b = stream_pixels(encoded, order_seed=4)
        c = stream_pixels(encoded, order_seed=5)
        assert np.array_equal(a.units, b.units)
        assert not np.array_equal(a.units, c.units)

    def test_stream_validation(self):
        with pytest.raises(ValueError):
            EventStream([1, 0], [0, 0], [1, 1], input_size=2)   # decreasing t
        with pytest.raises(ValueError):
            EventStream([0, 1], [0, 5], [1, 1], input_size=2)   # unit range
        with pytest.raises(ValueError):
            EventStream([0, 1], [0, 1], [1, 2], input_size=2)   # bad sign

    def test_iteration_yields_events(self):
        stream = stream_pixels(np.array([0, 2]), order_seed=0)
        events = list(stream)
        assert len(events) == 2
        assert all(e.unit == 1 and e.sign == 1 for e in events)


class TestDataset:
    def test_subset(self):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.integers(0, 256, size=(10, 28, 28)).astype(np.uint8),
                     rng.integers(0, 10, size=10))
        sub = ds.subset([3, 5])
        assert len(sub) == 2
        assert np.array_equal(sub.images[0], ds.images[3])

    def test_getitem(self):
        ds = Dataset(np.zeros((2, 28, 28), dtype=np.uint8), np.array([7, 1]))
        item = ds[1]
        assert item.label == 1
        assert item.pixels.shape == (28, 28)
