import gzip
import struct

import numpy as np
import pytest

from absum.data import (IMAGE_MAGIC, LABEL_MAGIC, DatasetSource, IdxFormatError, load_desk_mnist,
                        load_idx, read_idx, synthetic_digits, synthetic_images, write_idx)


@pytest.fixture
def fixture_pair(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(10, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = rng.integers(0, 10, size=10, dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, images, IMAGE_MAGIC)
    write_idx(lp, labels, LABEL_MAGIC)
    return ip, lp, images, labels


def test_well_formed_fixture(fixture_pair):
    ip, lp, images, labels = fixture_pair
    x, y = load_idx(ip, lp)
    assert x.shape == (10, 1, 28, 28) and x.min() >= 0 and x.max() <= 1
    assert x[0, 0, 0, 0] == 1.0
    assert np.array_equal(np.round(x[:, 0] * 255).astype(np.uint8), images)
    assert np.array_equal(y, labels)


def test_header_is_big_endian(fixture_pair):
    ip, _, _, _ = fixture_pair
    raw = ip.read_bytes()
    assert struct.unpack(">IIII", raw[:16]) == (0x803, 10, 28, 28)


def test_gzip_is_detected(tmp_path, fixture_pair):
    _, lp, _, labels = fixture_pair
    gz = tmp_path / "lab.gz"
    with gzip.open(gz, "wb") as fh:
        fh.write(lp.read_bytes())
    assert np.array_equal(read_idx(gz, LABEL_MAGIC), labels)


def test_count_mismatch(tmp_path, fixture_pair):
    ip, _, _, _ = fixture_pair
    lp = tmp_path / "short.idx"
    write_idx(lp, np.zeros(9, dtype=np.uint8), LABEL_MAGIC)
    with pytest.raises(IdxFormatError, match="count mismatch"):
        load_idx(ip, lp)


def test_bad_magic(fixture_pair):
    ip, lp, _, _ = fixture_pair
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(lp, ip)


def test_truncated(tmp_path, fixture_pair):
    ip, lp, _, _ = fixture_pair
    cut = tmp_path / "cut.idx"
    cut.write_bytes(ip.read_bytes()[:-5])
    with pytest.raises(IdxFormatError, match="truncated"):
        load_idx(cut, lp)
    tiny = tmp_path / "tiny.idx"
    tiny.write_bytes(b"\x00\x00")
    with pytest.raises(IdxFormatError):
        read_idx(tiny, IMAGE_MAGIC)


def test_limit(fixture_pair):
    ip, lp, _, _ = fixture_pair
    x, y = load_idx(ip, lp, limit=4)
    assert x.shape[0] == 4 and y.shape == (4,)


def test_bundled_subset():
    x, y = load_desk_mnist("train")
    assert x.shape == (10000, 1, 28, 28) and set(np.unique(y)) == set(range(10))
    xt, yt = load_desk_mnist("test", limit=1000)
    assert xt.shape == (1000, 1, 28, 28)
    assert np.bincount(yt).min() > 70
    with pytest.raises(ValueError):
        load_desk_mnist("validation")


def test_synthetic_generators():
    x, y = synthetic_images(5, seed=1)
    assert x.shape == (5, 1, 28, 28) and y.max() < 10
    a, b = synthetic_digits(50, seed=2)
    c, d = synthetic_digits(50, seed=2)
    assert np.array_equal(a, c) and np.array_equal(b, d)
    assert a.min() >= 0 and a.max() <= 1


def test_dataset_source(fixture_pair):
    ip, lp, _, _ = fixture_pair
    x, _ = DatasetSource(kind="idx", images=str(ip), labels=str(lp), limit=3).load()
    assert x.shape[0] == 3
    tr, _ = DatasetSource(kind="synthetic", count=20, split="train").load()
    te, _ = DatasetSource(kind="synthetic", count=20, split="test").load()
    assert not np.array_equal(tr, te)
    with pytest.raises(ValueError):
        DatasetSource(kind="idx").load()
    with pytest.raises(ValueError):
        DatasetSource(kind="web").load()
