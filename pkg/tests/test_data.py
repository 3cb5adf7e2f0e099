import gzip
import os
import struct
from pathlib import Path

import numpy as np
import pytest

from dynstruct.data import (
    Dataset,
    load_mnist_idx,
    minibatch_iterator,
    relevance_score,
    synthetic_subset_task,
    write_idx_images,
    write_idx_labels,
)
from dynstruct.errors import FormatError

BUNDLED = Path(__file__).resolve().parents[1] / "data" / "mnist"


@pytest.fixture
def idx_pair(tmp_path, rng):
    images = rng.integers(0, 256, (6, 28, 28), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = rng.integers(0, 10, 6, dtype=np.uint8)
    ip, lp = tmp_path / "img", tmp_path / "lbl"
    write_idx_images(ip, images)
    write_idx_labels(lp, labels)
    return ip, lp, images, labels


class TestIdx:
    def test_round_trip(self, idx_pair):
        ip, lp, images, labels = idx_pair
        ds = load_mnist_idx(ip, lp)
        assert ds.inputs.shape == (6, 784) and ds.n_classes == 10
        assert np.array_equal(np.rint(ds.inputs * 255).astype(np.uint8).reshape(6, 28, 28), images)
        assert np.array_equal(ds.labels, labels)
        assert ds.inputs[0, 0] == 1.0
        assert ds.inputs.min() >= 0 and ds.inputs.max() <= 1

    def test_header_layout(self, idx_pair):
        ip, lp, _, _ = idx_pair
        assert struct.unpack(">4i", ip.read_bytes()[:16]) == (2051, 6, 28, 28)
        assert struct.unpack(">2i", lp.read_bytes()[:8]) == (2049, 6)

    def test_gzip_round_trip(self, tmp_path, rng):
        images = rng.integers(0, 256, (3, 28, 28), dtype=np.uint8)
        write_idx_images(tmp_path / "i.gz", images)
        write_idx_labels(tmp_path / "l.gz", [1, 2, 3])
        with gzip.open(tmp_path / "i.gz") as f:
            assert f.read(4) == struct.pack(">i", 2051)
        ds = load_mnist_idx(tmp_path / "i.gz", tmp_path / "l.gz")
        assert list(ds.labels) == [1, 2, 3]

    def test_bad_magic(self, idx_pair, tmp_path):
        ip, lp, _, _ = idx_pair
        raw = bytearray(ip.read_bytes())
        raw[:4] = struct.pack(">i", 2049)
        bad = tmp_path / "bad"
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            load_mnist_idx(bad, lp)
        with pytest.raises(FormatError, match="magic"):
            load_mnist_idx(ip, ip)

    def test_truncated(self, idx_pair, tmp_path):
        ip, lp, _, _ = idx_pair
        short = tmp_path / "short"
        short.write_bytes(ip.read_bytes()[:-10])
        with pytest.raises(FormatError, match="truncated"):
            load_mnist_idx(short, lp)
        short.write_bytes(ip.read_bytes()[:7])
        with pytest.raises(FormatError):
            load_mnist_idx(short, lp)

    def test_count_mismatch(self, idx_pair, tmp_path):
        ip, _, _, _ = idx_pair
        write_idx_labels(tmp_path / "five", [0, 1, 2, 3, 4])
        with pytest.raises(FormatError):
            load_mnist_idx(ip, tmp_path / "five")


def test_bundled_mnist_subset():
    train = load_mnist_idx(BUNDLED / "train-images-idx3-ubyte.gz", BUNDLED / "train-labels-idx1-ubyte.gz")
    test = load_mnist_idx(BUNDLED / "test-images-idx3-ubyte.gz", BUNDLED / "test-labels-idx1-ubyte.gz")
    assert train.inputs.shape == (8000, 784) and test.inputs.shape == (2000, 784)
    assert set(np.unique(train.labels)) == set(range(10))
    assert train.inputs.min() == 0.0 and train.inputs.max() == 1.0


@pytest.mark.skipif(not os.environ.get("DYNSTRUCT_DATA_ROOT"), reason="full MNIST not available")
def test_full_mnist_train_files():
    root = Path(os.environ["DYNSTRUCT_DATA_ROOT"])
    name = next((n for n in ("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz") if (root / n).exists()), None)
    if name is None:
        pytest.skip("no MNIST training images under DYNSTRUCT_DATA_ROOT")
    labels = name.replace("images-idx3", "labels-idx1")
    ds = load_mnist_idx(root / name, root / labels)
    assert ds.inputs.shape == (60000, 784) and ds.n_classes == 10


class TestSynthetic:
    def test_no_noise_features(self, rng):
        ds = synthetic_subset_task(5, 0, 200, rng)
        assert ds.inputs.shape == (200, 5)

    def test_labels_follow_the_rule_with_margin(self, rng):
        ds = synthetic_subset_task(4, 6, 500, rng, margin=0.8)
        score = relevance_score(ds.inputs[:, :4])
        assert np.all(np.abs(score) >= 0.8)
        # the generating rule classifies every sample correctly
        assert np.mean((score > 0) != ds.labels) == 0.0
        assert 0.3 < ds.labels.mean() < 0.7
        assert np.all((ds.inputs >= 0) & (ds.inputs <= 1))

    def test_noise_permutation_keeps_labels(self, rng):
        ds = synthetic_subset_task(3, 5, 100, rng)
        shuffled = ds.inputs.copy()
        shuffled[:, 3:] = rng.permutation(shuffled[:, 3:], axis=0)
        assert np.array_equal((relevance_score(shuffled[:, :3]) > 0).astype(int), ds.labels)


class TestMinibatches:
    def make(self, n=10):
        return Dataset(np.arange(n, dtype=float)[:, None], np.arange(n) % 3, 3)

    def test_sizes(self):
        assert [len(b) for b in minibatch_iterator(self.make(), 3, 0)] == [3, 3, 3, 1]

    def test_same_seed_same_order(self):
        a = [b.labels.tolist() for b in minibatch_iterator(self.make(50), 7, 11)]
        b = [b.labels.tolist() for b in minibatch_iterator(self.make(50), 7, 11)]
        c = [b.labels.tolist() for b in minibatch_iterator(self.make(50), 7, 12)]
        assert a == b and a != c

    def test_epoch_is_a_permutation(self):
        seen = np.concatenate([b.inputs[:, 0] for b in minibatch_iterator(self.make(23), 4, 5)])
        assert sorted(seen) == list(range(23))

    def test_batch_size_checked(self):
        with pytest.raises(ValueError):
            list(minibatch_iterator(self.make(), 0, 0))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)
