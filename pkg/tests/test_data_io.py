import gzip

import numpy as np
import pytest

from defcert.classifier import accuracy, train
from defcert.data_io import Dataset, load_idx, mlxtend_mnist_path, mnist_subset, synth_shapes, write_idx
from defcert.errors import DataFormatError, ParameterError, ShapeError

# two 2x2 images, hand-written bytes
IMAGES = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes([0, 255, 51, 102, 255, 0, 0, 204])
LABELS = bytes.fromhex("00000801" "00000002") + bytes([7, 3])


def write(tmp_path, images=IMAGES, labels=LABELS, gz=False):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ip.write_bytes(gzip.compress(images) if gz else images)
    lp.write_bytes(gzip.compress(labels) if gz else labels)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_hand_built_fixture(tmp_path, gz):
    ds = load_idx(*write(tmp_path, gz=gz))
    assert len(ds) == 2 and ds.images.shape == (2, 1, 2, 2)
    assert np.array_equal(ds.images[0, 0], [[0.0, 1.0], [0.2, 0.4]])
    assert np.array_equal(ds.images[1, 0], [[1.0, 0.0], [0.0, 0.8]])
    assert list(ds.labels) == [7, 3] and ds.class_count == 8
    assert load_idx(*write(tmp_path), class_count=10).class_count == 10


def test_wrong_magic_is_named(tmp_path):
    with pytest.raises(DataFormatError, match="0x00000804"):
        load_idx(*write(tmp_path, images=b"\x00\x00\x08\x04" + IMAGES[4:]))
    with pytest.raises(DataFormatError, match="0x00000803"):
        load_idx(*write(tmp_path, labels=IMAGES))


def test_count_mismatch(tmp_path):
    labels = bytes.fromhex("00000801" "00000003") + bytes([7, 3, 1])
    with pytest.raises(DataFormatError, match="count"):
        load_idx(*write(tmp_path, labels=labels))


@pytest.mark.parametrize("cut", [2, 10, len(IMAGES) - 1])
def test_truncated(tmp_path, cut):
    with pytest.raises(DataFormatError):
        load_idx(*write(tmp_path, images=IMAGES[:cut]))
    with pytest.raises(DataFormatError):
        load_idx(*write(tmp_path, labels=LABELS[:-1]))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_idx(tmp_path / "nope", tmp_path / "nope2")


def test_roundtrip_bytes(tmp_path):
    ip, lp = write(tmp_path)
    ds = load_idx(ip, lp)
    write_idx(ds, tmp_path / "a", tmp_path / "b")
    assert (tmp_path / "a").read_bytes() == IMAGES
    assert (tmp_path / "b").read_bytes() == LABELS

    shapes = synth_shapes(20, 12, seed=4)
    write_idx(shapes, tmp_path / "c", tmp_path / "d")
    back = load_idx(tmp_path / "c", tmp_path / "d")
    assert np.array_equal(back.images, shapes.images) and np.array_equal(back.labels, shapes.labels)
    write_idx(back, tmp_path / "e", tmp_path / "f")
    assert (tmp_path / "e").read_bytes() == (tmp_path / "c").read_bytes()


def test_dataset_invariants():
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 1, 2, 2)), np.zeros(2, dtype=int), 2)
    with pytest.raises(ParameterError):
        Dataset(np.zeros((2, 1, 2, 2)), np.array([0, 2]), 2)
    with pytest.raises(ShapeError):
        write_idx(Dataset(np.zeros((1, 3, 2, 2)), [0], 1), "x", "y")


def test_synth_deterministic_balanced_binary():
    a, b = synth_shapes(50, 16, seed=3), synth_shapes(50, 16, seed=3)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, synth_shapes(50, 16, seed=4).images)
    assert np.bincount(a.labels).tolist() == [50, 50]
    assert set(np.unique(a.images)) == {0.0, 1.0}
    assert a.images.shape == (100, 1, 16, 16)
    assert synth_shapes(3, 28).images.shape == (6, 1, 28, 28)
    with pytest.raises(ParameterError):
        synth_shapes(5, 7)


def test_synth_held_out_accuracy():
    full = synth_shapes(300, 16, seed=5)
    tr, te = full.split(200, seed=0)
    assert len(tr) == 400 and len(te) == 200
    model = train(tr, None, None, epochs=10, seed=0)
    assert accuracy(model, te.images, te.labels) >= 0.95


@pytest.mark.skipif(mlxtend_mnist_path() is None, reason="mlxtend MNIST sample not installed")
def test_mnist_subset_disjoint():
    tr, te = mnist_subset(100, 50, seed=0)
    assert tr.images.shape == (100, 1, 28, 28) and len(te) == 50
    assert tr.class_count == 10 and tr.images.max() <= 1.0
    assert not {a.tobytes() for a in tr.images} & {a.tobytes() for a in te.images}
    with pytest.raises(ParameterError):
        mnist_subset(5000, 1)
