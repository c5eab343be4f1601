import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eluresnet.data import (
    DatasetFormatError,
    LabeledImageSet,
    apply_augmentation,
    apply_normalization,
    augment_batch,
    batch_iterator,
    compute_normalization,
    draw_augmentation,
    load_cifar10,
    load_cifar100,
    write_records,
)
from eluresnet.tensor import Rng


def two_record_bytes():
    # hand-built: label, then R plane, G plane, B plane (row-major), per record
    rec0 = bytes([3]) + bytes(range(256)) * 12
    rec1 = bytes([7]) + bytes((255 - i) % 256 for i in range(3072))
    return rec0 + rec1


def cifar10_dir(tmp_path, raw_train=None, raw_test=None):
    raw_train = raw_train if raw_train is not None else two_record_bytes()
    for i in range(1, 6):
        (tmp_path / f"data_batch_{i}.bin").write_bytes(raw_train)
    (tmp_path / "test_batch.bin").write_bytes(raw_test if raw_test is not None else two_record_bytes())
    return tmp_path


def test_two_record_fixture(tmp_path):
    raw = two_record_bytes()
    train, test = load_cifar10(cifar10_dir(tmp_path))
    assert len(test) == 2 and len(train) == 10 and test.class_count == 10
    assert test.labels.tolist() == [3, 7]
    assert test.images[0, 0, 0, 0] == pytest.approx(raw[1] / 255)
    # exact round trip of every byte
    back = np.rint(test.images * 255).astype(np.uint8)
    assert back[0].tobytes() == raw[1:3073]
    assert back[1].tobytes() == raw[3074:]
    assert back[0, 1, 0, 0] == raw[1 + 1024]  # G plane starts after 32*32 R bytes
    assert back[0, 0, 1, 0] == raw[1 + 32]  # row-major within a plane


def test_nested_directory(tmp_path):
    sub = tmp_path / "cifar-10-batches-bin"
    sub.mkdir()
    cifar10_dir(sub)
    assert len(load_cifar10(tmp_path)[1]) == 2


def test_env_var_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("CIFAR_DATA_DIR", str(cifar10_dir(tmp_path)))
    assert len(load_cifar10()[1]) == 2


def test_truncated_file(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_cifar10(cifar10_dir(tmp_path, raw_test=two_record_bytes()[:-1]))


def test_bad_label(tmp_path):
    raw = bytearray(two_record_bytes())
    raw[0] = 10
    with pytest.raises(DatasetFormatError):
        load_cifar10(cifar10_dir(tmp_path, raw_test=bytes(raw)))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_cifar10(tmp_path)


def test_cifar100_fine_labels(tmp_path):
    pixels = np.arange(2 * 3072, dtype=np.uint8).reshape(2, 3, 32, 32)
    write_records(tmp_path / "train.bin", pixels, [42, 99], coarse_labels=[3, 19])
    write_records(tmp_path / "test.bin", pixels, [0, 55], coarse_labels=[5, 5])
    raw = (tmp_path / "train.bin").read_bytes()
    assert raw[0] == 3 and raw[1] == 42
    train, test = load_cifar100(tmp_path)
    assert train.labels.tolist() == [42, 99] and test.labels.tolist() == [0, 55]
    assert train.class_count == 100
    assert np.array_equal(np.rint(train.images * 255).astype(np.uint8), pixels)


def test_cifar100_bound(tmp_path):
    pixels = np.zeros((1, 3, 32, 32), np.uint8)
    write_records(tmp_path / "train.bin", pixels, [100], coarse_labels=[0])
    write_records(tmp_path / "test.bin", pixels, [1], coarse_labels=[0])
    with pytest.raises(DatasetFormatError):
        load_cifar100(tmp_path)


def random_set(n=64, seed=0, classes=10):
    r = np.random.default_rng(seed)
    return LabeledImageSet(r.random((n, 3, 32, 32)).astype(np.float32) * np.array([1, 0.5, 0.2], np.float32).reshape(1, 3, 1, 1),
                           r.integers(0, classes, n), classes)


def test_normalization():
    train = random_set()
    stats = compute_normalization(train)
    normed = apply_normalization(train, stats).images
    assert np.all(np.abs(normed.mean(axis=(0, 2, 3))) < 1e-5)
    assert np.all(np.abs(normed.std(axis=(0, 2, 3)) - 1) < 1e-4)
    test = random_set(seed=1)
    test.images[:] += 0.3
    assert np.all(np.abs(apply_normalization(test, stats).images.mean(axis=(0, 2, 3))) > 0.1)


def test_mean_only_normalization():
    train = random_set()
    stats = compute_normalization(train, use_std=False)
    assert np.all(stats.std == 1)


def test_zero_variance_channel():
    s = random_set()
    s.images[:, 1] = 0.5
    with pytest.raises(ValueError):
        compute_normalization(s)


def test_augment_identity_and_shape():
    x = random_set(8).images
    assert np.array_equal(apply_augmentation(x, np.full((8, 2), 4), np.zeros(8, bool)), x)
    out = augment_batch(x, Rng(0))
    assert out.shape == x.shape and out.dtype == x.dtype


def test_augment_is_seeded():
    x = random_set(8).images
    assert np.array_equal(augment_batch(x, Rng(3)), augment_batch(x, Rng(3)))


def test_augmentation_frequencies():
    offsets, flips = draw_augmentation(10**4, Rng(1))
    assert abs(flips.mean() - 0.5) <= 0.02
    for axis in range(2):
        freq = np.bincount(offsets[:, axis], minlength=9) / 10**4
        assert len(freq) == 9
        assert np.all(np.abs(freq - 1 / 9) <= 0.01)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_augmentation_keeps_label_pairing(seed):
    # sentinel images: image i is constant i+1, label i
    n = 16
    images = np.broadcast_to(np.arange(1, n + 1, dtype=np.float32).reshape(n, 1, 1, 1), (n, 3, 32, 32)).copy()
    data = LabeledImageSet(images, np.arange(n), n)
    rng = Rng(seed)
    for xb, yb in batch_iterator(data, 5, shuffle=True, rng=rng):
        out = augment_batch(xb, rng)
        assert np.array_equal(out.max(axis=(1, 2, 3)), yb + 1)


def test_batch_counts():
    labels = np.zeros(50000, np.int64)
    data = LabeledImageSet(np.zeros((50000, 1, 1, 1), np.float32), labels, 10)
    sizes = [len(y) for _, y in batch_iterator(data, 128, shuffle=True, rng=Rng(0))]
    assert len(sizes) == 391 and sizes[-1] == 80


def test_batches_partition_and_determinism():
    data = LabeledImageSet(np.zeros((37, 1, 1, 1), np.float32), np.arange(37), 37)
    a = np.concatenate([y for _, y in batch_iterator(data, 8, True, Rng(4))])
    b = np.concatenate([y for _, y in batch_iterator(data, 8, True, Rng(4))])
    assert np.array_equal(a, b) and sorted(a.tolist()) == list(range(37))
    assert not np.array_equal(a, np.arange(37))
    ordered = np.concatenate([y for _, y in batch_iterator(data, 8, False)])
    assert np.array_equal(ordered, np.arange(37))
    with pytest.raises(ValueError):
        list(batch_iterator(data, 0, False))
