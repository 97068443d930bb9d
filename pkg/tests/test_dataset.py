"""Tests for IDX loading, task construction, and pixel permutations."""

from __future__ import annotations

import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colanet_cl.dataset import (
    EMNIST_LETTER_CLASSES,
    DataError,
    IdxFormatError,
    LabeledDataset,
    PixelPermutation,
    apply_permutation,
    gen_permutation,
    load_idx,
    make_emnist_letters,
    make_mnist_truncated,
    make_permuted_stream,
)
from colanet_cl.seeding import derive_seed

from conftest import requires_mnist, write_idx


# ---------------------------------------------------------------- IDX files


def test_load_idx_label_roundtrip(tmp_path):
    labels = np.arange(10, dtype=np.uint8)
    path = str(tmp_path / "labels")
    write_idx(path, labels)
    assert np.array_equal(load_idx(path), labels)


def test_load_idx_image_roundtrip(tmp_path):
    images = np.arange(3 * 28 * 28, dtype=np.uint64).reshape(3, 28, 28) % 256
    path = str(tmp_path / "images")
    write_idx(path, images)
    loaded = load_idx(path)
    assert loaded.shape == (3, 28, 28)
    assert np.array_equal(loaded, images.astype(np.uint8))


def test_load_idx_gzip_variant(tmp_path):
    labels = np.array([1, 2, 3], dtype=np.uint8)
    plain = tmp_path / "labels"
    write_idx(str(plain), labels)
    gz = tmp_path / "labels.gz"
    gz.write_bytes(gzip.compress(plain.read_bytes()))
    assert np.array_equal(load_idx(str(gz)), labels)


def test_load_idx_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_idx(str(tmp_path / "absent"))


def test_load_idx_bad_magic(tmp_path):
    path = tmp_path / "bad"
    path.write_bytes(struct.pack(">I", 0x00000999) + b"\x00" * 8)
    with pytest.raises(IdxFormatError, match="magic"):
        load_idx(str(path))


def test_load_idx_truncated_header(tmp_path):
    path = tmp_path / "short"
    path.write_bytes(b"\x00\x00")
    with pytest.raises(IdxFormatError, match="truncated header"):
        load_idx(str(path))


def test_load_idx_truncated_dimensions(tmp_path):
    path = tmp_path / "dims"
    path.write_bytes(struct.pack(">I", 0x00000803) + struct.pack(">I", 1))
    with pytest.raises(IdxFormatError, match="truncated dimension"):
        load_idx(str(path))


def test_load_idx_truncated_payload(tmp_path):
    path = tmp_path / "payload"
    path.write_bytes(struct.pack(">II", 0x00000801, 10) + b"\x00" * 9)
    with pytest.raises(IdxFormatError, match="truncated payload"):
        load_idx(str(path))


def test_load_idx_trailing_bytes(tmp_path):
    path = tmp_path / "long"
    path.write_bytes(struct.pack(">II", 0x00000801, 2) + b"\x00" * 3)
    with pytest.raises(IdxFormatError, match="exceeds"):
        load_idx(str(path))


# ---------------------------------------------------------- permutations


def test_gen_permutation_seed_zero_is_identity():
    assert np.array_equal(gen_permutation(0).mapping, np.arange(784))


def test_gen_permutation_deterministic():
    assert np.array_equal(gen_permutation(99).mapping, gen_permutation(99).mapping)


@settings(max_examples=30)
@given(st.integers(min_value=1, max_value=2**63))
def test_gen_permutation_is_bijection(seed):
    mapping = gen_permutation(seed).mapping
    assert np.array_equal(np.sort(mapping), np.arange(784))


def test_gen_permutation_distinct_seeds_differ():
    assert not np.array_equal(gen_permutation(1).mapping, gen_permutation(2).mapping)


def test_permutation_validation_rejects_short_mapping():
    with pytest.raises(ValueError):
        PixelPermutation(np.arange(10))


def test_permutation_validation_rejects_repeats():
    mapping = np.zeros(784, dtype=np.int64)
    with pytest.raises(ValueError):
        PixelPermutation(mapping)


def test_permutation_inverse_roundtrip():
    perm = gen_permutation(7)
    img = np.arange(784, dtype=np.uint8)
    assert np.array_equal(
        apply_permutation(apply_permutation(img, perm), perm.inverse()), img
    )


@settings(max_examples=20)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=0, max_value=2**31))
def test_apply_permutation_preserves_histogram(perm_seed, img_seed):
    perm = gen_permutation(perm_seed)
    img = np.random.default_rng(img_seed).integers(0, 256, size=784, dtype=np.uint8)
    out = apply_permutation(img, perm)
    assert np.array_equal(np.bincount(out, minlength=256), np.bincount(img, minlength=256))


def test_apply_permutation_batch_matches_single():
    perm = gen_permutation(11)
    batch = np.random.default_rng(0).integers(0, 256, size=(5, 784), dtype=np.uint8)
    out = apply_permutation(batch, perm)
    assert out.shape == (5, 784)
    for i in range(5):
        assert np.array_equal(out[i], apply_permutation(batch[i], perm))


# ------------------------------------------------------------- MNIST tasks


@requires_mnist
def test_make_mnist_truncated_shapes(mnist_dir, mnist_arrays):
    task = make_mnist_truncated(mnist_dir)
    assert task.task_id == 1
    assert task.source == "mnist-truncated"
    assert task.class_count == 10
    assert len(task.train) == 24000
    assert len(task.test) == 4000
    # Truncation keeps the file-order prefix.
    train_images, train_labels, _, _ = mnist_arrays
    assert np.array_equal(task.train.images[0], train_images[0])
    assert np.array_equal(task.train.labels[:50], train_labels[:50])


@requires_mnist
def test_make_permuted_stream_structure(mnist_dir):
    tasks = make_permuted_stream(3, base_seed=5, data_dir=mnist_dir, train_count=100)
    assert [t.task_id for t in tasks] == [1, 2, 3]
    assert tasks[0].source == "permuted-mnist(seed=0)"
    for task in tasks:
        assert len(task.train) == 100
        assert len(task.test) == 10000
        assert task.class_count == 10

    # Task 1 is plain MNIST; later tasks are pixel-shuffled copies of it.
    base = tasks[0].train.images
    for task in tasks[1:]:
        assert not np.array_equal(task.train.images, base)
        assert np.array_equal(
            np.sort(task.train.images[0]), np.sort(base[0])
        )
        assert np.array_equal(task.train.labels, tasks[0].train.labels)

    # Permutation seeds are derived, not positional: different base seeds
    # give different task-2 pixels, and the derivation path is documented.
    other = make_permuted_stream(2, base_seed=6, data_dir=mnist_dir, train_count=100)
    assert not np.array_equal(other[1].train.images, tasks[1].train.images)
    expected_seed = derive_seed(5, "permutation", 2)
    assert tasks[1].source == f"permuted-mnist(seed={expected_seed})"


@requires_mnist
def test_make_permuted_stream_rejects_zero_tasks(mnist_dir):
    with pytest.raises(ValueError):
        make_permuted_stream(0, base_seed=1, data_dir=mnist_dir)


# ------------------------------------------------------------ EMNIST task


def test_emnist_letters_relabeling(emnist_corpus):
    task = make_emnist_letters(emnist_corpus["dir"])
    assert task.source == "emnist-letters"
    assert task.class_count == 10
    n = emnist_corpus["train_rows_per_class"]
    assert len(task.train) == n * len(EMNIST_LETTER_CLASSES)
    assert len(task.test) == emnist_corpus["test_rows_per_class"] * len(
        EMNIST_LETTER_CLASSES
    )
    # Every retained class appears exactly n times, relabeled 0..9 in the
    # declared letter order.
    counts = np.bincount(task.train.labels, minlength=10)
    assert counts.tolist() == [n] * 10


def test_emnist_letters_undoes_stored_transpose(emnist_corpus):
    task = make_emnist_letters(emnist_corpus["dir"])
    glyphs = emnist_corpus["glyphs"]
    for new_label, letter in enumerate(EMNIST_LETTER_CLASSES):
        balanced_id = 10 + ord(letter) - ord("A")
        rows = task.train.images[task.train.labels == new_label]
        expected = glyphs[balanced_id].reshape(784)
        for row in rows:
            assert np.array_equal(row, expected)


def test_emnist_letters_filters_non_letters(emnist_corpus):
    # The synthetic corpus contains digit and lowercase rows whose glyph
    # bands would collide with letters if they leaked through.
    task = make_emnist_letters(emnist_corpus["dir"], classes=("C", "F"))
    assert task.class_count == 2
    assert set(task.train.labels.tolist()) == {0, 1}


def test_emnist_letters_rejects_non_letter_class(emnist_corpus):
    with pytest.raises(DataError, match="letter class"):
        make_emnist_letters(emnist_corpus["dir"], classes=("a",))
    with pytest.raises(DataError, match="letter class"):
        make_emnist_letters(emnist_corpus["dir"], classes=("AB",))


def test_emnist_letters_rejects_absent_class(tmp_path, emnist_corpus):
    # A corpus holding only class 'A' cannot serve a request for 'Z'.
    from colanet_cl.dataset import EMNIST_FILES

    labels = np.full(4, 10, dtype=np.uint8)
    images = np.zeros((4, 28, 28), dtype=np.uint8)
    for key in ("train", "test"):
        write_idx(str(tmp_path / EMNIST_FILES[f"{key}_images"]), images)
        write_idx(str(tmp_path / EMNIST_FILES[f"{key}_labels"]), labels)
    with pytest.raises(DataError, match="absent"):
        make_emnist_letters(str(tmp_path), classes=("A", "Z"))


def test_emnist_letters_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        make_emnist_letters(str(tmp_path))


# ------------------------------------------------------------- validation


def test_labeled_dataset_rejects_length_mismatch():
    with pytest.raises(ValueError):
        LabeledDataset(
            images=np.zeros((3, 784), dtype=np.uint8),
            labels=np.zeros(2, dtype=np.int64),
            class_count=10,
        )


def test_labeled_dataset_rejects_out_of_range_labels():
    with pytest.raises(ValueError):
        LabeledDataset(
            images=np.zeros((2, 784), dtype=np.uint8),
            labels=np.array([0, 10], dtype=np.int64),
            class_count=10,
        )
