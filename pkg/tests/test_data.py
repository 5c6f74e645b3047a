"""Dataset generation, target assignment, and PPM round-trips."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advarena import data
from advarena.rng import Rng


def test_same_seed_bit_identical_split():
    a = data.generate(n_classes=4, n_per_class=3, size=16, seed=9)
    b = data.generate(n_classes=4, n_per_class=3, size=16, seed=9)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert ra.image_id == rb.image_id
        assert ra.true_label == rb.true_label
        assert np.array_equal(ra.pixels, rb.pixels)


def test_different_seed_differs():
    a = data.generate(n_classes=3, n_per_class=2, size=16, seed=1)
    b = data.generate(n_classes=3, n_per_class=2, size=16, seed=2)
    assert any(not np.array_equal(ra.pixels, rb.pixels)
               for ra, rb in zip(a.records, b.records))


def test_class_histogram_exact():
    split = data.generate(n_classes=5, n_per_class=7, size=16, seed=4)
    counts = {}
    for rec in split.records:
        counts[rec.true_label] = counts.get(rec.true_label, 0) + 1
    assert counts == {c: 7 for c in range(5)}


def test_pixels_in_unit_range_on_8bit_grid():
    split = data.generate(n_classes=3, n_per_class=2, size=16, seed=12)
    for rec in split.records:
        assert rec.pixels.shape == (3, 16, 16)
        assert np.all((rec.pixels >= 0.0) & (rec.pixels <= 1.0))
        grid = np.round(rec.pixels * 255.0)
        assert np.allclose(rec.pixels, grid / 255.0, atol=0)


def test_assign_targets_never_true_label():
    split = data.generate(n_classes=6, n_per_class=5, size=16, seed=3)
    with_targets = data.assign_targets(split, seed=44)
    assert all(r.target_label is not None and r.target_label != r.true_label
               for r in with_targets.records)


def test_assign_targets_two_classes_forced():
    split = data.generate(n_classes=2, n_per_class=4, size=16, seed=5)
    with_targets = data.assign_targets(split, seed=6)
    assert all(r.target_label == 1 - r.true_label for r in with_targets.records)


def test_assign_targets_uniform_within_3_sigma():
    # 10000 draws over C-1 = 4 alternatives: expect 2500 per class, sigma
    # = sqrt(n p (1-p)) ~ 43.3
    split = data.generate(n_classes=5, n_per_class=2000, size=8, seed=77)
    with_targets = data.assign_targets(split, seed=78)
    true0 = [r for r in with_targets.records if r.true_label == 0]
    counts = np.zeros(5)
    for rec in true0:
        counts[rec.target_label] += 1
    assert counts[0] == 0
    expect = len(true0) / 4.0
    sigma = np.sqrt(len(true0) * 0.25 * 0.75)
    assert np.all(np.abs(counts[1:] - expect) <= 3 * sigma)


def test_ppm_roundtrip_bit_exact(tmp_path):
    split = data.generate(n_classes=3, n_per_class=2, size=16, seed=21)
    path = str(tmp_path / "img.ppm")
    for rec in split.records:
        data.write_image(path, rec.pixels)
        back = data.read_image(path)
        assert np.array_equal(back, rec.pixels)


def test_ppm_boundary_images_roundtrip(tmp_path):
    path = str(tmp_path / "b.ppm")
    for value in (0.0, 1.0):
        img = np.full((3, 8, 8), value)
        data.write_image(path, img)
        assert np.array_equal(data.read_image(path), img)


def test_ppm_rejects_wrong_maxval(tmp_path):
    path = tmp_path / "bad.ppm"
    path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(ValueError, match="maxval"):
        data.read_image(str(path))


def test_ppm_rejects_truncated(tmp_path):
    path = tmp_path / "short.ppm"
    path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(ValueError):
        data.read_image(str(path))


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=20, deadline=None)
def test_ppm_roundtrip_random_grids(seed):
    rng = Rng(seed)
    img = np.round(rng.uniform_array((3, 5, 5)) * 255.0) / 255.0
    path = f"/tmp/advarena_ppm_{os.getpid()}.ppm"
    data.write_image(path, img)
    try:
        assert np.array_equal(data.read_image(path), img)
    finally:
        os.remove(path)


def test_split_write_load_roundtrip(tmp_path):
    split = data.generate(n_classes=3, n_per_class=2, size=16, seed=30)
    split = data.assign_targets(split, seed=31)
    directory = str(tmp_path / "split")
    data.write_split(split, directory)
    back = data.load_split(directory)
    assert len(back.records) == len(split.records)
    for ra, rb in zip(split.records, back.records):
        assert ra.image_id == rb.image_id
        assert ra.true_label == rb.true_label
        assert ra.target_label == rb.target_label
        assert np.array_equal(ra.pixels, rb.pixels)


def test_renderers_distinguish_classes():
    split = data.generate(n_classes=10, n_per_class=1, size=32, seed=55)
    images = [r.pixels for r in split.records]
    for i in range(len(images)):
        for j in range(i + 1, len(images)):
            assert not np.array_equal(images[i], images[j])
