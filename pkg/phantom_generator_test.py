# -*- coding: utf-8 -*-
import json
import os
from dataclasses import replace

import numpy as np
import pytest
from scipy.ndimage import binary_dilation

from dataset_manager import load_dataset
from errors import ConfigError, RefusalError
from phantom_generator import (
    PhantomGenerator, PhantomSpec, derive_seed, generate_phantom, write_phantom_dataset,
)


def test_empty_spec_gives_empty_mask():
    sample = generate_phantom(PhantomSpec(canvas_size=(64, 64), cell_count=0, interference_count=0, seed=3))
    assert sample.mask.sum() == 0
    assert sample.metadata["dropped_cells"] == []
    assert sample.image.dtype == np.float32
    assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0


def test_same_seed_is_bit_identical():
    spec = PhantomSpec(canvas_size=(96, 128), seed=7)
    first, second = generate_phantom(spec), generate_phantom(spec.with_seed(7))
    assert first.image.tobytes() == second.image.tobytes()
    assert first.mask.tobytes() == second.mask.tobytes()
    assert first.metadata == second.metadata


def test_different_seed_differs():
    spec = PhantomSpec(canvas_size=(64, 64), seed=7)
    assert not np.array_equal(generate_phantom(spec).image, generate_phantom(spec.with_seed(8)).image)


def test_fully_covered_cell_is_dropped():
    spec = PhantomSpec(canvas_size=(64, 64), cell_count=1, interference_count=1, seed=5)
    layers = PhantomGenerator.rasterize(spec)
    cell = layers.cells[0]
    layers.blobs = [binary_dilation(cell, iterations=2)]
    layers.blob_shades = [1.0]

    overlap = (cell & layers.blobs[0]).sum() / cell.sum()
    assert overlap == 1.0

    sample = PhantomGenerator.compose(spec, layers)
    assert sample.mask.sum() == 0
    assert sample.metadata["dropped_cells"] == [0]
    assert sample.metadata["cells"][0]["overlap"] == 1.0


def test_lightly_covered_cell_keeps_uncovered_pixels():
    spec = PhantomSpec(canvas_size=(128, 128), cell_count=1, interference_count=1, seed=5)
    layers = PhantomGenerator.rasterize(spec)
    cell = layers.cells[0]
    blob = np.zeros_like(cell)
    ys, xs = np.nonzero(cell)
    blob[ys[0], xs[0]] = True
    layers.blobs = [blob]
    layers.blob_shades = [-1.0]

    sample = PhantomGenerator.compose(spec, layers)
    assert sample.metadata["dropped_cells"] == []
    np.testing.assert_array_equal(sample.mask, (cell & ~blob).astype(np.uint8))


@pytest.mark.parametrize("seed", range(8))
def test_no_mask_pixel_inside_interference(seed):
    spec = PhantomSpec(canvas_size=(64, 64), cell_count=8, interference_count=6, seed=seed)
    layers = PhantomGenerator.rasterize(spec)
    sample = PhantomGenerator.compose(spec, layers)
    cover = np.zeros(spec.canvas_size, dtype=bool)
    for blob in layers.blobs:
        cover |= blob
    assert not (sample.mask.astype(bool) & cover).any()

    dropped = set(sample.metadata["dropped_cells"])
    for index, cell in enumerate(layers.cells):
        ratio = (cell & cover).sum() / cell.sum()
        assert (index in dropped) == (ratio > spec.overlap_threshold)
        if index in dropped:
            others = np.zeros_like(cell)
            for j, other in enumerate(layers.cells):
                if j not in dropped:
                    others |= other
            assert not (sample.mask.astype(bool) & cell & ~others).any()


def test_background_amplitude():
    rng = np.random.default_rng(0)
    background = PhantomGenerator.textured_background(rng, (64, 64), 0.1)
    assert np.abs(background - 0.5).max() <= 0.1 + 1e-12
    assert background.std() > 0


def test_cells_are_low_contrast_and_interference_salient():
    spec = PhantomSpec(canvas_size=(128, 128), cell_count=4, interference_count=3, seed=1)
    layers = PhantomGenerator.rasterize(spec)
    sample = PhantomGenerator.compose(spec, layers)
    cover = np.zeros(spec.canvas_size, dtype=bool)
    for blob in layers.blobs:
        cover |= blob
    cells = np.zeros(spec.canvas_size, dtype=bool)
    for cell in layers.cells:
        cells |= cell
    background = ~(cover | cells)
    cell_shift = abs(sample.image[cells & ~cover].mean() - sample.image[background].mean())
    blob_shift = np.abs(sample.image[cover] - 0.5).mean()
    assert cell_shift < blob_shift


def test_halo_changes_image_not_mask():
    spec = PhantomSpec(canvas_size=(128, 128), cell_count=4, interference_count=2, seed=4)
    plain = generate_phantom(replace(spec, halo_strength=0.0))
    glowing = generate_phantom(spec)
    np.testing.assert_array_equal(plain.mask, glowing.mask)
    assert plain.metadata["dropped_cells"] == glowing.metadata["dropped_cells"]
    assert not np.array_equal(plain.image, glowing.image)


def test_halo_is_broad_and_centered_on_blob():
    spec = PhantomSpec(canvas_size=(256, 256), interference_contrast=0.5, halo_strength=0.6, halo_sigma=40.0)
    blob = np.zeros(spec.canvas_size, dtype=bool)
    blob[100:111, 60:71] = True
    halo = PhantomGenerator.interference_halo(blob, -1.0, spec)
    assert halo.min() == pytest.approx(-0.3)
    assert np.unravel_index(np.argmin(halo), halo.shape) == (105, 65)
    # sigma 40 이면 40 픽셀 떨어진 곳에서도 exp(-1/2) 만큼 남음
    assert halo[145, 65] == pytest.approx(-0.3 * np.exp(-0.5))
    assert np.all(halo <= 0.0)

    empty = PhantomGenerator.interference_halo(np.zeros_like(blob), 1.0, spec)
    assert not empty.any()


def test_cells_have_large_soma_and_few_lobes():
    rng = np.random.default_rng(2)
    for _ in range(10):
        cell, info = PhantomGenerator.star_cell(rng, (256, 256))
        assert 3 <= info["branches"] <= 5
        # 반지름 16 이상의 세포체를 포함
        assert cell.sum() >= np.pi * 16 ** 2 * 0.9


class TestPhantomSpec:
    def test_interference_must_be_more_salient(self):
        with pytest.raises(ConfigError):
            PhantomSpec(cell_contrast=0.3, interference_contrast=0.3)

    @pytest.mark.parametrize("kwargs", [
        {"canvas_size": (32, 64)}, {"cell_count": -1}, {"interference_count": -2}, {"overlap_threshold": 1.5},
        {"halo_strength": 1.2}, {"halo_sigma": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            PhantomSpec(**kwargs)

    def test_from_dict_ignores_split_counts(self):
        spec = PhantomSpec.from_dict({"canvas_size": [64, 80], "cell_count": 2, "train": 5, "test": 1}, seed=9)
        assert spec.canvas_size == (64, 80)
        assert spec.cell_count == 2
        assert spec.seed == 9


def test_derive_seed():
    assert derive_seed(1, "train", 0) == derive_seed(1, "train", 0)
    seeds = {derive_seed(1, split, i) for split in ("train", "test") for i in range(10)}
    assert len(seeds) == 20
    assert 0 <= derive_seed(1, "test", 3) < 2 ** 64


class TestWritePhantomDataset:
    def test_layout_and_meta(self, tmp_path):
        root = tmp_path / "phantom"
        spec = PhantomSpec(canvas_size=(64, 64))
        meta = write_phantom_dataset(str(root), 3, 2, spec, seed=1, run_config={"seed": 1})
        assert len(os.listdir(root / "images" / "train")) == 3
        assert len(os.listdir(root / "masks" / "test")) == 2
        on_disk = json.loads((root / "phantom_meta.json").read_text(encoding="utf-8"))
        assert on_disk == json.loads(json.dumps(meta))
        assert on_disk["config"] == {"seed": 1}
        assert [s["id"] for s in on_disk["samples"]["train"]] == [
            "phantom_train_0000", "phantom_train_0001", "phantom_train_0002",
        ]

    def test_loads_back(self, tmp_path):
        spec = PhantomSpec(canvas_size=(64, 64))
        write_phantom_dataset(str(tmp_path), 2, 1, spec, seed=4)
        handle = load_dataset(str(tmp_path), "train")
        expected = generate_phantom(spec.with_seed(derive_seed(4, "train", 1)))
        sample = handle.get("phantom_train_0001")
        np.testing.assert_array_equal(sample.mask, expected.mask)
        np.testing.assert_allclose(sample.image, np.round(expected.image * 255) / 255, atol=1e-6)

    def test_refuses_non_empty_directory(self, tmp_path):
        (tmp_path / "keep.txt").write_text("x")
        with pytest.raises(RefusalError):
            write_phantom_dataset(str(tmp_path), 1, 1, PhantomSpec(canvas_size=(64, 64)), seed=0)

    def test_force_rewrites_identically(self, tmp_path):
        spec = PhantomSpec(canvas_size=(64, 64))
        write_phantom_dataset(str(tmp_path), 2, 1, spec, seed=2)
        before = (tmp_path / "images" / "train" / "phantom_train_0001.png").read_bytes()
        write_phantom_dataset(str(tmp_path), 2, 1, spec, seed=2, force=True)
        after = (tmp_path / "images" / "train" / "phantom_train_0001.png").read_bytes()
        assert before == after

    def test_zero_counts_keep_layout(self, tmp_path):
        write_phantom_dataset(str(tmp_path), 0, 0, PhantomSpec(canvas_size=(64, 64)), seed=0)
        for sub in ("images", "masks"):
            for split in ("train", "test"):
                assert (tmp_path / sub / split).is_dir()
