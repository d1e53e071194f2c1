# -*- coding: utf-8 -*-
import os
import json
import shutil
import logging
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy.ndimage import gaussian_filter

from config import PHANTOM_META_FILE
from dataset_manager import SegmentationSample, write_sample
from errors import ConfigError, RefusalError

logger = logging.getLogger(__name__)

# 배경 텍스처: 스무딩된 노이즈 옥타브 (sigma, 가중치)
BACKGROUND_OCTAVES = ((16.0, 1.0), (8.0, 0.5), (4.0, 0.25))
BACKGROUND_LEVEL = 0.5
PIXEL_NOISE = 0.01


@dataclass
class PhantomSpec:
    """합성 팬텀 한 장의 생성 파라미터 (spec + seed 가 같으면 결과도 같음)"""
    canvas_size: tuple = (256, 256)
    cell_count: int = 6
    interference_count: int = 3
    cell_contrast: float = 0.12
    interference_contrast: float = 0.5
    seed: int = 0
    overlap_threshold: float = 0.5
    background_amplitude: float = 0.1
    halo_strength: float = 0.6
    halo_sigma: float = 40.0

    def __post_init__(self):
        self.canvas_size = (int(self.canvas_size[0]), int(self.canvas_size[1]))
        if min(self.canvas_size) < 64:
            raise ConfigError(f"캔버스는 64x64 이상이어야 합니다: {self.canvas_size}")
        if self.cell_count < 0 or self.interference_count < 0:
            raise ConfigError("세포/간섭 개수는 0 이상이어야 합니다")
        for name in ("cell_contrast", "interference_contrast", "overlap_threshold", "halo_strength"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} 는 [0, 1] 범위여야 합니다: {value}")
        if self.interference_contrast <= self.cell_contrast:
            raise ConfigError("간섭 대비(interference_contrast)는 세포 대비보다 커야 합니다")
        if self.halo_sigma <= 0:
            raise ConfigError(f"halo_sigma 는 양수여야 합니다: {self.halo_sigma}")

    @classmethod
    def from_dict(cls, section, seed=0):
        """설정의 phantom 섹션으로 스펙을 만듭니다 (train/test 개수는 무시)"""
        keys = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        keys["seed"] = seed
        return cls(**keys)

    def with_seed(self, seed):
        values = asdict(self)
        values["seed"] = int(seed)
        return PhantomSpec(**values)


@dataclass
class PhantomLayers:
    """생성기가 래스터화한 도형들 (정답 마스크 계산의 근거)"""
    background: np.ndarray
    cells: list = field(default_factory=list)
    blobs: list = field(default_factory=list)
    blob_shades: list = field(default_factory=list)
    cell_info: list = field(default_factory=list)
    blob_info: list = field(default_factory=list)
    noise: np.ndarray = None


class PhantomGenerator:
    """성상세포(astrocyte) 모양 팬텀을 만드는 클래스"""

    @classmethod
    def textured_background(cls, rng, shape, amplitude):
        """스무딩된 노이즈 3 옥타브의 합, 진폭 amplitude"""
        texture = np.zeros(shape, dtype=np.float64)
        for sigma, weight in BACKGROUND_OCTAVES:
            noise = gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode="wrap")
            peak = np.abs(noise).max()
            if peak > 0:
                texture += weight * noise / peak
        peak = np.abs(texture).max()
        if peak > 0:
            texture = texture / peak
        return BACKGROUND_LEVEL + amplitude * texture

    @classmethod
    def star_cell(cls, rng, shape):
        """
        굵은 돌기가 뻗은 별 모양 세포 하나를 래스터화합니다.
        반지름 r(θ) = soma + Σ 돌기길이·exp(-(Δθ)²/2σ²)

        Returns:
            tuple: (bool 마스크, 메타데이터 dict)
        """
        h, w = shape
        scale = min(h, w) / 256.0
        cy = rng.uniform(0.1, 0.9) * h
        cx = rng.uniform(0.1, 0.9) * w
        soma = rng.uniform(16.0, 24.0) * scale
        n_branches = int(rng.integers(3, 6))
        angles = rng.uniform(0.0, 2 * np.pi, size=n_branches)
        lengths = rng.uniform(8.0, 18.0, size=n_branches) * scale
        width = rng.uniform(0.3, 0.5)

        yy, xx = np.mgrid[0:h, 0:w]
        dy, dx = yy - cy, xx - cx
        dist = np.hypot(dy, dx)
        theta = np.arctan2(dy, dx)
        radius = np.full(shape, soma)
        for angle, length in zip(angles, lengths):
            delta = np.angle(np.exp(1j * (theta - angle)))
            radius += length * np.exp(-(delta ** 2) / (2 * width ** 2))
        cell = dist <= radius
        cell[int(cy), int(cx)] = True

        info = {
            "center": [round(float(cy), 3), round(float(cx), 3)],
            "branches": n_branches,
        }
        return cell, info

    @classmethod
    def interference_blob(cls, rng, shape):
        """조밀한 타원형 간섭(죽은 세포, 잔해) 하나를 래스터화합니다."""
        h, w = shape
        scale = min(h, w) / 256.0
        cy = rng.uniform(0.05, 0.95) * h
        cx = rng.uniform(0.05, 0.95) * w
        ry, rx = rng.uniform(6.0, 14.0, size=2) * scale
        yy, xx = np.mgrid[0:h, 0:w]
        blob = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        blob[int(cy), int(cx)] = True
        shade = 1.0 if rng.random() < 0.5 else -1.0
        info = {
            "center": [round(float(cy), 3), round(float(cx), 3)],
            "radii": [round(float(ry), 3), round(float(rx), 3)],
        }
        return blob, shade, info

    @classmethod
    def interference_halo(cls, blob, shade, spec):
        """
        간섭 주변으로 넓게 번지는 저주파 밝기 변화 (이미지에만 더하고 마스크와 겹침 계산에는 쓰지 않음)
        중심은 간섭 영역의 무게중심, 폭은 halo_sigma (256 캔버스 기준 픽셀)
        """
        h, w = spec.canvas_size
        ys, xs = np.nonzero(blob)
        if ys.size == 0 or spec.halo_strength == 0.0:
            return np.zeros((h, w), dtype=np.float64)
        sigma = spec.halo_sigma * min(h, w) / 256.0
        yy, xx = np.mgrid[0:h, 0:w]
        dist2 = (yy - ys.mean()) ** 2 + (xx - xs.mean()) ** 2
        amplitude = spec.halo_strength * spec.interference_contrast * shade
        return amplitude * np.exp(-dist2 / (2.0 * sigma ** 2))

    @classmethod
    def rasterize(cls, spec):
        """spec의 seed로 배경과 모든 도형을 결정적으로 만듭니다."""
        rng = np.random.default_rng(spec.seed)
        layers = PhantomLayers(
            background=cls.textured_background(rng, spec.canvas_size, spec.background_amplitude)
        )
        for _ in range(spec.cell_count):
            cell, info = cls.star_cell(rng, spec.canvas_size)
            layers.cells.append(cell)
            layers.cell_info.append(info)
        for _ in range(spec.interference_count):
            blob, shade, info = cls.interference_blob(rng, spec.canvas_size)
            layers.blobs.append(blob)
            layers.blob_shades.append(shade)
            layers.blob_info.append(info)
        layers.noise = rng.normal(0.0, PIXEL_NOISE, size=spec.canvas_size)
        return layers

    @classmethod
    def compose(cls, spec, layers, sample_id=None):
        """
        도형을 합성해 이미지와 정답 마스크를 만듭니다.
        간섭과 겹친 비율이 overlap_threshold를 넘는 세포는 마스크에서 통째로 빠지고,
        남은 세포도 간섭 아래 픽셀은 마스크에 들어가지 않습니다.
        간섭마다 넓은 저주파 halo 가 먼저 더해지고 그 위에 간섭 자체가 덮입니다.
        """
        shape = spec.canvas_size
        image = np.array(layers.background, dtype=np.float64)
        cover = np.zeros(shape, dtype=bool)
        for blob in layers.blobs:
            cover |= blob

        mask = np.zeros(shape, dtype=bool)
        cell_records = []
        dropped = []
        for index, cell in enumerate(layers.cells):
            area = int(cell.sum())
            overlap = float((cell & cover).sum()) / area if area else 0.0
            image += spec.cell_contrast * gaussian_filter(cell.astype(np.float64), sigma=0.7)
            record = dict(layers.cell_info[index]) if index < len(layers.cell_info) else {}
            record.update({"index": index, "area": area, "overlap": round(overlap, 6)})
            cell_records.append(record)
            if overlap > spec.overlap_threshold:
                dropped.append(index)
            else:
                mask |= cell

        shades = layers.blob_shades or [1.0] * len(layers.blobs)
        for blob, shade in zip(layers.blobs, shades):
            image += cls.interference_halo(blob, shade, spec)

        for blob, shade in zip(layers.blobs, shades):
            alpha = np.clip(gaussian_filter(blob.astype(np.float64), sigma=2.0), 0.0, 1.0)
            alpha[blob] = np.maximum(alpha[blob], 0.85)
            target = BACKGROUND_LEVEL + shade * spec.interference_contrast
            image = (1.0 - alpha) * image + alpha * target

        if layers.noise is not None:
            image = image + layers.noise
        mask &= ~cover

        metadata = {
            "spec": asdict(spec),
            "cells": cell_records,
            "dropped_cells": dropped,
            "interference": list(layers.blob_info),
        }
        return SegmentationSample(
            image=np.clip(image, 0.0, 1.0).astype(np.float32),
            mask=mask.astype(np.uint8),
            id=sample_id or f"phantom_{spec.seed}",
            metadata=metadata,
        )


def generate_phantom(spec, sample_id=None):
    """
    PhantomSpec 으로 합성 샘플 하나를 만듭니다 (spec, seed 의 순수 함수).

    Returns:
        SegmentationSample: metadata['dropped_cells'] 에 제외된 세포 목록
    """
    layers = PhantomGenerator.rasterize(spec)
    return PhantomGenerator.compose(spec, layers, sample_id=sample_id)


def derive_seed(base_seed, split, index):
    """(기본 seed, split, 인덱스)로 샘플별 seed를 만듭니다."""
    split_code = 0 if split == "train" else 1
    state = np.random.SeedSequence([int(base_seed), split_code, int(index)]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def write_phantom_dataset(root_path, n_train, n_test, base_spec, seed, force=False, run_config=None):
    """
    데이터 모듈 디렉토리 구조로 팬텀 데이터셋을 저장합니다.

    Args:
        root_path (str): 출력 루트
        n_train (int): train 샘플 수
        n_test (int): test 샘플 수
        base_spec (PhantomSpec): seed를 제외한 공통 파라미터
        seed (int): 기본 seed
        force (bool): 비어 있지 않은 기존 디렉토리를 덮어쓸지 여부
        run_config (dict, optional): phantom_meta.json 에 기록할 유효 설정

    Returns:
        dict: phantom_meta.json 내용
    """
    if os.path.isdir(root_path) and os.listdir(root_path):
        if not force:
            raise RefusalError(f"출력 디렉토리가 비어 있지 않습니다 (--force 필요): {root_path}")
        logger.warning(f"⚠️ 기존 디렉토리를 덮어씁니다: {root_path}")
        for sub in ("images", "masks"):
            shutil.rmtree(os.path.join(root_path, sub), ignore_errors=True)

    for split in ("train", "test"):
        os.makedirs(os.path.join(root_path, "images", split), exist_ok=True)
        os.makedirs(os.path.join(root_path, "masks", split), exist_ok=True)

    meta = {"config": run_config, "seed": seed, "samples": {"train": [], "test": []}}
    for split, count in (("train", n_train), ("test", n_test)):
        for index in range(count):
            spec = base_spec.with_seed(derive_seed(seed, split, index))
            sample = generate_phantom(spec, sample_id=f"phantom_{split}_{index:04d}")
            write_sample(root_path, split, sample)
            meta["samples"][split].append({
                "id": sample.id,
                "spec": sample.metadata["spec"],
                "dropped_cells": sample.metadata["dropped_cells"],
                "cells": len(sample.metadata["cells"]),
            })

    with open(os.path.join(root_path, PHANTOM_META_FILE), "w", encoding="utf-8") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2)

    logger.info(f"🧪 팬텀 데이터셋 생성 완료: {root_path} (train {n_train}, test {n_test})")
    return meta
