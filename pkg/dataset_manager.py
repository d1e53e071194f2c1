# -*- coding: utf-8 -*-
import os
import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch.utils.data import Dataset

from config import IMAGE_EXTENSIONS, MASK_THRESHOLD
from errors import DatasetNotFound, PairingError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
BACKBONE_STRIDE = 32


@dataclass
class SegmentationSample:
    """
    흑백 현미경 이미지 한 장과 이진 정답 마스크

    Attributes:
        image (np.ndarray): float32 [H, W], 값 범위 [0, 1]
        mask (np.ndarray): uint8 [H, W], 값은 0 또는 1
        id (str): 샘플 식별자
        metadata (dict): 생성기 정보 등 부가 정보
    """
    image: np.ndarray
    mask: np.ndarray
    id: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.image.ndim != 2 or self.image.shape != self.mask.shape:
            raise ShapeError(
                f"샘플 {self.id}: 이미지 {self.image.shape} 와 마스크 {self.mask.shape} 모양이 다릅니다"
            )
        if not np.isin(self.mask, (0, 1)).all():
            raise ValidationError(f"샘플 {self.id}: 마스크 값은 0/1 이어야 합니다")
        if self.image.size and (self.image.min() < 0.0 or self.image.max() > 1.0):
            raise ValidationError(f"샘플 {self.id}: 이미지 밝기는 [0, 1] 범위여야 합니다")

    @property
    def shape(self):
        return self.image.shape


class DatasetHandle:
    """
    한 split의 샘플 목록 (id 사전순, 지연 로딩)

    source가 'disk'이면 접근할 때 파일을 읽고,
    'synthetic'이면 메모리에 있는 샘플을 그대로 돌려줍니다.
    """

    def __init__(self, split, source, ids, loader):
        if split not in SPLITS:
            raise ValidationError(f"split은 {SPLITS} 중 하나여야 합니다: {split}")
        ids = list(ids)
        if len(set(ids)) != len(ids):
            raise ValidationError(f"{split} split에 중복된 샘플 id가 있습니다")
        self.split = split
        self.source = source
        self.ids = sorted(ids)
        self._loader = loader

    @classmethod
    def from_samples(cls, split, samples):
        """메모리의 샘플 목록으로 핸들을 만듭니다 (합성 데이터용)"""
        by_id = {s.id: s for s in samples}
        if len(by_id) != len(samples):
            raise ValidationError(f"{split} split에 중복된 샘플 id가 있습니다")
        return cls(split, "synthetic", by_id.keys(), by_id.__getitem__)

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, index):
        return self._loader(self.ids[index])

    def __iter__(self):
        for sample_id in self.ids:
            yield self._loader(sample_id)

    def get(self, sample_id):
        if sample_id not in self.ids:
            raise KeyError(sample_id)
        return self._loader(sample_id)


def _list_stems(directory):
    """디렉토리 안의 이미지 파일을 stem -> 파일명 으로 정리합니다."""
    stems = {}
    for filename in os.listdir(directory):
        stem, ext = os.path.splitext(filename)
        if ext.lower() in IMAGE_EXTENSIONS:
            stems[stem] = filename
    return stems


def read_image(path):
    """8비트 흑백 이미지를 [0, 1] float32 배열로 읽습니다."""
    with Image.open(path) as img:
        array = np.asarray(img.convert("L"), dtype=np.uint8)
    return array.astype(np.float32) / 255.0


def read_mask(path):
    """8비트 마스크를 읽어 > 127 기준으로 이진화합니다."""
    with Image.open(path) as img:
        array = np.asarray(img.convert("L"), dtype=np.uint8)
    return (array > MASK_THRESHOLD).astype(np.uint8)


def load_dataset(root_path, split):
    """
    root/images/<split>/ 와 root/masks/<split>/ 에서 데이터셋을 불러옵니다.

    Args:
        root_path (str): 데이터셋 루트
        split (str): 'train' 또는 'test'

    Returns:
        DatasetHandle: 지연 로딩되는 샘플 핸들

    Raises:
        DatasetNotFound: 디렉토리가 없거나 이미지가 하나도 없을 때
        PairingError: 이미지/마스크 짝이 맞지 않을 때
    """
    if split not in SPLITS:
        raise ValidationError(f"split은 {SPLITS} 중 하나여야 합니다: {split}")

    image_dir = os.path.join(root_path, "images", split)
    mask_dir = os.path.join(root_path, "masks", split)
    for directory in (image_dir, mask_dir):
        if not os.path.isdir(directory):
            raise DatasetNotFound(f"데이터셋 디렉토리가 없습니다: {directory}")

    images = _list_stems(image_dir)
    masks = _list_stems(mask_dir)
    if not images:
        raise DatasetNotFound(f"이미지가 없습니다: {image_dir}")

    orphans = sorted(set(images) ^ set(masks))
    if orphans:
        details = []
        for stem in orphans:
            if stem in images:
                details.append(f"{images[stem]} (마스크 없음)")
            else:
                details.append(f"{masks[stem]} (이미지 없음)")
        raise PairingError(f"짝이 없는 파일: {', '.join(details)}", orphans=orphans)

    def loader(sample_id):
        image = read_image(os.path.join(image_dir, images[sample_id]))
        mask = read_mask(os.path.join(mask_dir, masks[sample_id]))
        return SegmentationSample(image=image, mask=mask, id=sample_id)

    logger.info(f"📂 데이터셋 로드: {root_path} [{split}] {len(images)}개")
    return DatasetHandle(split, "disk", images.keys(), loader)


def check_target_size(target):
    """리사이즈 목표 크기가 백본 stride 계약을 만족하는지 확인합니다."""
    h, w = int(target[0]), int(target[1])
    if h < BACKBONE_STRIDE or w < BACKBONE_STRIDE or h % BACKBONE_STRIDE or w % BACKBONE_STRIDE:
        raise ShapeError(f"목표 크기 {h}x{w} 는 32 이상이고 32로 나누어떨어져야 합니다")
    return h, w


def resize_sample(sample, target):
    """
    이미지는 bilinear, 마스크는 nearest로 리사이즈합니다.

    Args:
        sample (SegmentationSample): 원본 샘플
        target (tuple): (h, w)

    Returns:
        SegmentationSample: 리사이즈된 샘플 (id 유지)
    """
    h, w = check_target_size(target)
    if sample.shape == (h, w):
        return SegmentationSample(
            image=sample.image.copy(), mask=sample.mask.copy(),
            id=sample.id, metadata=dict(sample.metadata),
        )

    image = torch.from_numpy(np.ascontiguousarray(sample.image, dtype=np.float32))[None, None]
    image = F.interpolate(image, size=(h, w), mode="bilinear", align_corners=False)
    mask = torch.from_numpy(sample.mask.astype(np.float32))[None, None]
    mask = F.interpolate(mask, size=(h, w), mode="nearest")

    return SegmentationSample(
        image=image[0, 0].clamp(0.0, 1.0).numpy(),
        mask=mask[0, 0].numpy().astype(np.uint8),
        id=sample.id,
        metadata=dict(sample.metadata),
    )


def to_three_channels(image):
    """흑백 [H, W] 이미지를 백본 입력용 [3, H, W] 텐서로 복제합니다."""
    tensor = torch.as_tensor(image, dtype=torch.float32)
    return tensor.unsqueeze(0).expand(3, -1, -1).contiguous()


def write_sample(root_path, split, sample):
    """샘플을 8비트 PNG 이미지/마스크(0/255)로 저장합니다."""
    image_dir = os.path.join(root_path, "images", split)
    mask_dir = os.path.join(root_path, "masks", split)
    os.makedirs(image_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)

    image = np.round(np.clip(sample.image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(image).save(os.path.join(image_dir, f"{sample.id}.png"))
    Image.fromarray(sample.mask.astype(np.uint8) * 255).save(
        os.path.join(mask_dir, f"{sample.id}.png")
    )


class SegmentationDataset(Dataset):
    """
    DatasetHandle을 학습용 텐서로 바꿔주는 torch Dataset

    반환: (image [3, H, W], mask [1, H, W], id)
    뒤집기 증강은 기본 꺼짐이며, (seed, epoch, index)로만 결정됩니다.
    """

    def __init__(self, handle, target_size=None, augment_flip=False, seed=0):
        self.handle = handle
        self.target_size = check_target_size(target_size) if target_size else None
        self.augment_flip = augment_flip
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch):
        self.epoch = epoch

    def __len__(self):
        return len(self.handle)

    def __getitem__(self, index):
        sample = self.handle[index]
        if self.target_size:
            sample = resize_sample(sample, self.target_size)

        image = to_three_channels(sample.image)
        mask = torch.from_numpy(sample.mask.astype(np.float32)).unsqueeze(0)

        if self.augment_flip:
            rng = np.random.default_rng([self.seed, self.epoch, index])
            flip_h, flip_v = rng.random(2) < 0.5
            if flip_h:
                image, mask = image.flip(-1), mask.flip(-1)
            if flip_v:
                image, mask = image.flip(-2), mask.flip(-2)

        return image, mask, sample.id
