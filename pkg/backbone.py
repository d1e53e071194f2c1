# -*- coding: utf-8 -*-
import os
import pickle
import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
from torchvision.models import resnet50

from config import BACKBONE_CHANNELS
from errors import ConfigError, ShapeError, WeightLoadError

logger = logging.getLogger(__name__)

LEVELS = (3, 4, 5)
LEVEL_STRIDES = {3: 8, 4: 16, 5: 32}


@dataclass
class BackboneConfig:
    """백본 설정 (기본: 50층 residual network)"""
    variant: str = "resnet50"
    pretrained_weights: Optional[str] = None
    channel_dims: Optional[tuple] = None
    freeze: bool = False

    def __post_init__(self):
        if self.variant not in BACKBONE_CHANNELS:
            raise ConfigError(f"지원하지 않는 백본: {self.variant} (가능: {list(BACKBONE_CHANNELS)})")
        expected = BACKBONE_CHANNELS[self.variant]
        if self.channel_dims is None:
            self.channel_dims = expected
        self.channel_dims = tuple(int(c) for c in self.channel_dims)
        if self.channel_dims != expected:
            raise ConfigError(f"{self.variant} 의 채널 수는 {expected} 이어야 합니다: {self.channel_dims}")

    @classmethod
    def from_dict(cls, section):
        return cls(
            variant=section.get("variant", "resnet50"),
            pretrained_weights=section.get("pretrained_weights"),
            freeze=bool(section.get("freeze", False)),
        )


@dataclass
class FeaturePyramid:
    """stride 8/16/32 의 세 단계 특징 (배치 포함 [B, Ck, H/s, W/s])"""
    f3: torch.Tensor
    f4: torch.Tensor
    f5: torch.Tensor
    input_size: tuple

    def __getitem__(self, level):
        return {3: self.f3, 4: self.f4, 5: self.f5}[level]


def check_input(image_batch):
    """[B, 3, H, W] 이고 H, W 가 32의 배수인지 확인합니다."""
    if image_batch.dim() != 4 or image_batch.shape[0] < 1:
        raise ShapeError(f"입력은 [B, 3, H, W] 이어야 합니다: {tuple(image_batch.shape)}")
    h, w = image_batch.shape[-2:]
    if h % 32 or w % 32 or h == 0 or w == 0:
        raise ShapeError(f"입력 크기 {h}x{w} 는 32로 나누어떨어져야 합니다")


def _conv_bn_relu(in_ch, out_ch, stride):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


def _stage(in_ch, out_ch):
    # 해상도를 절반으로 줄인 뒤 같은 해상도에서 한 번 더
    return nn.Sequential(_conv_bn_relu(in_ch, out_ch, stride=2), _conv_bn_relu(out_ch, out_ch, stride=1))


class ResNetBackbone(nn.Module):
    """torchvision ResNet-50 의 마지막 세 stage (layer2/3/4) 를 f3/f4/f5 로 사용"""

    def __init__(self):
        super().__init__()
        net = resnet50(weights=None)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4

    def forward(self, x):
        x = self.layer1(self.stem(x))
        f3 = self.layer2(x)
        f4 = self.layer3(f3)
        f5 = self.layer4(f4)
        return f3, f4, f5


class TinyBackbone(nn.Module):
    """데스크 규모 테스트용 3단계 합성곱 백본, 채널 (32, 64, 128)"""

    def __init__(self, channel_dims=(32, 64, 128)):
        super().__init__()
        c3, c4, c5 = channel_dims
        self.stem = nn.Sequential(
            _conv_bn_relu(3, 16, stride=2),
            _conv_bn_relu(16, 24, stride=2),
            _conv_bn_relu(24, 24, stride=1),
        )
        self.stage3 = _stage(24, c3)
        self.stage4 = _stage(c3, c4)
        self.stage5 = _stage(c4, c5)

        for module in self.modules():
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def forward(self, x):
        f3 = self.stage3(self.stem(x))
        f4 = self.stage4(f3)
        f5 = self.stage5(f4)
        return f3, f4, f5


class Backbone(nn.Module):
    """FeaturePyramid 계약 뒤에 숨겨진 교체 가능한 백본"""

    def __init__(self, config):
        super().__init__()
        self.config = config
        if config.variant == "resnet50":
            self.body = ResNetBackbone()
        else:
            self.body = TinyBackbone(config.channel_dims)

        if config.pretrained_weights:
            load_backbone_weights(self, config.pretrained_weights)
        if config.freeze:
            for param in self.body.parameters():
                param.requires_grad_(False)

    @property
    def channel_dims(self):
        return self.config.channel_dims

    def forward(self, image_batch):
        check_input(image_batch)
        f3, f4, f5 = self.body(image_batch)
        return FeaturePyramid(f3=f3, f4=f4, f5=f5, input_size=tuple(image_batch.shape[-2:]))


def build_backbone(config):
    return Backbone(config)


def extract_features(image_batch, backbone):
    """
    [B, 3, H, W] 배치에서 f3/f4/f5 특징 피라미드를 뽑습니다.

    Raises:
        ShapeError: H 또는 W 가 32로 나누어떨어지지 않을 때
    """
    pyramid = backbone(image_batch)
    h, w = pyramid.input_size
    for level in LEVELS:
        stride = LEVEL_STRIDES[level]
        if tuple(pyramid[level].shape[-2:]) != (h // stride, w // stride):
            raise ShapeError(f"f{level} 크기가 stride {stride} 계약과 다릅니다: {tuple(pyramid[level].shape)}")
    return pyramid


# torchvision resnet50().state_dict() 키 → ResNetBackbone 키
TORCHVISION_PREFIXES = {
    "conv1.": "body.stem.0.",
    "bn1.": "body.stem.1.",
    "layer1.": "body.layer1.",
    "layer2.": "body.layer2.",
    "layer3.": "body.layer3.",
    "layer4.": "body.layer4.",
}


def remap_torchvision_keys(state):
    """torchvision 분류 모델 state_dict 를 백본 키로 바꿉니다. 분류 헤드(fc.*)는 버립니다."""
    if not any(key.startswith("conv1.") for key in state):
        return state
    remapped = {}
    for key, value in state.items():
        for prefix, target in TORCHVISION_PREFIXES.items():
            if key.startswith(prefix):
                remapped[target + key[len(prefix):]] = value
                break
        else:
            if not key.startswith("fc."):
                remapped[key] = value
    return remapped


def load_backbone_weights(backbone, path):
    """
    백본 가중치를 불러옵니다. FDNet 체크포인트(backbone.* 키), torch.save 로 저장한
    백본 state_dict, torchvision resnet50 state_dict 를 받습니다.

    Raises:
        WeightLoadError: 파일이 백본 구조와 호환되지 않을 때
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"가중치 파일을 찾을 수 없습니다: {path}")

    from training_manager import is_checkpoint_file, load_checkpoint

    try:
        if is_checkpoint_file(path):
            state = load_checkpoint(path).model_state
            state = {k[len("backbone."):]: torch.as_tensor(v) for k, v in state.items()
                     if k.startswith("backbone.")}
        else:
            state = torch.load(path, map_location="cpu", weights_only=True)
            state = remap_torchvision_keys(state)
        backbone.load_state_dict(state, strict=True)
    except (RuntimeError, KeyError, TypeError, ValueError, AttributeError, pickle.UnpicklingError) as e:
        raise WeightLoadError(f"{backbone.config.variant} 백본과 호환되지 않는 가중치: {path} ({e})") from e

    logger.info(f"✅ 백본 가중치 로드: {path}")
