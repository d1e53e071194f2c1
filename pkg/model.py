# -*- coding: utf-8 -*-
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from attention import AttentionBlock, DEFAULT_POOL_FACTOR
from backbone import BackboneConfig, LEVELS, build_backbone, extract_features
from cif import ContextualFusion, DEFAULT_WIDTH
from errors import ConfigError, NumericsError, ShapeError, ValidationError
from ftb import DEFAULT_CUTOFF, FourierTransformBlock, HighPassFilterSpec

logger = logging.getLogger(__name__)

OUTPUT_HEADS = ("y3", "mean")

# ablation 구성: 켜지는 블록 목록 (ResNet 백본은 항상 포함)
ABLATION_PRESETS = OrderedDict([
    ("No.1", ()),
    ("No.2", ("cif",)),
    ("No.3", ("cif", "ab")),
    ("No.4", ("cif", "ftb")),
    ("Ours", ("cif", "ab", "ftb")),
])


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    cif_width: int = DEFAULT_WIDTH
    pool_factor: int = DEFAULT_POOL_FACTOR
    ftb_cutoff: float = DEFAULT_CUTOFF
    ftb_mode: str = "ideal"
    enable_cif: bool = True
    enable_ab: bool = True
    enable_ftb: bool = True
    output_head: str = "y3"

    def __post_init__(self):
        if self.cif_width < 1:
            raise ConfigError(f"cif_width 는 1 이상이어야 합니다: {self.cif_width}")
        if not isinstance(self.pool_factor, int) or self.pool_factor < 1:
            raise ConfigError(f"pool_factor 는 1 이상의 정수여야 합니다: {self.pool_factor}")
        if self.output_head not in OUTPUT_HEADS:
            raise ConfigError(f"output_head 는 {OUTPUT_HEADS} 중 하나여야 합니다: {self.output_head}")
        HighPassFilterSpec(cutoff=self.ftb_cutoff, mode=self.ftb_mode)

    @classmethod
    def from_dict(cls, section):
        return cls(
            backbone=BackboneConfig.from_dict(section.get("backbone", {})),
            cif_width=int(section.get("cif_width", DEFAULT_WIDTH)),
            pool_factor=int(section.get("pool_factor", DEFAULT_POOL_FACTOR)),
            ftb_cutoff=float(section.get("ftb_cutoff", DEFAULT_CUTOFF)),
            ftb_mode=section.get("ftb_mode", "ideal"),
            enable_cif=bool(section.get("enable_cif", True)),
            enable_ab=bool(section.get("enable_ab", True)),
            enable_ftb=bool(section.get("enable_ftb", True)),
            output_head=section.get("output_head", "y3"),
        )

    @property
    def toggles(self):
        return {"cif": self.enable_cif, "ab": self.enable_ab, "ftb": self.enable_ftb}

    @property
    def input_multiple(self):
        """유효한 입력 크기의 배수 (f5 에서 AB 풀링이 나누어떨어져야 함)"""
        return 32 * (self.pool_factor if self.enable_ab else 1)


def preset_overrides(name):
    """ablation 이름 -> 모델 토글 덮어쓰기 딕셔너리"""
    if name not in ABLATION_PRESETS:
        raise ConfigError(f"알 수 없는 ablation 구성: {name}")
    enabled = ABLATION_PRESETS[name]
    return {
        "model.enable_cif": "cif" in enabled,
        "model.enable_ab": "ab" in enabled,
        "model.enable_ftb": "ftb" in enabled,
    }


@dataclass
class PredictionSet:
    """세 scale 의 coarse 로짓 y^c_k 와 final 로짓 y^t_k (모두 입력 크기 [B, 1, H, W])"""
    coarse: dict
    final: dict
    input_size: tuple

    def maps(self):
        """coarse 3,4,5 다음 final 3,4,5 순서의 로짓 6개"""
        return [self.coarse[k] for k in LEVELS] + [self.final[k] for k in LEVELS]

    def output_probabilities(self, head="y3"):
        if head == "y3":
            return torch.sigmoid(self.final[3])
        return torch.stack([torch.sigmoid(self.final[k]) for k in LEVELS]).mean(dim=0)


class FDNet(nn.Module):
    """
    backbone -> CIF (top-down) -> AB -> FTB -> AB -> 예측 헤드

    꺼진 블록은 항등으로 대체됩니다. CIF 가 꺼지면 1x1 채널 투영이 들어가
    폭을 맞추고, coarse 헤드는 그 투영 특징에서 y^c_k 를 냅니다.
    """

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.backbone = build_backbone(config.backbone)
        width = config.cif_width
        dims = dict(zip(LEVELS, config.backbone.channel_dims))

        if config.enable_cif:
            self.cif = nn.ModuleDict({
                f"k{k}": ContextualFusion(dims[k], deeper_channels=0 if k == 5 else width, width=width)
                for k in LEVELS
            })
        else:
            self.projections = nn.ModuleDict({
                f"k{k}": nn.Conv2d(dims[k], width, kernel_size=1) for k in LEVELS
            })
            self.coarse_heads = nn.ModuleDict({
                f"k{k}": nn.Conv2d(width, 1, kernel_size=1) for k in LEVELS
            })

        self.attention = AttentionBlock(config.pool_factor) if config.enable_ab else nn.Identity()
        self.ftb = FourierTransformBlock(config.ftb_cutoff, config.ftb_mode) if config.enable_ftb else nn.Identity()
        self.final_heads = nn.ModuleDict({
            f"k{k}": nn.Conv2d(width, 1, kernel_size=1) for k in LEVELS
        })

    def _check_input(self, image_batch):
        if image_batch.dim() != 4:
            raise ShapeError(f"입력은 [B, C, H, W] 이어야 합니다: {tuple(image_batch.shape)}")
        if image_batch.shape[1] == 1:
            image_batch = image_batch.expand(-1, 3, -1, -1)
        h, w = image_batch.shape[-2:]
        multiple = self.config.input_multiple
        if h % multiple or w % multiple:
            raise ShapeError(f"입력 크기 {h}x{w} 는 {multiple} 의 배수여야 합니다")
        return image_batch

    def forward(self, image_batch):
        image_batch = self._check_input(image_batch)
        size = tuple(image_batch.shape[-2:])
        pyramid = extract_features(image_batch, self.backbone)

        coarse, final = {}, {}
        deeper = None
        for k in reversed(LEVELS):
            feature = pyramid[k]
            if self.config.enable_cif:
                out = self.cif[f"k{k}"](feature, deeper)
                refined, coarse_logits = out.refined, out.coarse_logits
                deeper = refined
            else:
                refined = self.projections[f"k{k}"](feature)
                coarse_logits = self.coarse_heads[f"k{k}"](refined)

            x = self.attention(refined)
            x = self.ftb(x)
            x = self.attention(x)
            final_logits = self.final_heads[f"k{k}"](x)

            coarse[k] = F.interpolate(coarse_logits, size=size, mode="bilinear", align_corners=False)
            final[k] = F.interpolate(final_logits, size=size, mode="bilinear", align_corners=False)

        preds = PredictionSet(coarse=coarse, final=final, input_size=size)
        for logits in preds.maps():
            if not torch.isfinite(logits).all():
                raise NumericsError("예측 로짓에 유한하지 않은 값이 있습니다")
        return preds


def build_model(config):
    model = FDNet(config)
    logger.info(f"🧠 FDNet 생성: {architecture_summary(model)}")
    return model


def count_parameters(module, trainable_only=False):
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def architecture_summary(model):
    """ablation 표 검증용 구조 요약"""
    has_cif = any(isinstance(m, ContextualFusion) for m in model.modules())
    has_ab = any(isinstance(m, AttentionBlock) for m in model.modules())
    has_ftb = any(isinstance(m, FourierTransformBlock) for m in model.modules())
    components = ["backbone"] + [name for name, on in (("cif", has_cif), ("ab", has_ab), ("ftb", has_ftb)) if on]
    return {
        "backbone": model.config.backbone.variant,
        "components": components,
        "cif": has_cif,
        "ab": has_ab,
        "ftb": has_ftb,
        "parameters": count_parameters(model),
    }


def predict_mask(model, image, threshold=0.5, head=None):
    """
    최종 예측 맵(기본 y^t_3)의 sigmoid 를 threshold 로 이진화합니다 (p > threshold).

    Args:
        model (FDNet): 학습된 모델
        image: [H, W] 흑백 배열/텐서, 또는 [3, H, W]
        threshold (float): (0, 1) 구간의 확률 기준

    Returns:
        np.ndarray: uint8 [H, W] 이진 마스크
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold 는 (0, 1) 구간이어야 합니다: {threshold}")

    param = next(model.parameters())
    x = torch.as_tensor(np.asarray(image), dtype=param.dtype, device=param.device)
    if x.dim() == 2:
        x = x.unsqueeze(0).expand(3, -1, -1)
    x = x.unsqueeze(0)

    model.eval()
    with torch.no_grad():
        preds = model(x)
        probs = preds.output_probabilities(head or model.config.output_head)
    return (probs[0, 0] > threshold).cpu().numpy().astype(np.uint8)
