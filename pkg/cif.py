# -*- coding: utf-8 -*-
import logging
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from errors import ShapeError, ValidationError

logger = logging.getLogger(__name__)

ATROUS_RATES = (3, 5, 7)
DEFAULT_WIDTH = 64


@dataclass
class CifOutput:
    """CIF 한 단계의 결과: fused, coarse 예측(y^c_k), refined 특징(f̂_k)"""
    fused: torch.Tensor
    coarse_logits: torch.Tensor
    refined: torch.Tensor


class ContextualFusion(nn.Module):
    """
    Contextual Information Fusion 모듈 (한 scale 분량)

    - 더 깊은 단계의 문맥을 2배 업샘플해 채널 방향으로 붙이고
    - dilation 3/5/7 의 3x3 atrous 합성곱 세 갈래를 병렬로 적용한 뒤
    - 결과를 이어 붙여 1x1 합성곱으로 width 채널에 투영합니다.
    """

    def __init__(self, in_channels, deeper_channels=0, width=DEFAULT_WIDTH, rates=ATROUS_RATES):
        super().__init__()
        self.in_channels = in_channels
        self.deeper_channels = deeper_channels
        self.width = width
        self.rates = tuple(rates)

        branch_in = in_channels + deeper_channels
        self.branches = nn.ModuleList([
            nn.Sequential(
                nn.Conv2d(branch_in, width, kernel_size=3, padding=rate, dilation=rate),
                nn.BatchNorm2d(width),
                nn.GELU(),
            )
            for rate in self.rates
        ])
        self.projection = nn.Conv2d(width * len(self.rates), width, kernel_size=1)
        self.coarse_head = nn.Conv2d(width, 1, kernel_size=1)
        self.refine = nn.Conv2d(width + 1, width, kernel_size=3, padding=1)

    def fuse_context(self, level_feature, deeper_context=None):
        """
        Args:
            level_feature (Tensor): [B, Ck, h, w] 백본 특징
            deeper_context (Tensor, optional): [B, Cf, h/2, w/2] (k=5 에서는 None)

        Returns:
            Tensor: [B, Cf, h, w]
        """
        if self.deeper_channels and deeper_context is None:
            raise ValidationError("이 단계의 CIF 는 더 깊은 단계의 문맥(deeper_context)이 필요합니다")
        if not self.deeper_channels and deeper_context is not None:
            raise ValidationError("최상위 단계의 CIF 는 deeper_context 를 받지 않습니다")

        x = level_feature
        if deeper_context is not None:
            up = F.interpolate(deeper_context, scale_factor=2, mode="bilinear", align_corners=False)
            if up.shape[-2:] != level_feature.shape[-2:]:
                raise ShapeError(
                    f"업샘플한 문맥 {tuple(up.shape[-2:])} 과 특징 {tuple(level_feature.shape[-2:])} 크기가 다릅니다"
                )
            x = torch.cat([level_feature, up], dim=1)

        branches = [branch(x) for branch in self.branches]
        return self.projection(torch.cat(branches, dim=1))

    def coarse_predict(self, fused):
        """1채널 coarse 로짓 (활성화 없음, sigmoid 는 손실/지표에서 적용)"""
        return self.coarse_head(fused)

    def refine_concat(self, fused, coarse_logits):
        """fused 와 coarse 맵을 붙여 (Cf+1 채널) 3x3 합성곱으로 Cf 채널 f̂_k 를 만듭니다."""
        if fused.shape[-2:] != coarse_logits.shape[-2:]:
            raise ShapeError(
                f"fused {tuple(fused.shape[-2:])} 와 coarse {tuple(coarse_logits.shape[-2:])} 크기가 다릅니다"
            )
        return self.refine(torch.cat([fused, coarse_logits], dim=1))

    def forward(self, level_feature, deeper_context=None):
        fused = self.fuse_context(level_feature, deeper_context)
        coarse = self.coarse_predict(fused)
        refined = self.refine_concat(fused, coarse)
        return CifOutput(fused=fused, coarse_logits=coarse, refined=refined)
