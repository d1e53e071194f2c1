# -*- coding: utf-8 -*-
"""
파라미터가 없는 채널 어텐션 블록 (AB)

    m_ij = exp(K_i · Q_j) / Σ_j exp(K_i · Q_j)
    f̃ = M · V + f̂

K, Q 는 평균 풀링한 특징에서, V 는 풀링하지 않은 특징에서 만듭니다.
그래야 M · V 가 잔차(f̂)와 같은 공간 크기를 가집니다.
"""
import logging
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from errors import NumericsError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_POOL_FACTOR = 2


@dataclass
class QkvBundle:
    q: torch.Tensor  # [B, C, s]
    k: torch.Tensor  # [B, C, s]
    v: torch.Tensor  # [B, C, N]


@dataclass
class AttentionMap:
    """행 확률(row-stochastic) 행렬 M [B, C, C]"""
    m: torch.Tensor

    def row_sums(self):
        return self.m.sum(dim=-1)


def _batched(x):
    """[C, H, W] 도 받을 수 있게 배치 차원을 붙입니다."""
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise ShapeError(f"특징은 [C, H, W] 또는 [B, C, H, W] 이어야 합니다: {tuple(x.shape)}")


def build_qkv(feature, pool_factor=DEFAULT_POOL_FACTOR):
    """
    풀링한 특징으로 q, k 를, 원래 특징으로 v 를 만듭니다.

    Args:
        feature (Tensor): [B, C, H, W] 또는 [C, H, W]
        pool_factor (int): 평균 풀링 커널/stride (H, W 를 나누어야 함)

    Returns:
        QkvBundle: q, k [.., C, (H/pf)(W/pf)], v [.., C, H·W]
    """
    x, unbatched = _batched(feature)
    h, w = x.shape[-2:]
    if not isinstance(pool_factor, int) or pool_factor < 1 or h % pool_factor or w % pool_factor:
        raise ShapeError(f"pool_factor {pool_factor} 가 특징 크기 {h}x{w} 를 나누지 못합니다")

    pooled = F.avg_pool2d(x, kernel_size=pool_factor) if pool_factor > 1 else x
    q = pooled.flatten(2)
    k = q
    v = x.flatten(2)
    if unbatched:
        q, k, v = q[0], k[0], v[0]
    return QkvBundle(q=q, k=k, v=v)


def channel_attention(q, k):
    """
    채널 어텐션 맵 M 을 계산합니다 (행마다 최댓값을 빼서 안정화한 softmax).

    Raises:
        NumericsError: 입력에 NaN/Inf 가 있을 때
        ShapeError: q, k 모양이 다를 때
    """
    if q.shape != k.shape:
        raise ShapeError(f"q {tuple(q.shape)} 와 k {tuple(k.shape)} 모양이 다릅니다")
    if not (torch.isfinite(q).all() and torch.isfinite(k).all()):
        raise NumericsError("채널 어텐션 입력에 유한하지 않은 값이 있습니다")

    logits = k @ q.transpose(-1, -2)
    logits = logits - logits.amax(dim=-1, keepdim=True)
    weights = torch.exp(logits)
    return AttentionMap(m=weights / weights.sum(dim=-1, keepdim=True))


def apply_attention(attention_map, v, residual):
    """
    f̃ = reshape(M · V) + residual

    Args:
        attention_map (AttentionMap): [.., C, C]
        v (Tensor): [.., C, N], N = H·W
        residual (Tensor): [.., C, H, W]
    """
    m = attention_map.m
    c, h, w = residual.shape[-3:]
    if v.shape[-2] != c or v.shape[-1] != h * w or m.shape[-1] != c or m.shape[-2] != c:
        raise ShapeError(
            f"어텐션 모양 불일치: M {tuple(m.shape)}, V {tuple(v.shape)}, residual {tuple(residual.shape)}"
        )
    return (m @ v).reshape(residual.shape) + residual


class AttentionBlock(nn.Module):
    """학습 파라미터가 없는 채널 어텐션 블록 (FTB 앞뒤로 같은 블록을 재사용)"""

    def __init__(self, pool_factor=DEFAULT_POOL_FACTOR):
        super().__init__()
        self.pool_factor = pool_factor

    def forward(self, feature):
        bundle = build_qkv(feature, self.pool_factor)
        attention_map = channel_attention(bundle.q, bundle.k)
        return apply_attention(attention_map, bundle.v, feature)

    def extra_repr(self):
        return f"pool_factor={self.pool_factor}"
