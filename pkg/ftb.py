# -*- coding: utf-8 -*-
"""
Fourier Transform Block (FTB)

채널마다 2D DFT -> 이상적(ideal) 방사형 high-pass 마스크 -> 역 DFT 의 실수부.
DFT 규약: 정방향은 정규화하지 않고, 역방향에서 1/(H·W) 를 곱합니다.
"""
import logging
from dataclasses import dataclass

import torch
import torch.nn as nn

from errors import ConfigError, NumericsError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 0.1
FILTER_MODES = ("ideal",)
# 역변환 뒤 버리는 허수부 허용치 (실수부 크기에 대한 상대값)
IMAG_TOLERANCE = 1e-5


@dataclass
class Spectrum:
    """복소 스펙트럼 [.., C, H, W], DC 는 (0, 0) 인덱스"""
    values: torch.Tensor

    @property
    def shape(self):
        return tuple(self.values.shape)


@dataclass
class HighPassFilterSpec:
    """
    cutoff (ρ0): Nyquist 반지름 대비 정규화된 차단 반지름, [0, 1]
    Nyquist 반지름은 (Nyquist, Nyquist) 모서리 bin 까지의 거리이므로 ρ0 = 1 이면 전부 차단됩니다.
    """
    cutoff: float = DEFAULT_CUTOFF
    shape: tuple = (8, 8)
    mode: str = "ideal"

    def __post_init__(self):
        if not 0.0 <= float(self.cutoff) <= 1.0:
            raise ConfigError(f"ftb.cutoff 는 [0, 1] 범위여야 합니다: {self.cutoff}")
        if self.mode not in FILTER_MODES:
            raise ConfigError(f"지원하지 않는 필터 모드: {self.mode} (가능: {FILTER_MODES})")
        self.shape = (int(self.shape[0]), int(self.shape[1]))


def forward_dft(feature):
    """
    채널별 2D DFT (정규화 없음)

    Raises:
        NumericsError: 입력에 NaN/Inf 가 있을 때
    """
    if not torch.isfinite(feature).all():
        raise NumericsError("FTB 입력에 유한하지 않은 값이 있습니다")
    return Spectrum(values=torch.fft.fft2(feature, norm="backward"))


def build_highpass(spec, device=None, dtype=torch.float64):
    """
    이상적 방사형 high-pass 마스크 [H, W] (값 0/1)

    bin (a, b) 의 정규화 반지름 ρ 는 부호 있는 정수 주파수로 계산합니다:
        ρ² = 2·((a/H)² + (b/W)²)
    ρ ≤ ρ0 이면 0, 아니면 1. 비교는 정수 산술로 해서 경계가 흔들리지 않습니다.
    """
    h, w = spec.shape
    a = torch.round(torch.fft.fftfreq(h, dtype=torch.float64) * h).to(torch.int64)
    b = torch.round(torch.fft.fftfreq(w, dtype=torch.float64) * w).to(torch.int64)
    # 2·(a²·W² + b²·H²) ≤ ρ0²·H²·W²
    lhs = 2 * (a[:, None] ** 2 * w * w + b[None, :] ** 2 * h * h)
    rhs = float(spec.cutoff) ** 2 * h * h * w * w
    mask = (lhs.to(torch.float64) > rhs).to(dtype)
    mask[0, 0] = 0
    return mask.to(device) if device is not None else mask


def filter_and_invert(spectrum, mask):
    """
    스펙트럼에 마스크를 곱하고 역 DFT 의 실수부를 돌려줍니다.

    Raises:
        ShapeError: 마스크와 스펙트럼의 (H, W) 가 다를 때
        NumericsError: 버리는 허수부가 허용치를 넘을 때
    """
    values = spectrum.values
    if tuple(mask.shape) != tuple(values.shape[-2:]):
        raise ShapeError(f"마스크 {tuple(mask.shape)} 와 스펙트럼 {tuple(values.shape[-2:])} 크기가 다릅니다")

    out = torch.fft.ifft2(values * mask.to(values.real.dtype), norm="backward")
    with torch.no_grad():
        if out.numel() == 0:
            return out.real
        residue = out.imag.abs().max()
        # Σ|X| / (H·W) 는 입력 진폭의 상한
        h, w = values.shape[-2:]
        scale = 1.0 + float(values.abs().sum(dim=(-2, -1)).max()) / (h * w)
        if residue > IMAG_TOLERANCE * scale:
            raise NumericsError(f"역 DFT 의 허수부가 너무 큽니다: {float(residue):.3e}")
    return out.real


class FourierTransformBlock(nn.Module):
    """학습 파라미터가 없는 주파수 영역 간섭 제거 블록"""

    def __init__(self, cutoff=DEFAULT_CUTOFF, mode="ideal"):
        super().__init__()
        HighPassFilterSpec(cutoff=cutoff, mode=mode)
        self.cutoff = cutoff
        self.mode = mode
        self._masks = {}

    def mask_for(self, h, w, device, dtype):
        key = (h, w, str(device), dtype)
        if key not in self._masks:
            spec = HighPassFilterSpec(cutoff=self.cutoff, shape=(h, w), mode=self.mode)
            self._masks[key] = build_highpass(spec, device=device, dtype=dtype)
        return self._masks[key]

    def forward(self, feature):
        h, w = feature.shape[-2:]
        mask = self.mask_for(h, w, feature.device, feature.dtype)
        return filter_and_invert(forward_dft(feature), mask)

    def extra_repr(self):
        return f"cutoff={self.cutoff}, mode={self.mode}"
