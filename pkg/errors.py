# -*- coding: utf-8 -*-
"""FDNet 파이프라인 전체에서 사용하는 예외 정의"""


class FDNetError(Exception):
    """모든 FDNet 오류의 기반 클래스"""


class ConfigError(FDNetError):
    """설정 값이 잘못되었거나 알 수 없는 키가 있을 때"""


class ShapeError(FDNetError):
    """텐서/배열의 모양이 계약과 맞지 않을 때"""


class NumericsError(FDNetError):
    """NaN/Inf 등 수치 오류"""


class ValidationError(FDNetError):
    """입력 값이 전제 조건을 만족하지 않을 때"""


class DatasetNotFound(FDNetError):
    """데이터셋 디렉토리가 없거나 비어 있을 때"""


class PairingError(FDNetError):
    """이미지와 마스크 파일의 짝이 맞지 않을 때"""

    def __init__(self, message, orphans=None):
        super().__init__(message)
        self.orphans = list(orphans or [])


class WeightLoadError(FDNetError):
    """가중치 파일이 백본 구조와 호환되지 않을 때"""


class CheckpointError(FDNetError):
    """체크포인트 헤더/버전이 잘못되었을 때"""


class RefusalError(FDNetError):
    """--force 없이 기존 결과물을 덮어쓰려 할 때"""
