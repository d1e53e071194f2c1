# -*- coding: utf-8 -*-
import os
import json
import logging

import yaml
from dotenv import load_dotenv
from omegaconf import OmegaConf
from omegaconf.errors import ConfigKeyError, OmegaConfBaseException

from errors import ConfigError

# 환경 변수 로드 (로컬 개발 환경용 .env)
load_dotenv()

logger = logging.getLogger(__name__)

# 머신별 기본값은 환경 변수에서 가져옵니다
DATA_ROOT = os.environ.get("FDNET_DATA_ROOT", "data/phantom")
OUTPUT_DIR = os.environ.get("FDNET_OUTPUT_DIR", "runs")
DEVICE = os.environ.get("FDNET_DEVICE", "cpu")
LOG_LEVEL = os.environ.get("FDNET_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.environ.get("FDNET_SEED", "0"))

# 백본 변형별 (C3, C4, C5) 채널 수
BACKBONE_CHANNELS = {
    "resnet50": (512, 1024, 2048),
    "tiny": (32, 64, 128),
}

# 디스크 포맷 관련 상수
MASK_THRESHOLD = 127  # 8비트 마스크 이진화 기준 (> 127 이면 전경)
IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".bmp", ".jpg", ".jpeg")
PHANTOM_META_FILE = "phantom_meta.json"
RUN_LOG_FILE = "run_log.jsonl"
CHECKPOINT_FILE = "checkpoint.fdnet"
METRICS_FILE = "metrics.json"

# 실행 설정 템플릿 - 여기에 없는 키는 허용하지 않습니다
DEFAULT_CONFIG = {
    "seed": DEFAULT_SEED,
    "device": DEVICE,
    "paths": {
        "data_root": DATA_ROOT,
        "out_dir": OUTPUT_DIR,
        "checkpoint": None,
    },
    "phantom": {
        "canvas_size": [256, 256],
        "cell_count": 6,
        "interference_count": 3,
        "cell_contrast": 0.12,
        "interference_contrast": 0.5,
        "overlap_threshold": 0.5,
        "background_amplitude": 0.1,
        "halo_strength": 0.6,
        "halo_sigma": 40.0,
        "train": 24,
        "test": 8,
    },
    "model": {
        "backbone": {
            "variant": "resnet50",
            "pretrained_weights": None,
            "freeze": False,
        },
        "cif_width": 64,
        "pool_factor": 2,
        "ftb_cutoff": 0.1,
        "ftb_mode": "ideal",
        "enable_cif": True,
        "enable_ab": True,
        "enable_ftb": True,
        "output_head": "y3",
    },
    "train": {
        "lr0": 0.001,
        "batch_size": 8,
        "epochs": 400,
        "decay_period": 100,
        "decay_factor": 0.5,
        "betas": [0.9, 0.999],
        "resize": [1024, 1024],
        "split": "train",
        "augment_flip": False,
        "checkpoint_every": 50,
        "resource_check_every": 10,
        "max_steps": None,
        "num_workers": 0,
    },
    "eval": {
        "threshold": 0.5,
        "split": "test",
        "resize": None,
    },
}

# ablate 명령의 기본값 층 (전체 학습 규모가 아님, 파일과 플래그가 우선)
DESK_SCALE_OVERRIDES = {
    "model.backbone.variant": "tiny",
    "train.resize": [256, 256],
    "train.epochs": 40,
    "train.batch_size": 4,
    "train.checkpoint_every": 0,
    "phantom.canvas_size": [256, 256],
}


def _layer(dotted_values):
    """점 표기 키 -> 값 딕셔너리를 중첩 설정 층으로 만듭니다."""
    layer = OmegaConf.create()
    for dotted_key, value in dotted_values.items():
        OmegaConf.update(layer, dotted_key, value, merge=False)
    return layer


def _check_sections(config, template=DEFAULT_CONFIG, prefix=""):
    """템플릿의 섹션(딕셔너리)이 단일 값으로 바뀌지 않았는지 확인합니다."""
    for key, value in template.items():
        if isinstance(value, dict):
            if not OmegaConf.is_dict(config[key]):
                raise ConfigError(f"설정 섹션 {prefix}{key} 에는 딕셔너리가 필요합니다")
            _check_sections(config[key], value, prefix=f"{prefix}{key}.")


def _merge(base, layer, source):
    """
    struct 모드 설정에 층 하나를 병합합니다.

    Raises:
        ConfigError: 템플릿에 없는 키이거나 섹션을 단일 값으로 덮으려 할 때
    """
    try:
        merged = OmegaConf.merge(base, layer)
    except ConfigKeyError as e:
        raise ConfigError(f"알 수 없는 설정 키 ({source}): {e}") from e
    except OmegaConfBaseException as e:
        raise ConfigError(f"설정 병합 오류 ({source}): {e}") from e
    _check_sections(merged)
    return merged


def _template():
    config = OmegaConf.create(DEFAULT_CONFIG)
    OmegaConf.set_struct(config, True)
    return config


def apply_overrides(config, overrides, source="덮어쓰기"):
    """
    점 표기 덮어쓰기를 적용한 새 설정 딕셔너리를 돌려줍니다 (원본은 그대로).

    Raises:
        ConfigError: 알 수 없는 키 (키 이름 포함)
    """
    merged = OmegaConf.merge(_template(), config)
    for dotted_key, value in overrides.items():
        try:
            merged = _merge(merged, _layer({dotted_key: value}), source)
        except ConfigError as e:
            raise ConfigError(f"{dotted_key}: {e}") from e
    return OmegaConf.to_container(merged)


_MISSING = object()


def get_dotted(config, dotted_key):
    """점 표기 키로 값을 읽습니다."""
    value = OmegaConf.select(OmegaConf.create(config), dotted_key, default=_MISSING)
    if value is _MISSING:
        raise ConfigError(f"알 수 없는 설정 키: {dotted_key}")
    return OmegaConf.to_container(value) if OmegaConf.is_config(value) else value


def parse_override(text):
    """
    'key=value' 형식의 명령행 덮어쓰기를 파싱합니다 (OmegaConf dotlist 문법).
    """
    if "=" not in text:
        raise ConfigError(f"덮어쓰기 형식은 key=value 이어야 합니다: {text}")
    key = text.split("=", 1)[0].strip()
    try:
        parsed = OmegaConf.from_dotlist([text])
    except OmegaConfBaseException as e:
        raise ConfigError(f"덮어쓰기를 해석할 수 없습니다: {text} ({e})") from e
    value = OmegaConf.select(parsed, key)
    return key, OmegaConf.to_container(value) if OmegaConf.is_config(value) else value


def _load_file(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"설정 파일을 찾을 수 없습니다: {path}")
    try:
        file_config = OmegaConf.load(path)
    except (yaml.YAMLError, OmegaConfBaseException) as e:
        raise ConfigError(f"설정 파일 파싱 오류 ({path}): {e}") from e
    if not OmegaConf.is_dict(file_config):
        raise ConfigError(f"설정 파일 최상위는 객체여야 합니다: {path}")
    return file_config


def load_run_config(path=None, overrides=None, defaults=None):
    """
    기본값 < 명령별 기본값(defaults) < 설정 파일 < 플래그 순서로 실행 설정을 만듭니다.

    Args:
        path (str, optional): JSON/YAML 설정 파일 경로
        overrides (dict, optional): 점 표기 키 -> 값 (명령행 플래그)
        defaults (dict, optional): 점 표기 키 -> 값 (예: DESK_SCALE_OVERRIDES)

    Returns:
        dict: 유효한 실행 설정 (모든 결과물에 그대로 기록됨)
    """
    config = _template()
    if defaults:
        config = _merge(config, _layer(defaults), "명령별 기본값")

    if path:
        config = _merge(config, _load_file(path), path)
        logger.info(f"📄 설정 파일 적용: {path}")

    for dotted_key, value in (overrides or {}).items():
        try:
            config = _merge(config, _layer({dotted_key: value}), "명령행")
        except ConfigError as e:
            raise ConfigError(f"{dotted_key}: {e}") from e

    return OmegaConf.to_container(config)


def save_run_config(config, path):
    """유효 설정을 JSON으로 저장합니다."""
    if OmegaConf.is_config(config):
        config = OmegaConf.to_container(config)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, ensure_ascii=False, indent=2)
