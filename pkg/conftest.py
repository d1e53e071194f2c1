# -*- coding: utf-8 -*-
import random

import numpy as np
import pytest
import torch

from backbone import BackboneConfig
from dataset_manager import DatasetHandle
from model import ModelConfig
from phantom_generator import PhantomSpec, derive_seed, generate_phantom


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="오래 걸리는 학습 실험까지 실행")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 학습을 수백 step 돌리는 실험 (--runslow 필요)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow 옵션이 있어야 실행됩니다")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def seeded():
    """테스트마다 난수를 고정합니다."""
    random.seed(0)
    np.random.seed(0)
    torch.manual_seed(0)
    yield


@pytest.fixture
def tiny_model_config():
    return ModelConfig(backbone=BackboneConfig(variant="tiny"), cif_width=8)


def make_phantom_handle(split="train", count=4, size=64, seed=0, **spec_kwargs):
    """작은 합성 데이터셋 핸들 (테스트용)"""
    base = PhantomSpec(canvas_size=(size, size), **spec_kwargs)
    samples = [
        generate_phantom(base.with_seed(derive_seed(seed, split, i)), sample_id=f"phantom_{split}_{i:04d}")
        for i in range(count)
    ]
    return DatasetHandle.from_samples(split, samples)


@pytest.fixture
def phantom_handle():
    return make_phantom_handle()
