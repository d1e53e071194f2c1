# -*- coding: utf-8 -*-
import os
import io
import json
import time
import pickle
import random
import struct
import logging
import traceback
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import psutil
import torch
from torch.utils.data import DataLoader

from config import CHECKPOINT_FILE, RUN_LOG_FILE
from dataset_manager import SegmentationDataset, check_target_size, load_dataset
from errors import CheckpointError, ConfigError, NumericsError, ShapeError, ValidationError
from model import ModelConfig, build_model

logger = logging.getLogger(__name__)

# 체크포인트 컨테이너: MAGIC + format_version(uint32 LE) + torch.save 페이로드
CHECKPOINT_MAGIC = b"FDNETCKPT"
CHECKPOINT_VERSION = 1
BCE_EPSILON = 1e-7


@dataclass
class TrainConfig:
    lr0: float = 0.001
    batch_size: int = 8
    epochs: int = 400
    decay_period: int = 100
    decay_factor: float = 0.5
    betas: tuple = (0.9, 0.999)
    resize: tuple = (1024, 1024)
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    data_root: Optional[str] = None
    split: str = "train"
    augment_flip: bool = False
    checkpoint_every: int = 50
    resource_check_every: int = 10
    max_steps: Optional[int] = None
    num_workers: int = 0
    out_dir: Optional[str] = None
    device: str = "cpu"

    def __post_init__(self):
        if self.lr0 <= 0 or self.batch_size < 1 or self.decay_period < 1:
            raise ConfigError("lr0, batch_size, decay_period 는 양수여야 합니다")
        if self.epochs < 0:
            raise ConfigError(f"epochs 는 0 이상이어야 합니다: {self.epochs}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigError(f"decay_factor 는 (0, 1] 범위여야 합니다: {self.decay_factor}")
        self.resize = check_target_size(self.resize) if self.resize else None
        multiple = self.model.input_multiple
        if self.resize and (self.resize[0] % multiple or self.resize[1] % multiple):
            raise ShapeError(f"resize {self.resize} 는 이 모델 구성의 입력 배수 {multiple} 로 나누어떨어져야 합니다")
        self.betas = tuple(self.betas)

    @classmethod
    def from_run_config(cls, run_config):
        """실행 설정 딕셔너리(config.DEFAULT_CONFIG 형식)로 학습 설정을 만듭니다."""
        train = run_config["train"]
        return cls(
            lr0=float(train["lr0"]),
            batch_size=int(train["batch_size"]),
            epochs=int(train["epochs"]),
            decay_period=int(train["decay_period"]),
            decay_factor=float(train["decay_factor"]),
            betas=tuple(train["betas"]),
            resize=tuple(train["resize"]) if train["resize"] else None,
            seed=int(run_config["seed"]),
            model=ModelConfig.from_dict(run_config["model"]),
            data_root=run_config["paths"]["data_root"],
            split=train["split"],
            augment_flip=bool(train["augment_flip"]),
            checkpoint_every=int(train["checkpoint_every"] or 0),
            resource_check_every=int(train["resource_check_every"] or 0),
            max_steps=train["max_steps"],
            num_workers=int(train["num_workers"]),
            out_dir=run_config["paths"]["out_dir"],
            device=run_config["device"],
        )


@dataclass
class Checkpoint:
    format_version: int
    model_state: dict
    optimizer_state: dict
    epoch: int
    config: dict
    metric_history: list


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    model: torch.nn.Module
    losses: list
    log_path: Optional[str] = None
    checkpoint_path: Optional[str] = None


# ---------------------------------------------------------------------------
# 손실 / 학습률
# ---------------------------------------------------------------------------

def binary_cross_entropy(logits, target, eps=BCE_EPSILON):
    """p = sigmoid(logit) 을 [eps, 1-eps] 로 자른 뒤 픽셀 평균 BCE"""
    p = torch.sigmoid(logits).clamp(eps, 1.0 - eps)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def compute_loss(preds, gt_mask):
    """
    L = Σ_k BCE(y^c_k, y) + Σ_k BCE(y^t_k, y), k = 3..5

    Args:
        preds (PredictionSet): 입력 크기로 업샘플된 로짓 6개
        gt_mask (Tensor): [B, 1, H, W], [B, H, W] 또는 [H, W] 이진 마스크

    Raises:
        ValidationError: 정답이 이진이 아닐 때
    """
    maps = preds.maps()
    target = torch.as_tensor(gt_mask, device=maps[0].device).to(maps[0].dtype)
    if not ((target == 0) | (target == 1)).all():
        raise ValidationError("정답 마스크는 0/1 값만 가져야 합니다")
    if tuple(target.shape[-2:]) != tuple(preds.input_size):
        raise ShapeError(f"정답 크기 {tuple(target.shape[-2:])} 가 입력 크기 {preds.input_size} 와 다릅니다")
    while target.dim() < 4:
        target = target.unsqueeze(0)

    return sum(binary_cross_entropy(logits, target.expand_as(logits)) for logits in maps)


def lr_schedule(epoch, lr0=0.001, period=100, factor=0.5):
    """lr = lr0 · factor^⌊epoch / period⌋ (계단식)"""
    if epoch < 0:
        raise ValidationError(f"epoch 는 0 이상이어야 합니다: {epoch}")
    return lr0 * factor ** (epoch // period)


# ---------------------------------------------------------------------------
# 체크포인트
# ---------------------------------------------------------------------------

def _to_cpu(obj):
    """옵티마이저 상태 안의 텐서를 CPU 로 옮깁니다 (장치와 무관한 체크포인트)."""
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu()
    if isinstance(obj, dict):
        return {key: _to_cpu(value) for key, value in obj.items()}
    if isinstance(obj, list):
        return [_to_cpu(value) for value in obj]
    return obj


def checkpoint_bytes(checkpoint):
    """MAGIC + format_version(uint32 LE) + torch.save 페이로드"""
    payload = {
        "model_state": checkpoint.model_state,
        "optimizer_state": checkpoint.optimizer_state,
        "epoch": checkpoint.epoch,
        "config": checkpoint.config,
        "metric_history": checkpoint.metric_history,
    }
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", checkpoint.format_version))
    torch.save(payload, buffer)
    return buffer.getvalue()


def save_checkpoint(checkpoint, path):
    """버전 헤더가 있는 체크포인트 파일을 저장합니다."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    data = checkpoint_bytes(checkpoint)
    temp_path = f"{path}.tmp"
    with open(temp_path, "wb") as f:
        f.write(data)
    os.replace(temp_path, path)
    logger.info(f"💾 체크포인트 저장: {path} (epoch {checkpoint.epoch}, {len(data)} bytes)")
    return path


def is_checkpoint_file(path):
    with open(path, "rb") as f:
        return f.read(len(CHECKPOINT_MAGIC)) == CHECKPOINT_MAGIC


def load_checkpoint(path):
    """
    체크포인트를 읽습니다.

    Raises:
        FileNotFoundError: 파일이 없을 때 (경로 포함)
        CheckpointError: 헤더가 다르거나 지원하지 않는 버전일 때
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"체크포인트 파일을 찾을 수 없습니다: {path}")
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"FDNet 체크포인트가 아닙니다: {path}")
    offset = len(CHECKPOINT_MAGIC)
    if len(data) < offset + 4:
        raise CheckpointError(f"체크포인트 헤더가 잘렸습니다: {path}")
    (version,) = struct.unpack("<I", data[offset:offset + 4])
    if version > CHECKPOINT_VERSION:
        raise CheckpointError(f"지원하지 않는 체크포인트 버전 {version}: {path}")
    try:
        # 텐서와 기본 컨테이너만 허용 (임의 객체 복원 금지)
        payload = torch.load(io.BytesIO(data[offset + 4:]), map_location="cpu", weights_only=True)
    except (pickle.UnpicklingError, RuntimeError, EOFError, ValueError) as e:
        raise CheckpointError(f"체크포인트 페이로드를 읽을 수 없습니다: {path} ({e})") from e

    return Checkpoint(
        format_version=version,
        model_state=payload["model_state"],
        optimizer_state=payload["optimizer_state"],
        epoch=payload["epoch"],
        config=payload["config"],
        metric_history=payload["metric_history"],
    )


def model_from_checkpoint(checkpoint, device="cpu"):
    """체크포인트의 설정으로 FDNet 을 만들고 파라미터를 채웁니다."""
    model_config = ModelConfig.from_dict(checkpoint.config["model"])
    model_config.backbone.pretrained_weights = None
    model = build_model(model_config)
    model.load_state_dict(checkpoint.model_state)
    return model.to(device).eval()


# ---------------------------------------------------------------------------
# 실행 로그 / 시스템 리소스
# ---------------------------------------------------------------------------

def system_snapshot():
    """현재 프로세스의 메모리/CPU 사용량"""
    try:
        process = psutil.Process()
        return {
            "rss_mb": round(process.memory_info().rss / 1024 / 1024, 1),
            "cpu_percent": process.cpu_percent(),
            "threads": process.num_threads(),
        }
    except psutil.Error as e:
        logger.warning(f"⚠️ 시스템 리소스 조회 실패: {e}")
        return {}


class RunLogger:
    """
    학습 실행 로그 (JSON Lines, 추가 전용)
    첫 줄은 유효 설정과 시스템 정보를 담은 헤더, 이후 한 줄에 한 step.
    """

    def __init__(self, path, config):
        self.path = path
        self.start = time.time()
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                header = {"event": "header", "config": config, "system": system_snapshot()}
                f.write(json.dumps(header, ensure_ascii=False) + "\n")

    def log_step(self, epoch, step, lr, loss):
        entry = {
            "epoch": epoch,
            "step": step,
            "lr": lr,
            "loss": loss,
            "wall_time": round(time.time() - self.start, 4),
        }
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")
        return entry


def read_run_log(path):
    """실행 로그에서 step 항목만 읽습니다."""
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            record = json.loads(line)
            if record.get("event") != "header":
                entries.append(record)
    return entries


def seed_everything(seed):
    """데이터 순서, 초기화, 증강의 모든 난수를 한 seed 로 고정합니다."""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _dump_diagnostics(out_dir, info):
    """손실이 유한하지 않을 때 진단 정보를 남깁니다."""
    if not out_dir:
        return None
    path = os.path.join(out_dir, "diagnostic_dump.json")
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(info, f, ensure_ascii=False, indent=2, default=str)
    return path


# ---------------------------------------------------------------------------
# 학습 루프
# ---------------------------------------------------------------------------

def train(config, dataset=None, run_config=None):
    """
    FDNet 을 Adam 과 계단식 학습률로 학습합니다.

    Args:
        config (TrainConfig): 학습 설정
        dataset (DatasetHandle, optional): 없으면 config.data_root 의 split 을 불러옴
        run_config (dict, optional): 체크포인트/로그에 기록할 유효 설정

    Returns:
        TrainResult: 최종 체크포인트, 모델, step 손실 목록

    Raises:
        NumericsError: 손실이 NaN/Inf 가 되었을 때 (진단 파일을 남김)
    """
    seed_everything(config.seed)
    if dataset is None:
        dataset = load_dataset(config.data_root, config.split)
    if run_config is None:
        run_config = {"seed": config.seed, "model": _model_section(config.model)}

    device = torch.device(config.device)
    model = build_model(config.model).to(device)
    optimizer = torch.optim.Adam(
        [p for p in model.parameters() if p.requires_grad], lr=config.lr0, betas=config.betas
    )

    train_set = SegmentationDataset(dataset, config.resize, config.augment_flip, seed=config.seed)
    loader = DataLoader(
        train_set,
        batch_size=config.batch_size,
        shuffle=True,
        num_workers=config.num_workers,
        generator=torch.Generator().manual_seed(config.seed),
    )

    log_path = os.path.join(config.out_dir, RUN_LOG_FILE) if config.out_dir else None
    checkpoint_path = os.path.join(config.out_dir, CHECKPOINT_FILE) if config.out_dir else None
    run_log = RunLogger(log_path, run_config)

    history, losses = [], []
    step, epoch = 0, 0
    logger.info(f"🚀 학습 시작: {len(dataset)}개 샘플, {config.epochs} epochs, batch {config.batch_size}")

    for epoch in range(config.epochs):
        if config.max_steps is not None and step >= config.max_steps:
            break
        lr = lr_schedule(epoch, config.lr0, config.decay_period, config.decay_factor)
        for group in optimizer.param_groups:
            group["lr"] = lr
        train_set.set_epoch(epoch)

        model.train()
        epoch_losses = []
        for images, masks, _ in loader:
            if config.max_steps is not None and step >= config.max_steps:
                break
            images, masks = images.to(device), masks.to(device)
            preds = model(images)
            loss = compute_loss(preds, masks)

            if not torch.isfinite(loss):
                dump = _dump_diagnostics(config.out_dir, {
                    "epoch": epoch, "step": step, "lr": lr, "loss": float(loss.detach()),
                    "recent_losses": losses[-10:], "system": system_snapshot(),
                    "config": run_config, "traceback": traceback.format_stack(),
                })
                logger.error(f"❌ 손실이 유한하지 않습니다 (epoch {epoch}, step {step}), 진단: {dump}")
                raise NumericsError(f"손실이 유한하지 않습니다: epoch {epoch}, step {step}")

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            value = float(loss.detach())
            losses.append(value)
            epoch_losses.append(value)
            run_log.log_step(epoch, step, lr, value)
            step += 1

        if epoch_losses:
            mean_loss = float(np.mean(epoch_losses))
            history.append({"epoch": epoch, "loss": mean_loss, "lr": lr})
            logger.info(f"📉 epoch {epoch}: loss {mean_loss:.4f} (lr {lr:g})")

        if config.resource_check_every and epoch % config.resource_check_every == 0:
            snapshot = system_snapshot()
            logger.info(f"📊 시스템 리소스: 메모리 {snapshot.get('rss_mb')}MB, CPU {snapshot.get('cpu_percent')}%")

        if checkpoint_path and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(_make_checkpoint(model, optimizer, epoch + 1, run_config, history), checkpoint_path)

    final_epoch = len(history) and history[-1]["epoch"] + 1
    checkpoint = _make_checkpoint(model, optimizer, final_epoch, run_config, history)
    if checkpoint_path:
        save_checkpoint(checkpoint, checkpoint_path)

    logger.info(f"✅ 학습 완료: {step} steps")
    return TrainResult(
        checkpoint=checkpoint, model=model, losses=losses,
        log_path=log_path, checkpoint_path=checkpoint_path,
    )


def _make_checkpoint(model, optimizer, epoch, run_config, history):
    return Checkpoint(
        format_version=CHECKPOINT_VERSION,
        model_state={k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        optimizer_state=_to_cpu(optimizer.state_dict()),
        epoch=epoch,
        config=run_config,
        metric_history=[dict(h) for h in history],
    )


def _model_section(model_config):
    """ModelConfig 를 설정 딕셔너리의 model 섹션 형식으로 바꿉니다."""
    backbone = model_config.backbone
    return {
        "backbone": {
            "variant": backbone.variant,
            "pretrained_weights": backbone.pretrained_weights,
            "freeze": backbone.freeze,
        },
        "cif_width": model_config.cif_width,
        "pool_factor": model_config.pool_factor,
        "ftb_cutoff": model_config.ftb_cutoff,
        "ftb_mode": model_config.ftb_mode,
        "enable_cif": model_config.enable_cif,
        "enable_ab": model_config.enable_ab,
        "enable_ftb": model_config.enable_ftb,
        "output_head": model_config.output_head,
    }
