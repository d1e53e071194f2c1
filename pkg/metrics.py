# -*- coding: utf-8 -*-
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from dataset_manager import resize_sample
from errors import ShapeError, ValidationError
from model import predict_mask
from training_manager import Checkpoint, model_from_checkpoint

logger = logging.getLogger(__name__)

REFERENCE_LABEL = "reference, not reproduced"

# 원 연구의 비교 표 (IAI704 test, mIoU / Dice, ×100)
REFERENCE_COMPARISON = [
    {"method": "UNet", "miou": 67.1, "dice": 74.3},
    {"method": "Deeplab", "miou": 58.4, "dice": 63.5},
    {"method": "UNet++", "miou": 60.2, "dice": 68.4},
    {"method": "TransUnet", "miou": 56.8, "dice": 61.0},
    {"method": "PraNet", "miou": 70.6, "dice": 77.9},
    {"method": "SwinUnet", "miou": 53.7, "dice": 59.4},
    {"method": "UCtransNet", "miou": 75.7, "dice": 82.1},
    {"method": "Ours", "miou": 80.8, "dice": 86.2},
]

# 원 연구의 ablation 표
REFERENCE_ABLATION = {
    "No.1": {"miou": 50.4, "dice": 54.7},
    "No.2": {"miou": 58.1, "dice": 61.3},
    "No.3": {"miou": 68.5, "dice": 73.8},
    "No.4": {"miou": 69.7, "dice": 74.1},
    "Ours": {"miou": 80.8, "dice": 86.2},
    # 다른 네트워크에 FTB 만 붙인 참고 행 (이 저장소에서는 재현하지 않음)
    "UCtransNet+FTB": {"miou": 78.6, "dice": 83.4},
}


def _check_pair(pred_mask, gt_mask):
    pred = np.asarray(pred_mask)
    gt = np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise ShapeError(f"예측 {pred.shape} 과 정답 {gt.shape} 모양이 다릅니다")
    if not (np.isin(pred, (0, 1)).all() and np.isin(gt, (0, 1)).all()):
        raise ValidationError("마스크는 0/1 값만 가져야 합니다")
    return pred.astype(bool), gt.astype(bool)


def _iou(pred, gt):
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def dice(pred_mask, gt_mask):
    """2·|P∩G| / (|P|+|G|), 둘 다 비어 있으면 1"""
    pred, gt = _check_pair(pred_mask, gt_mask)
    total = np.count_nonzero(pred) + np.count_nonzero(gt)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(pred & gt) / total


def class_ious(pred_mask, gt_mask):
    """(전경 IoU, 배경 IoU)"""
    pred, gt = _check_pair(pred_mask, gt_mask)
    return _iou(pred, gt), _iou(~pred, ~gt)


def miou(pred_mask, gt_mask):
    """전경/배경 IoU 의 평균"""
    iou_fg, iou_bg = class_ious(pred_mask, gt_mask)
    return (iou_fg + iou_bg) / 2.0


def image_scores(sample_id, pred_mask, gt_mask):
    iou_fg, iou_bg = class_ious(pred_mask, gt_mask)
    return {
        "id": sample_id,
        "iou_fg": iou_fg,
        "iou_bg": iou_bg,
        "miou": (iou_fg + iou_bg) / 2.0,
        "dice": dice(pred_mask, gt_mask),
    }


@dataclass
class MetricsReport:
    """이미지별/전체 mIoU, Dice (값은 [0, 1], 표에서는 ×100)"""
    per_image: list
    aggregate: dict
    config: dict = field(default_factory=dict)
    reference_scores: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, per_image, config=None):
        if not per_image:
            raise ValidationError("평가할 이미지가 없습니다")
        aggregate = {
            "miou": float(np.mean([row["miou"] for row in per_image])),
            "dice": float(np.mean([row["dice"] for row in per_image])),
            "images": len(per_image),
        }
        reference = {"label": REFERENCE_LABEL, "comparison": REFERENCE_COMPARISON}
        return cls(per_image=per_image, aggregate=aggregate, config=config or {}, reference_scores=reference)

    def to_dict(self):
        return {
            "aggregate": self.aggregate,
            "per_image": self.per_image,
            "config": self.config,
            "reference_scores": self.reference_scores,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
        logger.info(f"📝 평가 결과 저장: {path}")


def evaluate(model, dataset, threshold=0.5, resize=None, config=None):
    """
    데이터셋의 이미지마다 predict_mask 를 돌리고 지표를 모읍니다.

    Args:
        model (FDNet | Checkpoint): 평가할 모델 또는 체크포인트
        dataset (DatasetHandle): 평가 샘플
        threshold (float): 이진화 확률 기준
        resize (tuple, optional): 평가 해상도 (h, w)
        config (dict, optional): 보고서에 기록할 유효 설정

    Raises:
        ValidationError: 데이터셋이 비어 있을 때
    """
    if len(dataset) == 0:
        raise ValidationError("빈 데이터셋은 평가할 수 없습니다")
    if isinstance(model, Checkpoint):
        model = model_from_checkpoint(model)

    per_image = []
    for sample in dataset:
        if resize:
            sample = resize_sample(sample, resize)
        pred = predict_mask(model, sample.image, threshold)
        per_image.append(image_scores(sample.id, pred, sample.mask))

    report = MetricsReport.from_scores(per_image, config)
    logger.info(
        f"📊 평가 완료: {len(per_image)}장, mIoU {report.aggregate['miou'] * 100:.1f}, "
        f"Dice {report.aggregate['dice'] * 100:.1f}"
    )
    return report


def format_table(rows, columns=("Method", "mIoU↑", "Dice↑"), keys=("method", "miou", "dice")):
    """정렬된 텍스트 표를 만듭니다. 숫자는 소수점 한 자리."""
    rendered = []
    for row in rows:
        cells = []
        for key in keys:
            value = row.get(key)
            if isinstance(value, float):
                cells.append(f"{value:.1f}")
            elif value is None:
                cells.append("-")
            else:
                cells.append(str(value))
        rendered.append(cells)

    widths = [max([len(c)] + [len(r[i]) for r in rendered]) for i, c in enumerate(columns)]
    lines = [" | ".join(c.ljust(widths[i]) for i, c in enumerate(columns))]
    lines.append("-+-".join("-" * w for w in widths))
    for cells in rendered:
        lines.append(" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)))
    return "\n".join(lines)
