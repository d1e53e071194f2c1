# -*- coding: utf-8 -*-
import os
import json
import logging
import traceback

import numpy as np
from PIL import Image
from scipy.ndimage import binary_erosion

from config import METRICS_FILE, apply_overrides, get_dotted, save_run_config
from dataset_manager import SegmentationSample, check_target_size, load_dataset, read_image, resize_sample
from errors import FDNetError
from metrics import REFERENCE_ABLATION, REFERENCE_COMPARISON, REFERENCE_LABEL, evaluate, format_table
from model import ABLATION_PRESETS, architecture_summary, predict_mask, preset_overrides
from phantom_generator import PhantomSpec, write_phantom_dataset
from training_manager import TrainConfig, load_checkpoint, model_from_checkpoint, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
OVERLAY_COLOR = (255, 0, 0)


def get_commands_info():
    """사용 가능한 명령어와 설명을 반환합니다."""
    return """📋 사용 가능한 명령어:
synth   - 합성 팬텀 데이터셋 생성
train   - FDNet 학습
eval    - 체크포인트 평가 (mIoU / Dice)
predict - 이미지 한 장의 마스크와 오버레이 생성
ablate  - No.1 ~ No.4, Ours 구성 학습 및 비교
"""


def run_safely(handler):
    """핸들러 오류를 로그로 남기고 종료 코드로 바꿉니다."""
    def wrapper(run_config, args):
        try:
            return handler(run_config, args)
        except (FDNetError, OSError) as e:
            logger.error(f"❌ {handler.__name__} 실패: {e}")
            logger.debug(traceback.format_exc())
            return EXIT_ERROR
    wrapper.__name__ = handler.__name__
    return wrapper


# 'synth' 명령어 처리 함수
@run_safely
def cmd_synth(run_config, args):
    """합성 팬텀 데이터셋을 데이터 모듈 디렉토리 구조로 씁니다."""
    phantom = run_config["phantom"]
    root = run_config["paths"]["out_dir"]
    n_train, n_test = int(phantom["train"]), int(phantom["test"])
    if n_train == 0 and n_test == 0:
        logger.warning("⚠️ train/test 샘플 수가 모두 0 입니다. 빈 데이터셋 구조만 만듭니다.")

    spec = PhantomSpec.from_dict(phantom, seed=run_config["seed"])
    write_phantom_dataset(
        root, n_train, n_test, spec, seed=run_config["seed"],
        force=getattr(args, "force", False), run_config=run_config,
    )
    print(f"🧪 팬텀 데이터셋: {root} (train {n_train}, test {n_test})")
    return EXIT_OK


@run_safely
def cmd_train(run_config, args):
    """FDNet 을 학습하고 체크포인트와 실행 로그를 씁니다."""
    config = TrainConfig.from_run_config(run_config)
    os.makedirs(config.out_dir, exist_ok=True)
    save_run_config(run_config, os.path.join(config.out_dir, "run_config.json"))
    result = train(config, run_config=run_config)
    print(f"✅ 학습 완료: {result.checkpoint_path} ({len(result.losses)} steps)")
    return EXIT_OK


def inference_size(run_config, checkpoint):
    """평가/예측 해상도: --resize(eval.resize)가 없으면 체크포인트를 학습한 해상도"""
    resize = run_config["eval"]["resize"] or checkpoint.config.get("train", {}).get("resize")
    return check_target_size(resize) if resize else None


@run_safely
def cmd_eval(run_config, args):
    """체크포인트를 평가하고 metrics.json 과 표를 출력합니다."""
    checkpoint_path = run_config["paths"]["checkpoint"]
    if not checkpoint_path:
        raise FileNotFoundError("체크포인트 경로가 필요합니다 (--checkpoint)")
    checkpoint = load_checkpoint(checkpoint_path)
    dataset = load_dataset(run_config["paths"]["data_root"], run_config["eval"]["split"])
    resize = inference_size(run_config, checkpoint)

    report = evaluate(
        checkpoint, dataset, threshold=run_config["eval"]["threshold"],
        resize=resize, config=run_config,
    )
    out_dir = run_config["paths"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    report.save(os.path.join(out_dir, METRICS_FILE))

    rows = [{"method": "FDNet (this run)",
             "miou": report.aggregate["miou"] * 100, "dice": report.aggregate["dice"] * 100}]
    rows += [dict(row, method=f"{row['method']} ({REFERENCE_LABEL})") for row in REFERENCE_COMPARISON]
    print(format_table(rows))
    return EXIT_OK


def render_overlay(image, mask):
    """입력 이미지 위에 마스크 윤곽선을 그린 RGB 배열"""
    gray = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb = np.stack([gray] * 3, axis=-1)
    region = mask.astype(bool)
    contour = region & ~binary_erosion(region)
    rgb[contour] = OVERLAY_COLOR
    return rgb


# 'predict' 명령어 처리 함수
@run_safely
def cmd_predict(run_config, args):
    """이미지 한 장의 이진 마스크(0/255)와 윤곽선 오버레이를 저장합니다."""
    checkpoint_path = run_config["paths"]["checkpoint"]
    image_path = args.image
    for path in (checkpoint_path, image_path):
        if not path or not os.path.exists(path):
            raise FileNotFoundError(f"파일을 읽을 수 없습니다: {path}")

    checkpoint = load_checkpoint(checkpoint_path)
    model = model_from_checkpoint(checkpoint, device=run_config["device"])

    image = read_image(image_path)
    network_input = image
    resize = inference_size(run_config, checkpoint)
    if resize:
        sample = SegmentationSample(image=image, mask=np.zeros(image.shape, dtype=np.uint8), id=image_path)
        network_input = resize_sample(sample, resize).image

    mask = predict_mask(model, network_input, threshold=run_config["eval"]["threshold"])
    if mask.shape != image.shape:
        # 원본 해상도로 되돌릴 때도 nearest 로 이진성을 유지
        restored = Image.fromarray(mask * 255).resize((image.shape[1], image.shape[0]), Image.NEAREST)
        mask = (np.asarray(restored) > 127).astype(np.uint8)

    out_dir = run_config["paths"]["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(image_path))[0]
    mask_path = os.path.join(out_dir, f"{stem}_mask.png")
    overlay_path = os.path.join(out_dir, f"{stem}_overlay.png")
    Image.fromarray(mask.astype(np.uint8) * 255).save(mask_path)
    Image.fromarray(render_overlay(image, mask)).save(overlay_path)
    with open(os.path.join(out_dir, f"{stem}_predict.json"), "w", encoding="utf-8") as f:
        json.dump({"mask": mask_path, "overlay": overlay_path, "config": run_config}, f, ensure_ascii=False, indent=2)

    print(f"🖼️ 마스크: {mask_path}\n🖼️ 오버레이: {overlay_path}")
    return EXIT_OK


def run_ablation(run_config, train_set=None, test_set=None):
    """
    ABLATION_PRESETS 의 각 구성을 학습/평가해 표 형태의 행 목록을 만듭니다.
    한 행이 실패해도 나머지 행은 계속 진행하고 실패로 표시합니다.
    """
    if train_set is None:
        train_set = load_dataset(run_config["paths"]["data_root"], "train")
    if test_set is None:
        test_set = load_dataset(run_config["paths"]["data_root"], "test")
    base_out = run_config["paths"]["out_dir"]

    rows = []
    for name in ABLATION_PRESETS:
        row_overrides = preset_overrides(name)
        if base_out:
            row_overrides["paths.out_dir"] = os.path.join(base_out, name.replace(".", ""))
        row_config = apply_overrides(run_config, row_overrides)

        row = {
            "name": name,
            "components": ["backbone"] + list(ABLATION_PRESETS[name]),
            "reference": dict(REFERENCE_ABLATION[name], label=REFERENCE_LABEL),
            "status": "ok",
        }
        try:
            logger.info(f"🧪 ablation {name} 시작: {row['components']}")
            config = TrainConfig.from_run_config(row_config)
            result = train(config, dataset=train_set, run_config=row_config)
            report = evaluate(
                result.model, test_set, threshold=row_config["eval"]["threshold"],
                resize=config.resize, config=row_config,
            )
            row.update({
                "architecture": architecture_summary(result.model),
                "miou": report.aggregate["miou"],
                "dice": report.aggregate["dice"],
            })
        except Exception as e:
            logger.error(f"❌ ablation {name} 실패: {e}")
            logger.debug(traceback.format_exc())
            row.update({"status": "failed", "error": str(e), "miou": None, "dice": None})
        rows.append(row)
    return rows


def ablation_table(rows):
    """ablation 결과 텍스트 표 (이번 실행 값과 참고 값)"""
    table_rows = []
    for row in rows:
        table_rows.append({
            "name": row["name"],
            "components": "+".join(row["components"]),
            "miou": row["miou"] * 100 if row["miou"] is not None else None,
            "dice": row["dice"] * 100 if row["dice"] is not None else None,
            "ref": f"{row['reference']['miou']:.1f}/{row['reference']['dice']:.1f}",
            "status": row["status"],
        })
    ran = {row["name"] for row in rows}
    for name, reference in REFERENCE_ABLATION.items():
        if name in ran or name in ABLATION_PRESETS:
            continue
        table_rows.append({
            "name": name, "components": "-", "miou": None, "dice": None,
            "ref": f"{reference['miou']:.1f}/{reference['dice']:.1f}", "status": "reference only",
        })
    return format_table(
        table_rows,
        columns=("No.", "Components", "mIoU↑", "Dice↑", f"Reported ({REFERENCE_LABEL})", "Status"),
        keys=("name", "components", "miou", "dice", "ref", "status"),
    )


# 'ablate' 명령어 처리 함수
@run_safely
def cmd_ablate(run_config, args):
    """No.1 ~ No.4 와 전체 FDNet 을 데스크 규모로 학습/평가합니다."""
    rows = run_ablation(run_config)

    out_dir = get_dotted(run_config, "paths.out_dir")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as f:
        json.dump({"rows": rows, "config": run_config}, f, ensure_ascii=False, indent=2, default=str)

    print(ablation_table(rows))
    failed = [row["name"] for row in rows if row["status"] != "ok"]
    if failed:
        logger.warning(f"⚠️ 실패한 구성: {failed}")
        return EXIT_ERROR
    return EXIT_OK
