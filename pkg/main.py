# -*- coding: utf-8 -*-
import sys
import logging
import argparse

from config import DESK_SCALE_OVERRIDES, LOG_LEVEL, load_run_config, parse_override
from cli_handlers import cmd_ablate, cmd_eval, cmd_predict, cmd_synth, cmd_train, get_commands_info
from errors import ConfigError

logger = logging.getLogger(__name__)

# 명령행 플래그 -> 설정 키 (플래그가 파일 설정보다 우선)
FLAG_KEYS = {
    "seed": "seed",
    "device": "device",
    "out": "paths.out_dir",
    "data": "paths.data_root",
    "checkpoint": "paths.checkpoint",
    "n_train": "phantom.train",
    "n_test": "phantom.test",
    "canvas": "phantom.canvas_size",
    "cells": "phantom.cell_count",
    "interference": "phantom.interference_count",
    "cell_contrast": "phantom.cell_contrast",
    "interference_contrast": "phantom.interference_contrast",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.lr0",
    "resize": "train.resize",
    "max_steps": "train.max_steps",
    "augment_flip": "train.augment_flip",
    "variant": "model.backbone.variant",
    "weights": "model.backbone.pretrained_weights",
    "freeze": "model.backbone.freeze",
    "cutoff": "model.ftb_cutoff",
    "pool_factor": "model.pool_factor",
    "output_head": "model.output_head",
    "no_cif": "model.enable_cif",
    "no_ab": "model.enable_ab",
    "no_ftb": "model.enable_ftb",
    "threshold": "eval.threshold",
    "split": "eval.split",
    "eval_resize": "eval.resize",
}
NEGATED_FLAGS = {"no_cif", "no_ab", "no_ftb"}

COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
}


def _add_model_flags(parser):
    parser.add_argument("--variant", choices=["resnet50", "tiny"], help="백본 변형")
    parser.add_argument("--weights", help="백본 가중치 파일 (선택)")
    parser.add_argument("--cutoff", type=float, help="FTB high-pass 차단 반지름 ρ0 (ftb.cutoff)")
    parser.add_argument("--pool-factor", type=int, help="AB 평균 풀링 배수")
    parser.add_argument("--resize", type=int, nargs=2, metavar=("H", "W"), help="학습/평가 해상도")


def build_parser():
    """명령어별 하위 파서를 등록합니다."""
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON 설정 파일")
    shared.add_argument("--seed", type=int, help="모든 난수의 단일 seed")
    shared.add_argument("--out", help="출력 디렉토리")
    shared.add_argument("--device", help="torch 장치 (cpu, cuda ...)")
    shared.add_argument("--log-level", default=LOG_LEVEL, help="로그 레벨")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="임의 설정 덮어쓰기 (예: train.decay_period=10)")
    shared.add_argument("--force", action="store_true", help="비어 있지 않은 출력 디렉토리 덮어쓰기")

    parser = argparse.ArgumentParser(
        prog="fdnet", description="FDNet 주파수 영역 잡음 제거 분할 파이프라인",
        epilog=get_commands_info(), formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[shared], help="합성 팬텀 데이터셋 생성")
    synth.add_argument("--train", dest="n_train", type=int, help="train 샘플 수")
    synth.add_argument("--test", dest="n_test", type=int, help="test 샘플 수")
    synth.add_argument("--canvas", type=int, nargs=2, metavar=("H", "W"), help="캔버스 크기")
    synth.add_argument("--cells", type=int, help="이미지당 세포 수")
    synth.add_argument("--interference", type=int, help="이미지당 간섭 수")
    synth.add_argument("--cell-contrast", type=float)
    synth.add_argument("--interference-contrast", type=float)

    train = sub.add_parser("train", parents=[shared], help="FDNet 학습")
    train.add_argument("--data", help="데이터셋 루트")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float, help="초기 학습률 lr0")
    train.add_argument("--max-steps", type=int)
    train.add_argument("--augment-flip", action="store_true", default=None)
    train.add_argument("--freeze", action="store_true", default=None, help="백본 고정")
    train.add_argument("--output-head", choices=["y3", "mean"])
    train.add_argument("--no-cif", action="store_true", default=None)
    train.add_argument("--no-ab", action="store_true", default=None)
    train.add_argument("--no-ftb", action="store_true", default=None)
    _add_model_flags(train)

    evaluate = sub.add_parser("eval", parents=[shared], help="체크포인트 평가")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", help="데이터셋 루트")
    evaluate.add_argument("--split", choices=["train", "test"])
    evaluate.add_argument("--threshold", type=float)
    evaluate.add_argument("--resize", dest="eval_resize", type=int, nargs=2, metavar=("H", "W"),
                          help="평가 해상도 (기본: 체크포인트의 학습 해상도)")

    predict = sub.add_parser("predict", parents=[shared], help="마스크 + 오버레이 생성")
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--image", required=True)
    predict.add_argument("--threshold", type=float)
    predict.add_argument("--resize", dest="eval_resize", type=int, nargs=2, metavar=("H", "W"),
                         help="예측 해상도 (기본: 체크포인트의 학습 해상도)")

    ablate = sub.add_parser("ablate", parents=[shared], help="ablation 표 생성")
    ablate.add_argument("--data", help="데이터셋 루트")
    ablate.add_argument("--epochs", type=int)
    ablate.add_argument("--batch-size", type=int)
    ablate.add_argument("--max-steps", type=int)
    _add_model_flags(ablate)

    return parser


def collect_overrides(args):
    """파싱된 플래그를 점 표기 설정 덮어쓰기로 바꿉니다."""
    overrides = {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest in NEGATED_FLAGS:
            value = not value
        overrides[key] = list(value) if isinstance(value, (list, tuple)) else value
    for text in args.set:
        key, value = parse_override(text)
        overrides[key] = value
    return overrides


def main(argv=None):
    """명령어를 실행하고 종료 코드를 돌려줍니다."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
    )

    try:
        overrides = collect_overrides(args)
        # ablate 는 데스크 규모 기본값 위에 파일과 플래그를 얹습니다
        defaults = DESK_SCALE_OVERRIDES if args.command == "ablate" else None
        run_config = load_run_config(args.config, overrides, defaults=defaults)
    except (ConfigError, OSError) as e:
        logger.error(f"❌ 설정 오류: {e}")
        return 1

    logger.info(f"▶️ {args.command} 실행")
    return COMMANDS[args.command](run_config, args)


if __name__ == "__main__":
    sys.exit(main())
