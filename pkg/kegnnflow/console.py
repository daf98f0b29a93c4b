"""命令行公共部分：日志初始化与异常到退出码的映射。"""

import argparse
import logging
import sys
from typing import Callable

from kegnnflow.errors import KegnnError

logger = logging.getLogger(__name__)


def add_verbose_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="store_true", help="输出调试日志")


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def run_guarded(func: Callable[[argparse.Namespace], int], args: argparse.Namespace) -> int:
    """执行命令体；KegnnError 打印到 stderr 并返回对应的退出码。"""
    setup_logging(getattr(args, "verbose", False))
    try:
        return func(args)
    except KegnnError as exc:
        print(f"错误: {exc}", file=sys.stderr)
        logger.debug("命令失败", exc_info=True)
        return exc.exit_code
