#!/usr/bin/env python
"""큐에 쌓인 sweep 실행을 처리하는 Worker

    python run_worker.py                       # 등록된 모든 작업 유형
    python run_worker.py --types sweep-run     # 지정한 유형만
    python run_worker.py --worker-id gpu-0 --max-tasks 10
"""

import argparse
import asyncio
import logging

from dotenv import load_dotenv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="owskit sweep worker")
    parser.add_argument("--types", nargs="*", default=None, help="처리할 작업 유형 (생략 시 전체)")
    parser.add_argument("--group", default=None, help="Consumer Group 이름 (기본: ows-workers)")
    parser.add_argument("--worker-id", default=None, help="consumer 이름 (생략 시 자동 생성)")
    parser.add_argument("--max-tasks", type=int, default=None, help="이만큼 처리하면 종료")
    return parser


async def serve(args: argparse.Namespace) -> int:
    from owskit.tasks.consumer import TaskConsumer
    from owskit.tasks.redis_client import close_redis

    consumer = TaskConsumer(worker_id=args.worker_id)
    try:
        return await consumer.run(task_types=args.types, group=args.group, max_tasks=args.max_tasks)
    finally:
        await close_redis()


def main() -> None:
    load_dotenv()
    args = build_parser().parse_args()

    from owskit.cli import configure_logging

    configure_logging()
    try:
        processed = asyncio.run(serve(args))
    except KeyboardInterrupt:
        processed = None
    logging.getLogger("run_worker").info("worker exiting (processed=%s)", processed)


if __name__ == "__main__":
    main()
