#!/usr/bin/env python
"""owskit 명령행 실행 스크립트

사용법:
    python run_ows.py calibrate --config desk.json
    python run_ows.py train --method ows --gamma 2 --rank 8 --out runs/ows
    python run_ows.py sweep --axis gamma --values 1 2 4
    python run_ows.py sweep --axis tau --values 1 13 1e6 --queue   # run_worker.py로 분산
    python run_ows.py memory --gammas 1 2 4 8 --ranks 8
    python run_ows.py compare --task layer-signal --methods ows lisa-uniform ows-reverse
"""

import sys

from dotenv import load_dotenv


def main() -> int:
    load_dotenv()

    from owskit.cli import configure_logging, main as cli_main

    configure_logging()
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
