"""import 시점에 registry에 등록된다"""

from owskit.tasks.workers.train_worker import SweepRunWorker

__all__ = ["SweepRunWorker"]
