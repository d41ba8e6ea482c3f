import asyncio
from datetime import datetime, timezone

import pytest

from owskit.errors import ConfigError, StateError
from owskit.tasks import RunTask, TaskProducer, TaskStatus, TaskStore, build_worker
from owskit.tasks.consumer import DEFAULT_GROUP, TaskConsumer
from owskit.tasks.producer import stream_name
from owskit.tasks.redis_client import set_redis
from owskit.tasks.sweep import queue_sweep, submit_sweep, wait_for_results
from owskit.tasks.workers import SweepRunWorker

pytestmark = pytest.mark.asyncio

_TINY = {"model": {"n_layers": 2, "d_model": 8, "d_hidden": 12}, "rank": 2, "gamma": 1.0}


def _task(task_id, config=None, **fields):
    return RunTask(
        task_id=task_id,
        axis="gamma",
        value=1.0,
        config=config or {},
        created_at=datetime.now(timezone.utc),
        **fields,
    )


async def test_store_save_and_transition(fake_redis):
    store = TaskStore(fake_redis)
    await store.save(_task("t1"))
    assert await store.status("t1") == TaskStatus.PENDING

    updated = await store.transition("t1", TaskStatus.COMPLETED, result={"final_eval_loss": 0.5})
    assert updated.finished
    loaded = await store.get("t1")
    assert loaded.result == {"final_eval_loss": 0.5}
    assert loaded.axis == "gamma"
    assert await store.status("t1") == TaskStatus.COMPLETED
    assert await fake_redis.ttl(f"{TaskStore.KEY_PREFIX}t1") > 0

    assert await store.get("missing") is None
    with pytest.raises(StateError):
        await store.transition("missing", TaskStatus.RUNNING)


async def test_producer_stores_record_and_sends_id_only(fake_redis, config_factory):
    producer = TaskProducer(fake_redis)
    task = await producer.submit(config_factory(), "rank", 3)

    entries = await fake_redis.xrange(stream_name("sweep-run"))
    assert [fields for _, fields in entries] == [{"task_id": task.task_id}]
    stored = await producer.store.get(task.task_id)
    assert stored.value == 3 and isinstance(stored.value, int)
    assert stored.config["rank"] == 4


async def test_default_client_is_shared(fake_redis, config_factory):
    set_redis(fake_redis)
    try:
        task = await TaskProducer().submit(config_factory(), "gamma", 1.0)
        assert await TaskStore().get(task.task_id) is not None
    finally:
        set_redis(None)


async def test_registry_builds_sweep_worker(fake_redis):
    store = TaskStore(fake_redis)
    assert isinstance(build_worker(_task("t"), store), SweepRunWorker)

    bogus = _task("t").model_copy(update={"task_type": "nope"})
    with pytest.raises(ConfigError):
        build_worker(bogus, store)


async def test_consumer_runs_sweep_tasks(fake_redis, config_factory):
    producer = TaskProducer(fake_redis)
    task_ids = await submit_sweep(config_factory(**_TINY), "gamma", [1.0, 2.0], producer)

    consumer = TaskConsumer(worker_id="w1", client=fake_redis, block_ms=10)
    assert await consumer.run(max_tasks=2) == 2

    records = await wait_for_results(producer.store, task_ids, timeout=1.0, poll_interval=0.01)
    rows = [records[t].result for t in task_ids]
    assert [row["gamma"] for row in rows] == [1.0, 2.0]
    assert all(records[t].status == TaskStatus.COMPLETED.value for t in task_ids)
    assert all(records[t].worker_id == "w1" for t in task_ids)
    assert rows[0]["memory_total_elems"] <= rows[1]["memory_total_elems"]


async def test_invalid_config_is_recorded_and_acked(fake_redis):
    store = TaskStore(fake_redis)
    await store.save(_task("bad", config={"gamma": 99.0}))
    await fake_redis.xadd(stream_name("sweep-run"), {"task_id": "bad"})

    consumer = TaskConsumer(client=fake_redis, block_ms=10)
    await consumer.run(max_tasks=1)

    stored = await store.get("bad")
    assert stored.status == TaskStatus.FAILED.value
    assert "gamma" in stored.error
    assert stored.finished_at is not None
    pending = await fake_redis.xpending(stream_name("sweep-run"), DEFAULT_GROUP)
    assert pending["pending"] == 0


async def test_message_without_record_is_dropped(fake_redis):
    await fake_redis.xadd(stream_name("sweep-run"), {"task_id": "expired"})
    consumer = TaskConsumer(client=fake_redis, block_ms=10)
    assert await consumer.run(max_tasks=1) == 1
    pending = await fake_redis.xpending(stream_name("sweep-run"), DEFAULT_GROUP)
    assert pending["pending"] == 0


async def test_wait_times_out_and_detects_missing_records(fake_redis):
    store = TaskStore(fake_redis)
    await store.save(_task("slow"))
    with pytest.raises(StateError):
        await wait_for_results(store, ["slow"], timeout=0.0, poll_interval=0.01)
    with pytest.raises(StateError):
        await wait_for_results(store, ["gone"], timeout=1.0, poll_interval=0.01)


async def test_queue_sweep_with_concurrent_consumer(fake_redis, config_factory):
    base = config_factory(**_TINY)
    consumer = TaskConsumer(client=fake_redis, block_ms=10)
    rows, _ = await asyncio.gather(
        queue_sweep(base, "rank", [1, 2], client=fake_redis, timeout=60.0, poll_interval=0.01),
        consumer.run(max_tasks=2),
    )
    assert [row["rank"] for row in rows] == [1, 2]
