import math

import numpy as np
import pytest

from owskit.data import (
    MIN_SEPARATION,
    dump_dataset,
    inject_outliers,
    load_dataset,
    make_task,
    model_outputs,
    separation_ratio,
)
from owskit.errors import ConfigError
from owskit.nn import init_model
from owskit.outlier import profile_model
from owskit.schemas import TaskKind, TaskOptions


def test_batches_are_pure_functions_of_index(mlp_spec):
    task = make_task(TaskKind.TEACHER_STUDENT, mlp_spec, seed=3, batch_size=4)
    later = task.batch("train", 7)
    task.batch("train", 0)
    again = make_task(TaskKind.TEACHER_STUDENT, mlp_spec, seed=3, batch_size=4).batch("train", 7)
    assert np.array_equal(later.inputs, again.inputs)
    assert np.array_equal(later.targets, again.targets)


def test_splits_are_disjoint_streams(mlp_spec):
    task = make_task(TaskKind.TEACHER_STUDENT, mlp_spec, seed=0, batch_size=4)
    assert not np.array_equal(task.batch("train", 0).inputs, task.batch("validation", 0).inputs)
    with pytest.raises(ConfigError):
        task.batch("test", 0)


def test_teacher_student_targets_come_from_teacher(mlp_spec):
    task = make_task(TaskKind.TEACHER_STUDENT, mlp_spec, seed=0, batch_size=4)
    batch = task.batch("train", 0)
    assert np.allclose(batch.targets, model_outputs(task.teacher, batch.inputs))
    student = task.initial_model()
    assert not np.array_equal(student.head, task.teacher.head)


def test_seq_copy_targets_equal_inputs(transformer_spec):
    task = make_task(TaskKind.SEQ_COPY, transformer_spec, seed=0, batch_size=3)
    batch = task.batch("train", 2)
    assert batch.inputs.shape == (3, transformer_spec.seq_len)
    assert np.array_equal(batch.inputs, batch.targets)
    assert batch.inputs.max() < transformer_spec.vocab


def test_task_arch_compatibility(mlp_spec, transformer_spec):
    with pytest.raises(ConfigError):
        make_task(TaskKind.SEQ_COPY, mlp_spec, seed=0)
    with pytest.raises(ConfigError):
        make_task(TaskKind.TEACHER_STUDENT, transformer_spec, seed=0)
    with pytest.raises(ConfigError):
        make_task(TaskKind.LAYER_SIGNAL, transformer_spec, seed=0)


def test_inject_outliers_scales_large_entries(mlp_spec):
    model = init_model(mlp_spec, seed=0)
    before = model.blocks[1].matrices["w1"].copy()
    changed = inject_outliers(model, [1], scale=10.0, fraction=0.01, rng=np.random.default_rng(0))
    after = model.blocks[1].matrices["w1"]
    diff = np.flatnonzero(before != after)
    assert changed == 2 * max(1, round(0.01 * before.size))
    assert diff.size == max(1, round(0.01 * before.size))
    assert np.allclose(after.ravel()[diff], 10.0 * before.ravel()[diff])
    assert np.all(np.abs(before.ravel()[diff]) >= np.median(np.abs(before)))


def test_separation_ratio():
    assert separation_ratio([0.0, 0.4, 0.0, 0.0], [1]) == math.inf
    assert separation_ratio([0.1, 0.4, 0.1, 0.1], [1]) == pytest.approx(4.0)
    assert separation_ratio([0.0, 0.0], [0]) == 0.0


def test_layer_signal_task_concentrates_outliers(mlp_spec):
    task = make_task(TaskKind.LAYER_SIGNAL, mlp_spec, seed=0, batch_size=8)
    assert task.signal_blocks == (mlp_spec.n_layers // 2,)
    assert task.separation >= MIN_SEPARATION

    start = task.initial_model()
    profile = profile_model(start, task.batches("calibration", 2))
    assert profile.argmax() in task.signal_blocks

    # teacher는 S 블록만 다르다
    for i, (a, b) in enumerate(zip(start.blocks, task.teacher.blocks)):
        same = all(np.array_equal(a.matrices[k], b.matrices[k]) for k in a.matrices)
        assert same == (i not in task.signal_blocks)


def test_layer_signal_rejects_bad_blocks(mlp_spec):
    with pytest.raises(ConfigError):
        make_task(TaskKind.LAYER_SIGNAL, mlp_spec, seed=0, options=TaskOptions(signal_blocks=[9]))
    with pytest.raises(ConfigError):
        make_task(TaskKind.LAYER_SIGNAL, mlp_spec, seed=0, options=TaskOptions(signal_blocks=[]))


def test_dataset_dump_round_trip(tmp_path, mlp_spec, transformer_spec):
    task = make_task(TaskKind.TEACHER_STUDENT, mlp_spec, seed=0, batch_size=4)
    loaded = load_dataset(dump_dataset(task, tmp_path / "ts", {"train": 2, "validation": 1}))
    assert len(loaded["train"]) == 2
    assert np.allclose(loaded["train"][1].inputs, task.batch("train", 1).inputs, rtol=1e-6)

    copy_task = make_task(TaskKind.SEQ_COPY, transformer_spec, seed=0, batch_size=3)
    loaded = load_dataset(dump_dataset(copy_task, tmp_path / "copy", {"train": 1}))
    assert loaded["train"][0].inputs.dtype == np.int64
    assert np.array_equal(loaded["train"][0].inputs, copy_task.batch("train", 0).inputs)
