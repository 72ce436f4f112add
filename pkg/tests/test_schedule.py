import pytest

from modnorm.errors import ConfigError
from modnorm.schedule import TrainSchedule, lr_at


def test_reference_shape_after_second_decay():
    sched = TrainSchedule(total_epochs=20, warmup_epochs=2,
                          decay_epochs=((12, 0.1), (16, 0.1)), base_lr=6e-4)
    for epoch in range(16, 20):
        assert lr_at(sched, epoch, 0) == pytest.approx(0.01 * 6e-4)
    for epoch in range(12, 16):
        assert lr_at(sched, epoch, 0) == pytest.approx(0.1 * 6e-4)


def test_warmup_floor_and_ramp():
    sched = TrainSchedule(base_lr=1.0)
    assert lr_at(sched, 0, 0, steps_per_epoch=10) == pytest.approx(0.1)
    assert lr_at(sched, 1, 9, steps_per_epoch=10) == pytest.approx(0.1 + 0.9 * 19 / 20)
    assert lr_at(sched, 2, 0, steps_per_epoch=10) == pytest.approx(1.0)


def test_non_increasing_after_warmup():
    sched = TrainSchedule()
    steps = 7
    last = None
    for epoch in range(sched.warmup_epochs, sched.total_epochs):
        for step in range(steps):
            lr = lr_at(sched, epoch, step, steps_per_epoch=steps)
            if last is not None:
                assert lr <= last
            last = lr


def test_schedule_validation():
    with pytest.raises(ConfigError):
        TrainSchedule(total_epochs=2, warmup_epochs=2)
    with pytest.raises(ConfigError):
        TrainSchedule(decay_epochs=((5, 1.5),))
    with pytest.raises(ConfigError):
        lr_at(TrainSchedule(), 25, 0)
