"""Learning-rate schedule: linear warmup from a 0.1x floor, then step decay."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = ["TrainSchedule", "lr_at"]

WARMUP_FLOOR = 0.1


@dataclass(frozen=True)
class TrainSchedule:
    total_epochs: int = 20
    warmup_epochs: int = 2
    decay_epochs: tuple[tuple[int, float], ...] = ((12, 0.1), (16, 0.1))
    base_lr: float = 6e-4
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if self.total_epochs > 0 and self.warmup_epochs >= self.total_epochs:
            raise ConfigError("warmup_epochs must be < total_epochs")
        for epoch, factor in self.decay_epochs:
            if not (0 < factor <= 1):
                raise ConfigError(f"decay factor {factor} outside (0, 1]")


def lr_at(schedule: TrainSchedule, epoch: int, step_in_epoch: int, steps_per_epoch: int = 1) -> float:
    """Learning rate for a given step.

    Warmup interpolates linearly per-step from 0.1*base to base; afterwards
    the rate is base times the product of the decay factors whose epochs
    have passed.
    """
    if epoch >= schedule.total_epochs:
        raise ConfigError(f"epoch {epoch} beyond schedule ({schedule.total_epochs} epochs)")
    if schedule.warmup_epochs > 0 and epoch < schedule.warmup_epochs:
        progress = (epoch * steps_per_epoch + step_in_epoch) / (schedule.warmup_epochs * steps_per_epoch)
        return schedule.base_lr * (WARMUP_FLOOR + (1.0 - WARMUP_FLOOR) * progress)
    lr = schedule.base_lr
    for decay_epoch, factor in schedule.decay_epochs:
        if epoch >= decay_epoch:
            lr *= factor
    return lr
