"""
Accuracy/fairness trade-off coefficient α_t per iteration.
"""

from dataclasses import dataclass
from typing import Union

from fairal.config import AlphaConfig, FixedAlpha


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class FixedSchedule:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ScheduleError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class LinearDecaySchedule:
    """Plateaus from hi down to lo in `steps` levels, each ⌊B/steps⌋ iterations wide."""

    hi: float = 1.0
    lo: float = 0.0
    steps: int = 11

    def __post_init__(self):
        if not (0.0 <= self.hi <= 1.0 and 0.0 <= self.lo <= 1.0):
            raise ScheduleError(f"hi and lo must lie in [0, 1], got {self.hi}, {self.lo}")
        if self.steps < 1:
            raise ScheduleError(f"steps must be positive, got {self.steps}")


AlphaSchedule = Union[FixedSchedule, LinearDecaySchedule]


def alpha_at(schedule: AlphaSchedule, t: int, budget: int) -> float:
    if budget < 1:
        raise ScheduleError(f"budget must be positive, got {budget}")
    if not 0 <= t < budget:
        raise ScheduleError(f"iteration {t} outside [0, {budget})")

    if isinstance(schedule, FixedSchedule):
        return schedule.alpha

    if schedule.steps == 1:
        return schedule.hi
    width = max(1, budget // schedule.steps)
    level = min(t // width, schedule.steps - 1)
    last = schedule.steps - 1
    # Interpolate as a weighted mean so e.g. 3/10 comes out as exactly 0.3
    return ((last - level) * schedule.hi + level * schedule.lo) / last


def alpha_values(schedule: AlphaSchedule, budget: int) -> list[float]:
    return [alpha_at(schedule, t, budget) for t in range(budget)]


def from_config(config: AlphaConfig) -> AlphaSchedule:
    if isinstance(config, FixedAlpha):
        return FixedSchedule(alpha=config.value)
    return LinearDecaySchedule(hi=config.hi, lo=config.lo, steps=config.steps)
