"""P1P2 confidence gating and the automatic threshold tuner."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

DEFAULT_LADDER = (1.0, 0.64, 0.32, 0.16, 0.08)


class Action(enum.Enum):
    QUERY = "query"
    SKIP_TRAINING = "skip"


class Reason(enum.Enum):
    LOW_CONFIDENCE = "low_confidence"
    HIGH_CONFIDENCE = "high_confidence"
    WARMUP_ACTIVE = "warmup_active"
    DRIFT_ACTIVE = "drift_active"


class Event(enum.Enum):
    SKIPPED_HIGH_CONF = "skipped_high_conf"
    QUERIED_MATCH = "queried_match"
    QUERIED_MISMATCH = "queried_mismatch"


@dataclass(frozen=True)
class Confidence:
    p1: float
    p2: float

    @property
    def margin(self) -> float:
        return self.p1 - self.p2


@dataclass(frozen=True)
class GateDecision:
    action: Action
    reason: Reason

    @property
    def query(self) -> bool:
        return self.action is Action.QUERY


def confidence(probs) -> Confidence:
    """Top-1 and top-2 class probabilities of a prediction.

    Accepts a probability vector or anything with a ``probs`` attribute.
    """
    probs = np.asarray(getattr(probs, "probs", probs), dtype=np.float64)
    if probs.ndim != 1 or probs.size < 2:
        raise ValueError("confidence needs a probability vector with at least two classes")
    top = np.partition(probs, -2)[-2:]
    return Confidence(float(top[1]), float(top[0]))


def warmup_for(n_hidden: int, floor: int = 288) -> int:
    return max(int(n_hidden), floor)


@dataclass
class AutoTuner:
    """Threshold ladder walked down after ``x`` consecutive successes.

    With ``auto=False`` the threshold stays at ``ladder[level]`` and
    :meth:`observe` only records the streak. ``on_mismatch="step"`` raises the
    threshold one rung on a wrong prediction, ``"reset"`` jumps to the top.
    """

    ladder: tuple = DEFAULT_LADDER
    x: int = 10
    auto: bool = True
    on_mismatch: str = "step"
    level: int = 0
    success_streak: int = 0
    trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        ladder = tuple(float(t) for t in self.ladder)
        if not ladder:
            raise ValueError("ladder must not be empty")
        if any(not 0.0 < t <= 1.0 for t in ladder):
            raise ValueError("ladder values must lie in (0, 1]")
        if any(a <= b for a, b in zip(ladder, ladder[1:])):
            raise ValueError("ladder must be strictly decreasing")
        if self.x < 1:
            raise ValueError("x must be at least 1")
        if self.on_mismatch not in ("step", "reset"):
            raise ValueError("on_mismatch must be 'step' or 'reset'")
        if not 0 <= self.level < len(ladder):
            raise ValueError("level outside the ladder")
        self.ladder = ladder

    @classmethod
    def fixed(cls, theta: float) -> "AutoTuner":
        return cls(ladder=(float(theta),), auto=False)

    @property
    def theta(self) -> float:
        return self.ladder[self.level]

    def gate(self, conf: Confidence, trained: int, warmup: int, drift_active: bool) -> GateDecision:
        if trained < warmup:
            return GateDecision(Action.QUERY, Reason.WARMUP_ACTIVE)
        if drift_active:
            return GateDecision(Action.QUERY, Reason.DRIFT_ACTIVE)
        if conf.margin > self.theta:
            return GateDecision(Action.SKIP_TRAINING, Reason.HIGH_CONFIDENCE)
        return GateDecision(Action.QUERY, Reason.LOW_CONFIDENCE)

    def observe(self, event: Event) -> None:
        if event is Event.QUERIED_MISMATCH:
            if self.auto:
                self.level = 0 if self.on_mismatch == "reset" else max(self.level - 1, 0)
            self.success_streak = 0
        else:
            self.success_streak += 1
            if self.success_streak >= self.x:
                if self.auto and self.level < len(self.ladder) - 1:
                    self.level += 1
                    self.success_streak = 0
                else:
                    self.success_streak = self.x
        self.trace.append(self.level)
