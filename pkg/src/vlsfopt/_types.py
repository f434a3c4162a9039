"""Shared schedule-search types, re-exported by the optimizer module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Rule(enum.Enum):
    """Stopping rule variant.

    ``P1`` uses the same threshold test at every decoding instant, including
    the last. ``P2`` replaces the final test with a forced maximum-density
    decision, so the final attempt never declines to decode.
    """

    P1 = "p1"
    P2 = "p2"


@dataclass(frozen=True)
class CodeSpec:
    """What the code must deliver: payload size, error budget, attempt count."""

    message_bits: float
    epsilon: float
    attempts: int

    def __post_init__(self) -> None:
        if not self.message_bits >= 1.0:
            raise ValueError("message_bits must be at least 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not isinstance(self.attempts, int) or self.attempts < 1:
            raise ValueError("attempts must be a positive integer")

    @property
    def codebook_size(self) -> float:
        return 2.0 ** self.message_bits


@dataclass(frozen=True)
class Schedule:
    """A decision threshold plus the strictly increasing decoding instants."""

    gamma: float
    instants: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            raise ValueError("gamma must be finite and positive")
        if len(self.instants) == 0:
            raise ValueError("a schedule needs at least one decoding instant")
        prev = 0
        for v in self.instants:
            if not isinstance(v, int) or isinstance(v, bool) or v <= prev:
                raise ValueError(
                    "instants must be strictly increasing positive integers, "
                    f"got {self.instants!r}"
                )
            prev = v
        object.__setattr__(self, "instants", tuple(self.instants))

    @property
    def final_instant(self) -> int:
        return self.instants[-1]


@dataclass(frozen=True)
class OptimizationResult:
    """Outcome of a schedule search.

    ``objective`` is the expected stopping time surrogate being minimized,
    ``rate_bits`` is ``message_bits / objective``, and
    ``constraint_residual`` is the error-budget left-hand side minus the
    budget, nonpositive up to solver tolerance for feasible results.
    """

    schedule: Schedule
    objective: float
    rate_bits: float
    constraint_residual: float
    rule: Rule
    diagnostics: dict = field(default_factory=dict)
