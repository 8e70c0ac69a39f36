"""Domain types for quarterly consumption series.

Every type here is immutable; operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateTimestamp,
    EmptySeries,
    NegativeValue,
    NonFiniteValue,
    NonQuarterlyGap,
    ValidationError,
)

QUARTER = 3
DEFAULT_PERIOD = 4


@dataclass(frozen=True, order=True)
class Timestamp:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValidationError(f"month {self.month} outside 1..12")

    @property
    def ordinal(self) -> int:
        """Months since year 0, used for gap arithmetic."""
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> Timestamp:
        return cls(ordinal // 12, ordinal % 12 + 1)

    def shift(self, quarters: int) -> Timestamp:
        return Timestamp.from_ordinal(self.ordinal + QUARTER * quarters)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True)
class SeasonPeriod:
    s: int = DEFAULT_PERIOD

    def __post_init__(self):
        if self.s < 1:
            raise ValidationError(f"season period must be >= 1, got {self.s}")


@dataclass(frozen=True)
class MonthPattern:
    months: tuple[int, ...]

    def __str__(self) -> str:
        return "-".join(str(m) for m in self.months)


@dataclass(frozen=True)
class Series:
    """One metered consumption series; values in cubic meters.

    Construct through :func:`validate_series` so the quarterly-step
    invariants hold.
    """

    id: str
    region_id: str
    timestamps: tuple[Timestamp, ...]
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def observations(self) -> tuple[tuple[Timestamp, float], ...]:
        return tuple(zip(self.timestamps, self.values))

    @property
    def start(self) -> Timestamp:
        return self.timestamps[0]

    @property
    def end(self) -> Timestamp:
        return self.timestamps[-1]

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def slice(self, start: int, stop: int | None = None) -> Series:
        """Contiguous sub-series by position. Result must be non-empty."""
        ts = self.timestamps[start:stop]
        if not ts:
            raise EmptySeries(f"slice [{start}:{stop}] of series {self.id} is empty")
        return Series(self.id, self.region_id, ts, self.values[start:stop])

    def span(self, first: Timestamp, last: Timestamp) -> Series:
        """Sub-series restricted to timestamps in [first, last]."""
        lo = (first.ordinal - self.start.ordinal) // QUARTER
        hi = (last.ordinal - self.start.ordinal) // QUARTER + 1
        return self.slice(max(lo, 0), max(hi, 0))


@dataclass(frozen=True)
class AlignedGroup:
    region_id: str
    pattern: MonthPattern
    members: tuple[Series, ...]

    def common_span(self) -> tuple[Timestamp, Timestamp] | None:
        """Overlapping timestamp range of all members, or None if disjoint."""
        first = max(m.start for m in self.members)
        last = min(m.end for m in self.members)
        if first > last:
            return None
        return first, last


def _as_timestamp(ts) -> Timestamp:
    if isinstance(ts, Timestamp):
        return ts
    year, month = ts
    return Timestamp(int(year), int(month))


def validate_series(
    series_id: str,
    region_id: str,
    observations: Iterable[tuple[Timestamp | Sequence[int], float]],
) -> Series:
    """Build a :class:`Series` from raw ``(timestamp, value)`` pairs.

    Observations may arrive in any order; they are sorted before the
    quarter-step check.
    """
    obs = [(_as_timestamp(t), float(v)) for t, v in observations]
    if not obs:
        raise EmptySeries(f"series {series_id} has no observations")
    obs.sort(key=lambda o: o[0])
    for ts, value in obs:
        if not math.isfinite(value):
            raise NonFiniteValue(f"series {series_id} at {ts}: value {value}")
        if value < 0:
            raise NegativeValue(f"series {series_id} at {ts}: value {value}")
    for (prev, _), (cur, _) in zip(obs, obs[1:]):
        gap = cur.ordinal - prev.ordinal
        if gap == 0:
            raise DuplicateTimestamp(f"series {series_id}: {cur} appears twice")
        if gap != QUARTER:
            raise NonQuarterlyGap(
                f"series {series_id}: {prev} -> {cur} is {gap} months apart"
            )
    return Series(
        str(series_id),
        str(region_id),
        tuple(t for t, _ in obs),
        tuple(v for _, v in obs),
    )


def month_pattern(series: Series) -> MonthPattern:
    return MonthPattern(tuple(sorted({t.month for t in series.timestamps})))
