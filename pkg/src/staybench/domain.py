"""Core domain types shared by every pipeline stage.

Timestamps are timezone-aware datetimes pinned to a fixed UTC-08:00 offset
(no DST). Day boundaries are local midnight in that offset. All value
objects are frozen dataclasses and safe to share across workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

FIXED_OFFSET = timezone(timedelta(hours=-8))

WEEK = timedelta(weeks=1)
FOUR_WEEKS = timedelta(weeks=4)
MINUTES_PER_DAY = 1440
N_DAYS = 56

DEFAULT_TRAIN_START = datetime(2024, 1, 1, 0, 0, 0, tzinfo=FIXED_OFFSET)


class ActivityType(enum.Enum):
    TRANSPORTATION = "Transportation"
    HOME = "Home"
    WORK = "Work"
    SCHOOL = "School"
    CHILD_CARE = "ChildCare"
    BUY_GOODS = "BuyGoods"
    SERVICES = "Services"
    EAT_OUT = "EatOut"
    ERRANDS = "Errands"
    RECREATION = "Recreation"
    EXERCISE = "Exercise"
    VISIT = "Visit"
    HEALTH_CARE = "HealthCare"
    RELIGIOUS = "Religious"
    SOMETHING_ELSE = "SomethingElse"
    DROP_OFF = "DropOff"

    @classmethod
    def from_name(cls, name: str) -> "ActivityType":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown activity type: {name!r}") from None

    def __repr__(self) -> str:
        return f"ActivityType.{self.name}"


N_ACTIVITY_TYPES = len(ActivityType)
ACTIVITY_INDEX = {a: i for i, a in enumerate(ActivityType)}
ACTIVITY_BY_INDEX = list(ActivityType)


@dataclass(frozen=True)
class SimClock:
    """Two back-to-back 4-week windows: train then test.

    Window bounds are half-open [start, end); ``test_end`` at
    2024-02-26T00:00:00-08:00 is the instant after 2024-02-25T23:59:59.
    """

    train_start: datetime
    train_end: datetime
    test_start: datetime
    test_end: datetime

    def __post_init__(self) -> None:
        for name in ("train_start", "train_end", "test_start", "test_end"):
            ts = getattr(self, name)
            if ts.tzinfo is None or ts.utcoffset() != timedelta(hours=-8):
                raise ValueError(f"{name} must carry the fixed UTC-08:00 offset")
        if self.test_start != self.train_end:
            raise ValueError("test window must start exactly where train ends")
        if self.train_end - self.train_start != FOUR_WEEKS:
            raise ValueError("train window must span exactly 4 weeks")
        if self.test_end - self.test_start != FOUR_WEEKS:
            raise ValueError("test window must span exactly 4 weeks")

    @classmethod
    def from_train_start(cls, train_start: datetime) -> "SimClock":
        train_end = train_start + FOUR_WEEKS
        return cls(train_start, train_end, train_end, train_end + FOUR_WEEKS)

    @classmethod
    def default(cls) -> "SimClock":
        return cls.from_train_start(DEFAULT_TRAIN_START)

    @property
    def span(self) -> timedelta:
        return self.test_end - self.train_start

    def day_start(self, day: int) -> datetime:
        """Local midnight opening day ``day`` (1..56)."""
        if not 1 <= day <= N_DAYS:
            raise ValueError(f"day index out of range: {day}")
        return self.train_start + timedelta(days=day - 1)

    def is_weekend(self, day: int) -> bool:
        return self.day_start(day).weekday() >= 5


@dataclass(frozen=True)
class PoiRecord:
    poi_id: int
    name: str
    latitude: float
    longitude: float
    act_types: frozenset[ActivityType]

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not self.act_types:
            raise ValueError("a POI must carry at least one activity type")


@dataclass(frozen=True)
class AgentRecord:
    agent_id: int
    demographics: dict[str, object]
    home_poi: int
    work_poi: int | None = None

    @property
    def is_worker(self) -> bool:
        return bool(self.demographics.get("worker", False))

    @property
    def is_student(self) -> bool:
        return bool(self.demographics.get("student", False))


@dataclass(frozen=True)
class Staypoint:
    """A contiguous interval an agent spends at one POI.

    ``anomaly_type`` is 0 (clean), 1 (modified) or 2 (injected); the boolean
    ``anomaly`` flag is derived so the two can never disagree. Interval
    sanity is deliberately not enforced at construction so that validators
    can report degenerate intervals instead of crashing on them.
    """

    agent_id: int
    poi_id: int
    start: datetime
    end: datetime
    anomaly_type: int = 0

    def __post_init__(self) -> None:
        if self.anomaly_type not in (0, 1, 2):
            raise ValueError(f"anomaly_type must be 0, 1 or 2, got {self.anomaly_type}")

    @property
    def anomaly(self) -> bool:
        return self.anomaly_type != 0

    @property
    def duration(self) -> timedelta:
        return self.end - self.start


@dataclass(frozen=True)
class ChainEntry:
    """One scheduled activity: day 1..56, times as minutes after local midnight."""

    day: int
    activity: ActivityType
    start_min: float
    end_min: float


@dataclass(frozen=True)
class ActivityChain:
    agent_id: int
    entries: tuple[ChainEntry, ...]

    def __post_init__(self) -> None:
        prev_day = 0
        prev_end = 0.0
        for e in self.entries:
            if not 1 <= e.day <= N_DAYS:
                raise ValueError(f"day index out of range: {e.day}")
            if e.day < prev_day:
                raise ValueError("entries must be ordered by day")
            if not 0.0 <= e.start_min < e.end_min <= MINUTES_PER_DAY:
                raise ValueError(
                    f"entry times invalid on day {e.day}: {e.start_min}..{e.end_min}"
                )
            if e.day == prev_day and e.start_min < prev_end:
                raise ValueError(f"entries overlap on day {e.day}")
            prev_day, prev_end = e.day, e.end_min
        for day in sorted({e.day for e in self.entries}):
            day_entries = [e for e in self.entries if e.day == day]
            first, last = day_entries[0], day_entries[-1]
            if first.activity is not ActivityType.HOME or first.start_min != 0.0:
                raise ValueError(f"day {day} must open with a Home entry at 00:00")
            if last.activity is not ActivityType.HOME or last.end_min != MINUTES_PER_DAY:
                raise ValueError(f"day {day} must close with a Home entry at 24:00")


@dataclass(frozen=True)
class SequenceViolation:
    index: int
    kind: str  # "reversed_interval" | "overlap" | "unknown_poi"
    detail: str


def validate_staypoint_sequence(seq, catalog=None) -> list[SequenceViolation]:
    """Report-style check of one agent's staypoint sequence.

    Returns violations for reversed intervals, overlaps between consecutive
    time-sorted staypoints, and (when a catalog is given) unknown POI ids.
    An empty list means the sequence is valid.
    """
    violations: list[SequenceViolation] = []
    for i, sp in enumerate(seq):
        if sp.end <= sp.start:
            violations.append(
                SequenceViolation(i, "reversed_interval", f"{sp.start} >= {sp.end}")
            )
        if catalog is not None and sp.poi_id not in catalog:
            violations.append(
                SequenceViolation(i, "unknown_poi", f"poi_id {sp.poi_id} not in catalog")
            )
    order = sorted(range(len(seq)), key=lambda i: (seq[i].start, seq[i].end))
    for a, b in zip(order, order[1:]):
        if seq[b].start < seq[a].end:
            violations.append(
                SequenceViolation(
                    b, "overlap", f"starts {seq[b].start} before previous ends {seq[a].end}"
                )
            )
    return violations


class OutOfWindowError(ValueError):
    """A staypoint lies entirely outside the 8-week simulation window."""


def truncate_to_window(seq, clock: SimClock):
    """Split one agent's time-sorted staypoints into train and test parts.

    Staypoints overlapping ``train_start`` or ``test_end`` are clipped to the
    boundary. A staypoint spanning the train/test transition is placed in the
    train output whole, never split. Staypoints entirely outside the window
    raise :class:`OutOfWindowError`.
    """
    from dataclasses import replace

    train: list[Staypoint] = []
    test: list[Staypoint] = []
    for sp in seq:
        if sp.end <= clock.train_start or sp.start >= clock.test_end:
            raise OutOfWindowError(
                f"staypoint {sp.start}..{sp.end} lies outside the simulation window"
            )
        start, end = sp.start, sp.end
        if start < clock.train_start:
            start = clock.train_start
        if end > clock.test_end:
            end = clock.test_end
        if start != sp.start or end != sp.end:
            sp = replace(sp, start=start, end=end)
        # Anything beginning before the transition belongs to train in full.
        if sp.start < clock.test_start:
            train.append(sp)
        else:
            test.append(sp)
    return train, test
