"""Activity-type chain generation and distributional realism checks.

Chains are drawn from a time-inhomogeneous Markov process over the 16
activity types: one row-stochastic 16x16 matrix per (weekday/weekend,
half-hour slot), plus per-type log-normal dwell durations. Each simulated
day opens at Home (00:00 anchor) and closes with a Home entry reaching
24:00; gaps between consecutive activities are left for travel.

Realism is scored against reference distributions with Jensen-Shannon
divergence (base 2, so 1.0 is maximal) over five views of the chains, and
with a count-weighted row similarity of empirical vs reference transition
matrices.
"""

from __future__ import annotations

import json
import logging
import math
import warnings

import numpy as np

from .domain import (
    ACTIVITY_BY_INDEX,
    ACTIVITY_INDEX,
    MINUTES_PER_DAY,
    N_ACTIVITY_TYPES,
    N_DAYS,
    ActivityChain,
    ActivityType,
    AgentRecord,
    ChainEntry,
    SimClock,
)
from .seeds import BufferedSampler, stage_rng

logger = logging.getLogger(__name__)

N_SLOTS = 48
SLOT_MINUTES = 30

# Day-shape guards: latest leave-home, latest non-home activity end, and the
# slot after which a sampled Home transition becomes the day's final entry.
LAST_DEPARTURE_MIN = 1350   # 22:30
LAST_ACTIVITY_END_MIN = 1410  # 23:30
MAX_ENTRIES_PER_DAY = 14

HOME = ACTIVITY_INDEX[ActivityType.HOME]
WORK = ACTIVITY_INDEX[ActivityType.WORK]
SCHOOL = ACTIVITY_INDEX[ActivityType.SCHOOL]


class ActivityModelError(ValueError):
    pass


class ActivityModel:
    """Transition matrices + duration parameters driving chain generation."""

    def __init__(self, weekday: np.ndarray, weekend: np.ndarray,
                 duration_log_mu: np.ndarray, duration_log_sigma: np.ndarray,
                 gap_minutes: tuple[float, float] = (10.0, 40.0),
                 min_duration_min: float = 5.0):
        self.weekday = np.asarray(weekday, dtype=float)
        self.weekend = np.asarray(weekend, dtype=float)
        self.duration_log_mu = np.asarray(duration_log_mu, dtype=float)
        self.duration_log_sigma = np.asarray(duration_log_sigma, dtype=float)
        self.gap_minutes = (float(gap_minutes[0]), float(gap_minutes[1]))
        self.min_duration_min = float(min_duration_min)
        self._cum_cache: dict[tuple[bool, bool], tuple[np.ndarray, np.ndarray]] = {}
        self.validate()

    def validate(self) -> None:
        for name, t in (("weekday", self.weekday), ("weekend", self.weekend)):
            if t.shape != (N_SLOTS, N_ACTIVITY_TYPES, N_ACTIVITY_TYPES):
                raise ActivityModelError(f"{name} matrices must be {N_SLOTS}x16x16")
            if (t < 0).any():
                raise ActivityModelError(f"{name} matrices contain negative entries")
            if not np.allclose(t.sum(axis=2), 1.0, atol=1e-9):
                raise ActivityModelError(f"{name} matrices are not row-stochastic")
        if self.duration_log_mu.shape != (N_ACTIVITY_TYPES,):
            raise ActivityModelError("duration_log_mu must have 16 entries")
        if self.duration_log_sigma.shape != (N_ACTIVITY_TYPES,):
            raise ActivityModelError("duration_log_sigma must have 16 entries")
        if (self.duration_log_sigma < 0).any():
            raise ActivityModelError("duration sigmas must be non-negative")
        if self.min_duration_min < 5.0:
            raise ActivityModelError("minimum activity duration is 5 minutes")

    def transitions(self, weekend: bool) -> np.ndarray:
        return self.weekend if weekend else self.weekday

    def agent_matrices(self, worker: bool, student: bool) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise cumulative matrices with Work/School renormalized away
        for agents who cannot perform them."""
        key = (worker, student)
        if key not in self._cum_cache:
            blocked = []
            if not worker:
                blocked.append(WORK)
            if not student:
                blocked.append(SCHOOL)
            mats = []
            for t in (self.weekday, self.weekend):
                m = t.copy()
                if blocked:
                    m[:, :, blocked] = 0.0
                    sums = m.sum(axis=2, keepdims=True)
                    dead = sums[..., 0] <= 0
                    with np.errstate(invalid="ignore", divide="ignore"):
                        m = np.where(sums > 0, m / np.where(sums > 0, sums, 1.0), 0.0)
                    m[dead, HOME] = 1.0
                mats.append(np.cumsum(m, axis=2))
            self._cum_cache[key] = (mats[0], mats[1])
        return self._cum_cache[key]

    def renormalized(self, worker: bool = True, student: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """The (weekday, weekend) probability matrices an agent actually follows."""
        wk, we = self.agent_matrices(worker, student)
        return np.diff(wk, axis=2, prepend=0.0), np.diff(we, axis=2, prepend=0.0)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "activity-model/v1",
            "activity_order": [a.value for a in ACTIVITY_BY_INDEX],
            "weekday": self.weekday.tolist(),
            "weekend": self.weekend.tolist(),
            "duration_log_mu": self.duration_log_mu.tolist(),
            "duration_log_sigma": self.duration_log_sigma.tolist(),
            "gap_minutes": list(self.gap_minutes),
            "min_duration_min": self.min_duration_min,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "ActivityModel":
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        if d.get("format") != "activity-model/v1":
            raise ActivityModelError(f"{path}: not an activity model file")
        order = [ActivityType.from_name(n) for n in d["activity_order"]]
        if order != ACTIVITY_BY_INDEX:
            raise ActivityModelError(f"{path}: unexpected activity order")
        return cls(
            np.array(d["weekday"]), np.array(d["weekend"]),
            np.array(d["duration_log_mu"]), np.array(d["duration_log_sigma"]),
            tuple(d.get("gap_minutes", (10.0, 40.0))),
            float(d.get("min_duration_min", 5.0)),
        )

    def fingerprint(self) -> str:
        h = hash((self.weekday.tobytes(), self.weekend.tobytes(),
                  self.duration_log_mu.tobytes(), self.duration_log_sigma.tobytes(),
                  self.gap_minutes, self.min_duration_min))
        return f"{h:x}"


# ---------------------------------------------------------------------------
# Default model: authored propensity curves -> transition matrices
# ---------------------------------------------------------------------------

_SLOT_HOURS = (np.arange(N_SLOTS) + 0.5) / 2.0

# (center hour, width hours, amplitude) bumps per type and day class.
_PROPENSITY = {
    ActivityType.TRANSPORTATION: ([(9.0, 4.0, 0.015), (17.0, 4.0, 0.015)],
                                  [(12.0, 5.0, 0.02)]),
    ActivityType.WORK: ([(8.3, 1.3, 3.0), (13.2, 1.0, 0.6)], [(9.0, 2.0, 0.10)]),
    ActivityType.SCHOOL: ([(7.8, 0.9, 2.2)], [(10.0, 2.0, 0.02)]),
    ActivityType.CHILD_CARE: ([(7.8, 0.9, 0.30), (16.8, 1.0, 0.20)], [(10.0, 2.0, 0.04)]),
    ActivityType.BUY_GOODS: ([(12.5, 2.2, 0.12), (17.8, 1.6, 0.25)], [(13.5, 2.8, 0.45)]),
    ActivityType.SERVICES: ([(11.0, 2.2, 0.07)], [(12.5, 2.5, 0.06)]),
    ActivityType.EAT_OUT: ([(12.4, 0.9, 0.35), (19.0, 1.4, 0.22)],
                           [(12.8, 1.2, 0.30), (19.0, 1.6, 0.30)]),
    ActivityType.ERRANDS: ([(10.5, 2.0, 0.06), (16.5, 1.5, 0.05)], [(11.5, 2.5, 0.08)]),
    ActivityType.RECREATION: ([(18.8, 1.6, 0.12)], [(14.5, 2.8, 0.40), (19.0, 1.5, 0.15)]),
    ActivityType.EXERCISE: ([(6.9, 0.9, 0.08), (18.2, 1.3, 0.14)], [(9.5, 1.5, 0.20)]),
    ActivityType.VISIT: ([(19.0, 1.5, 0.08)], [(15.0, 2.5, 0.28), (19.5, 1.5, 0.12)]),
    ActivityType.HEALTH_CARE: ([(10.5, 1.8, 0.04)], [(11.0, 2.0, 0.01)]),
    ActivityType.RELIGIOUS: ([(18.8, 1.2, 0.02)], [(10.2, 1.1, 0.40)]),
    ActivityType.SOMETHING_ELSE: ([(14.0, 4.0, 0.025)], [(14.0, 4.0, 0.04)]),
    ActivityType.DROP_OFF: ([(7.9, 0.8, 0.35), (15.8, 0.9, 0.18)], [(11.0, 2.5, 0.05)]),
}

# Median dwell minutes and log-sigma per type.
_DURATIONS = {
    ActivityType.TRANSPORTATION: (40, 0.50),
    ActivityType.HOME: (495, 0.26),
    ActivityType.WORK: (470, 0.22),
    ActivityType.SCHOOL: (385, 0.15),
    ActivityType.CHILD_CARE: (25, 0.40),
    ActivityType.BUY_GOODS: (38, 0.50),
    ActivityType.SERVICES: (45, 0.45),
    ActivityType.EAT_OUT: (52, 0.40),
    ActivityType.ERRANDS: (28, 0.50),
    ActivityType.RECREATION: (95, 0.50),
    ActivityType.EXERCISE: (65, 0.35),
    ActivityType.VISIT: (105, 0.50),
    ActivityType.HEALTH_CARE: (55, 0.40),
    ActivityType.RELIGIOUS: (95, 0.30),
    ActivityType.SOMETHING_ELSE: (55, 0.60),
    ActivityType.DROP_OFF: (12, 0.35),
}

_HOME_FLOOR = 0.01  # residual leave-home-return-home mass


def _bump_curve(bumps) -> np.ndarray:
    w = np.zeros(N_SLOTS)
    for center, width, amp in bumps:
        w += amp * np.exp(-0.5 * ((_SLOT_HOURS - center) / width) ** 2)
    return w


def _return_home_prob(hour: np.ndarray) -> np.ndarray:
    return 0.22 + 0.76 / (1.0 + np.exp(-(hour - 17.2) / 1.6))


def _build_matrices(weekend: bool) -> np.ndarray:
    prop = np.zeros((N_SLOTS, N_ACTIVITY_TYPES))
    for t, (wd, we) in _PROPENSITY.items():
        prop[:, ACTIVITY_INDEX[t]] = _bump_curve(we if weekend else wd)
    p_home = _return_home_prob(_SLOT_HOURS)
    mats = np.zeros((N_SLOTS, N_ACTIVITY_TYPES, N_ACTIVITY_TYPES))
    for s in range(N_SLOTS):
        out = prop[s].copy()
        out[HOME] = 0.0
        out_sum = out.sum()
        # from Home: pick among out-of-home types, tiny home residual
        row = out + 0.0
        row[HOME] = _HOME_FLOOR * max(out_sum, 1e-12)
        mats[s, HOME] = row / row.sum() if row.sum() > 0 else _one_hot(HOME)
        # from each activity: return home with rising probability, else chain on
        for f in range(N_ACTIVITY_TYPES):
            if f == HOME:
                continue
            others = out.copy()
            others[f] = 0.0
            o_sum = others.sum()
            row = np.zeros(N_ACTIVITY_TYPES)
            if o_sum > 0:
                row = (1.0 - p_home[s]) * others / o_sum
                row[HOME] = p_home[s]
            else:
                row[HOME] = 1.0
            mats[s, f] = row
    return mats


def _one_hot(idx: int) -> np.ndarray:
    v = np.zeros(N_ACTIVITY_TYPES)
    v[idx] = 1.0
    return v


_DEFAULT_MODEL: ActivityModel | None = None


def default_model() -> ActivityModel:
    """The built-in commuter-flavored model (weekday work, weekend leisure)."""
    global _DEFAULT_MODEL
    if _DEFAULT_MODEL is None:
        mu = np.zeros(N_ACTIVITY_TYPES)
        sigma = np.zeros(N_ACTIVITY_TYPES)
        for t, (median, s) in _DURATIONS.items():
            mu[ACTIVITY_INDEX[t]] = math.log(median)
            sigma[ACTIVITY_INDEX[t]] = s
        _DEFAULT_MODEL = ActivityModel(_build_matrices(False), _build_matrices(True), mu, sigma)
    return _DEFAULT_MODEL


# ---------------------------------------------------------------------------
# Chain generation
# ---------------------------------------------------------------------------

def generate_chain(agent: AgentRecord, model: ActivityModel, clock: SimClock,
                   seed: int) -> ActivityChain:
    """Sample one agent's 56-day chain from the model.

    Deterministic for a fixed (seed, agent_id). Non-workers never receive
    Work entries (their transition rows are renormalized), and likewise
    School for non-students.
    """
    cum_wk, cum_we = model.agent_matrices(agent.is_worker, agent.is_student)
    rng = stage_rng(seed, "chains", agent.agent_id)
    sampler = BufferedSampler(rng)
    gap_lo, gap_hi = model.gap_minutes
    min_d = model.min_duration_min
    mu, sig = model.duration_log_mu, model.duration_log_sigma

    entries: list[ChainEntry] = []
    for day in range(1, N_DAYS + 1):
        cum = cum_we if clock.is_weekend(day) else cum_wk
        t = 0
        current = HOME
        for _ in range(MAX_ENTRIES_PER_DAY):
            d = max(min_d, round(math.exp(mu[current] + sig[current] * sampler.normal())))
            end = t + d
            if current == HOME and end >= LAST_DEPARTURE_MIN:
                entries.append(ChainEntry(day, ActivityType.HOME, float(t), float(MINUTES_PER_DAY)))
                break
            if current != HOME and end > LAST_ACTIVITY_END_MIN:
                end = LAST_ACTIVITY_END_MIN
                if end - t < min_d:
                    end = t + min_d
            entries.append(ChainEntry(day, ACTIVITY_BY_INDEX[current], float(t), float(end)))
            slot = min(int(end // SLOT_MINUTES), N_SLOTS - 1)
            nxt = int(np.searchsorted(cum[slot, current], sampler.uniform(), side="right"))
            nxt = min(nxt, N_ACTIVITY_TYPES - 1)
            gap = round(gap_lo + (gap_hi - gap_lo) * sampler.uniform())
            start = end + gap
            if nxt != HOME and start + min_d > LAST_ACTIVITY_END_MIN:
                nxt = HOME
            if nxt == HOME and start >= LAST_DEPARTURE_MIN:
                start = min(start, MINUTES_PER_DAY - 5)
                entries.append(ChainEntry(day, ActivityType.HOME, float(start),
                                          float(MINUTES_PER_DAY)))
                break
            t = start
            current = nxt
        else:
            # density cap reached: close the day at home
            tail = min(entries[-1].end_min + 5, MINUTES_PER_DAY - 5)
            entries.append(ChainEntry(day, ActivityType.HOME, float(tail),
                                      float(MINUTES_PER_DAY)))
    return ActivityChain(agent.agent_id, tuple(entries))


# ---------------------------------------------------------------------------
# Jensen-Shannon divergence and chain validation
# ---------------------------------------------------------------------------

def jsd(p, q) -> float:
    """Jensen-Shannon divergence in bits; 0 iff p == q, at most 1."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.size == 0 or q.size == 0:
        raise ValueError("histograms must be non-empty")
    if p.shape != q.shape:
        raise ValueError(f"histograms differ in shape: {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("histograms must be non-negative")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise ValueError("histograms must have positive mass")
    if not (math.isclose(sp, 1.0, abs_tol=1e-9) and math.isclose(sq, 1.0, abs_tol=1e-9)):
        warnings.warn("renormalizing histogram(s) that do not sum to 1", stacklevel=2)
    p = p / sp
    q = q / sq
    m = 0.5 * (p + q)

    def _kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return float(min(1.0, max(0.0, 0.5 * _kl(p, m) + 0.5 * _kl(q, m))))


DURATION_BIN_MIN = 30
DURATION_BINS = 48   # 30-minute bins capped at 24 h
DAILY_COUNT_BINS = 16  # 0..15+


class ChainHistograms:
    """Aggregated chain statistics: five histograms + transition counts."""

    def __init__(self):
        self.activity_freq = np.zeros(N_ACTIVITY_TYPES)
        self.start_time = np.zeros(N_SLOTS)
        self.end_time = np.zeros(N_SLOTS)
        self.daily_count = np.zeros(DAILY_COUNT_BINS)
        self.duration = np.zeros(DURATION_BINS)
        self.transition_counts = np.zeros((2, N_SLOTS, N_ACTIVITY_TYPES, N_ACTIVITY_TYPES))

    def add_chain(self, chain: ActivityChain, clock: SimClock) -> None:
        prev: ChainEntry | None = None
        per_day: dict[int, int] = {}
        for e in chain.entries:
            idx = ACTIVITY_INDEX[e.activity]
            self.activity_freq[idx] += 1
            self.start_time[min(int(e.start_min // SLOT_MINUTES), N_SLOTS - 1)] += 1
            self.end_time[min(int(e.end_min // SLOT_MINUTES), N_SLOTS - 1)] += 1
            self.duration[min(int((e.end_min - e.start_min) // DURATION_BIN_MIN),
                              DURATION_BINS - 1)] += 1
            per_day[e.day] = per_day.get(e.day, 0) + 1
            if prev is not None and prev.day == e.day:
                dc = 1 if clock.is_weekend(e.day) else 0
                slot = min(int(prev.end_min // SLOT_MINUTES), N_SLOTS - 1)
                self.transition_counts[dc, slot, ACTIVITY_INDEX[prev.activity], idx] += 1
            prev = e
        for n in per_day.values():
            self.daily_count[min(n, DAILY_COUNT_BINS - 1)] += 1

    def merge(self, other: "ChainHistograms") -> None:
        self.activity_freq += other.activity_freq
        self.start_time += other.start_time
        self.end_time += other.end_time
        self.daily_count += other.daily_count
        self.duration += other.duration
        self.transition_counts += other.transition_counts


def collect_histograms(chains, clock: SimClock) -> ChainHistograms:
    h = ChainHistograms()
    for c in chains:
        h.add_chain(c, clock)
    return h


def matrix_similarity(empirical_counts: np.ndarray, reference_probs: np.ndarray) -> float:
    """1 - count-weighted mean total-variation distance between observed and
    reference transition rows. Rows never observed carry no weight."""
    counts = empirical_counts.reshape(-1, N_ACTIVITY_TYPES)
    ref = reference_probs.reshape(-1, N_ACTIVITY_TYPES)
    n = counts.sum(axis=1)
    used = n > 0
    if not used.any():
        raise ValueError("no transitions observed")
    emp = counts[used] / n[used, None]
    tv = 0.5 * np.abs(emp - ref[used]).sum(axis=1)
    return float(1.0 - np.average(tv, weights=n[used]))


from dataclasses import dataclass


@dataclass(frozen=True)
class ChainStatsReport:
    jsd_activity_freq: float
    jsd_start_time: float
    jsd_end_time: float
    jsd_daily_count: float
    jsd_duration: float
    transition_similarity: float

    def __post_init__(self) -> None:
        for name, v in self.as_dict().items():
            if not math.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")

    def as_dict(self) -> dict[str, float]:
        return {
            "jsd_activity_freq": self.jsd_activity_freq,
            "jsd_start_time": self.jsd_start_time,
            "jsd_end_time": self.jsd_end_time,
            "jsd_daily_count": self.jsd_daily_count,
            "jsd_duration": self.jsd_duration,
            "transition_similarity": self.transition_similarity,
        }


MIN_CHAINS_FOR_VALIDATION = 100
_REFERENCE_SAMPLE_SIZE = 2000
_reference_cache: dict[str, ChainHistograms] = {}


def reference_histograms(model: ActivityModel, clock: SimClock,
                         n_chains: int = _REFERENCE_SAMPLE_SIZE) -> ChainHistograms:
    """Reference sample drawn from the model itself (cached per model)."""
    key = f"{model.fingerprint()}/{n_chains}/{clock.train_start.isoformat()}"
    if key not in _reference_cache:
        hist = ChainHistograms()
        for i in range(n_chains):
            agent = AgentRecord(i + 1, {"worker": True, "student": True}, home_poi=0)
            hist.add_chain(generate_chain(agent, model, clock, seed=_REFERENCE_SEED), clock)
        _reference_cache[key] = hist
    return _reference_cache[key]


_REFERENCE_SEED = 202_402


def validate_chains(chains, reference, clock: SimClock | None = None) -> ChainStatsReport:
    """Score a chain sample against a reference model or reference histograms.

    ``reference`` is either an :class:`ActivityModel` (reference histograms
    are sampled from it, transition rows compared against its exact
    matrices) or a pre-built :class:`ChainHistograms`.
    """
    chains = list(chains)
    if len(chains) < MIN_CHAINS_FOR_VALIDATION:
        raise ValueError(
            f"need at least {MIN_CHAINS_FOR_VALIDATION} chains, got {len(chains)}"
        )
    clock = clock or SimClock.default()
    emp = collect_histograms(chains, clock)
    if isinstance(reference, ActivityModel):
        ref_hist = reference_histograms(reference, clock)
        ref_probs = np.stack([reference.weekday, reference.weekend])
    elif isinstance(reference, ChainHistograms):
        ref_hist = reference
        n = reference.transition_counts.sum(axis=3, keepdims=True)
        ref_probs = np.where(n > 0, reference.transition_counts / np.where(n > 0, n, 1.0), 0.0)
    else:
        raise TypeError("reference must be an ActivityModel or ChainHistograms")

    def _j(a, b):
        return jsd(a / a.sum(), b / b.sum())

    return ChainStatsReport(
        jsd_activity_freq=_j(emp.activity_freq, ref_hist.activity_freq),
        jsd_start_time=_j(emp.start_time, ref_hist.start_time),
        jsd_end_time=_j(emp.end_time, ref_hist.end_time),
        jsd_daily_count=_j(emp.daily_count, ref_hist.daily_count),
        jsd_duration=_j(emp.duration, ref_hist.duration),
        transition_similarity=matrix_similarity(emp.transition_counts, ref_probs),
    )
