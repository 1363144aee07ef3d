"""Two-hop freshness feedback and the PID beacon-interval controller.

Receivers measure the weighted PAoI of a sender's beacons and report it back
inside their own beacons. The sender averages the live reports, compares the
result to the averaged weighted target, and nudges its beacon interval with a
proportional-derivative controller so the perceived freshness converges to the
requirement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .aoi import PAoISample

# The discrete derivative is taken as (previous_error - error) / dt, the form
# that produced the reference behavior; "conventional" flips the sign.
DERIVATIVE_AS_WRITTEN = "as_written"
DERIVATIVE_CONVENTIONAL = "conventional"


class AdaptiveError(ValueError):
    pass


@dataclass(frozen=True)
class FeedbackRecord:
    subject: int  # whose beacons were measured
    reporter: int
    weighted_paoi: float
    weighted_target: float
    reported_at: float

    def __post_init__(self):
        if self.subject == self.reporter:
            raise AdaptiveError("a vehicle does not report about itself")
        if self.weighted_paoi < 0 or self.weighted_target < 0:
            raise AdaptiveError("feedback values must be >= 0")


class FeedbackState:
    """Per-reporter running means of weighted PAoI and target, one per subject."""

    def __init__(self, reporter: int):
        self.reporter = reporter
        self._per_subject: dict[int, list] = {}  # subject -> [sum_wp, sum_wt, n, updated_at]

    def observe(self, sample: PAoISample) -> FeedbackRecord:
        """Fold one sample into the running mean and stage the updated record."""
        if sample.receiver != self.reporter:
            raise AdaptiveError("sample does not belong to this reporter")
        acc = self._per_subject.setdefault(sample.sender, [0.0, 0.0, 0, 0.0])
        acc[0] += sample.weighted_paoi
        acc[1] += sample.weighted_target
        acc[2] += 1
        acc[3] = sample.recorded_at
        return self._record_for(sample.sender)

    def _record_for(self, subject: int) -> FeedbackRecord:
        wp_sum, wt_sum, n, updated = self._per_subject[subject]
        return FeedbackRecord(subject=subject, reporter=self.reporter,
                              weighted_paoi=wp_sum / n, weighted_target=wt_sum / n,
                              reported_at=updated)

    def records_for_beacon(self, limit: int) -> list[FeedbackRecord]:
        """Newest record per subject; when over the payload limit the subjects
        with the oldest updates are truncated first."""
        subjects = sorted(self._per_subject, key=lambda s: self._per_subject[s][3],
                          reverse=True)[:limit]
        return [self._record_for(s) for s in sorted(subjects)]


def make_feedback(state: FeedbackState, sample: PAoISample) -> FeedbackRecord:
    return state.observe(sample)


class FeedbackInbox:
    """Reports other vehicles made about this vehicle, newest per reporter."""

    def __init__(self, subject: int, max_age: float):
        self.subject = subject
        self.max_age = max_age  # two controller periods by default
        self._by_reporter: dict[int, FeedbackRecord] = {}

    def ingest(self, records: list[FeedbackRecord]) -> None:
        for rec in records:
            if rec.subject != self.subject:
                continue
            held = self._by_reporter.get(rec.reporter)
            if held is None or rec.reported_at >= held.reported_at:
                self._by_reporter[rec.reporter] = rec

    def averages(self, now: float) -> tuple[float, float] | None:
        """(mean weighted PAoI, mean weighted target) over live reporters.

        Records older than max_age are evicted here; returns None when no live
        reporter remains, which makes the controller skip the cycle.
        """
        stale = [r for r, rec in self._by_reporter.items()
                 if now - rec.reported_at > self.max_age]
        for r in stale:
            del self._by_reporter[r]
        if not self._by_reporter:
            return None
        records = self._by_reporter.values()
        n = len(self._by_reporter)
        return (sum(r.weighted_paoi for r in records) / n,
                sum(r.weighted_target for r in records) / n)


@dataclass
class PidState:
    gain_p: float = 1.0
    gain_i: float = 0.0  # integral part disabled by default
    gain_d: float = 0.1
    prev_error: float = 0.0
    integral: float = 0.0
    last_exec: float = 0.0
    interval: float = 0.1  # current beacon interval, seconds
    interval_min: float = 0.010
    interval_max: float = 100.0
    derivative_form: str = DERIVATIVE_AS_WRITTEN

    def validate(self) -> None:
        if not (0 < self.interval_min < self.interval_max):
            raise AdaptiveError("interval bounds must satisfy 0 < min < max")
        if not (self.interval_min <= self.interval <= self.interval_max):
            raise AdaptiveError("interval outside its bounds")
        if self.derivative_form not in (DERIVATIVE_AS_WRITTEN, DERIVATIVE_CONVENTIONAL):
            raise AdaptiveError(f"unknown derivative form: {self.derivative_form!r}")


def pid_step(state: PidState, error: float, now: float) -> float:
    """One controller execution; returns the interval adjustment u.

    u = Gp * e + Gi * integral + Gd * d(e); the derivative uses only the error
    of the previous execution. State advances afterwards.
    """
    dt = now - state.last_exec
    if dt <= 0:
        raise AdaptiveError("controller executions must advance in time")
    if state.derivative_form == DERIVATIVE_AS_WRITTEN:
        derivative = (state.prev_error - error) / dt
    else:
        derivative = (error - state.prev_error) / dt
    u = state.gain_p * error + state.gain_i * state.integral + state.gain_d * derivative
    state.prev_error = error
    state.last_exec = now
    state.integral += error * dt
    return u


def apply_interval(state: PidState, u: float) -> PidState:
    """Add the adjustment to the beacon interval, clamped to the valid range."""
    state.interval = min(max(state.interval + u, state.interval_min), state.interval_max)
    return state


def controller_period(target: float) -> float:
    """Controller cadence: twice the target age."""
    if target <= 0:
        raise AdaptiveError("target must be positive")
    return 2.0 * target


def controller_schedule(target: float, phase: float, horizon: float) -> list[float]:
    """Execution times phase, phase + 2T, ... up to the horizon."""
    period = controller_period(target)
    if not (0.0 <= phase < period):
        raise AdaptiveError("phase must lie in [0, 2T)")
    count = max(int(math.floor((horizon - phase) / period)) + 1, 0)
    return [phase + k * period for k in range(count)]
