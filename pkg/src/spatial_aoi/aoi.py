"""Peak age-of-information tracking and its spatial weighting.

A link's age grows linearly between successful beacon receptions (sawtooth);
the peak value reached just before each update is one PAoI sample. Samples are
weighted by a relevance coefficient in [0, 1] built from the receiver-relative
bearing and distance of the transmitter:

    w(theta, d) = 0.5 * (1 + cos(alpha * theta)) * exp(-beta * d)

(alpha, beta) = (0, 0) is the identity configuration where every weighted
quantity equals its standard counterpart. The same coefficient scales the
freshness target, so the per-link verdict "fresh enough" is unchanged by
weighting; aggregates differ because links are emphasized unevenly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geometry import VehicleState, distance_bearing
from .mac import BeaconFrame

# Aggregation modes for multi-link averages. "per_link" averages each link's
# mean first and then across links; "pooled" averages raw samples so links
# contribute proportionally to how often they deliver.
PER_LINK = "per_link"
POOLED = "pooled"


class AoiError(ValueError):
    pass


@dataclass(frozen=True)
class WeightParams:
    alpha: float = 0.0  # scales the bearing inside the raised cosine
    beta: float = 0.0  # 1/m distance decay rate

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise AoiError("weight parameters must be >= 0")

    @property
    def is_identity(self) -> bool:
        return self.alpha == 0.0 and self.beta == 0.0


@dataclass(frozen=True)
class TargetConfig:
    target: float = 0.1  # seconds

    def __post_init__(self):
        if self.target <= 0:
            raise AoiError("target must be positive")


@dataclass
class NeighborEntry:
    neighbor: int
    last_generated_at: float
    last_received_at: float
    last_position: tuple[float, float]
    last_heading: float
    sample_count: int = 0


@dataclass(frozen=True)
class PAoISample:
    receiver: int
    sender: int
    paoi: float
    omega: float
    weighted_paoi: float
    weighted_target: float
    link_distance: float
    bearing: float
    recorded_at: float


def weight_coefficient(theta, distance, params: WeightParams):
    """Relevance coefficient for bearing theta in [0, pi] and distance >= 0.

    Accepts scalars or arrays; the result is always within [0, 1].
    """
    t = np.asarray(theta, dtype=float)
    d = np.asarray(distance, dtype=float)
    if np.any(t < -1e-12) or np.any(t > math.pi + 1e-9):
        raise AoiError("bearing must lie in [0, pi]")
    if np.any(d < 0):
        raise AoiError("distance must be >= 0")
    w = 0.5 * (1.0 + np.cos(params.alpha * t)) * np.exp(-params.beta * d)
    w = np.clip(w, 0.0, 1.0)
    return float(w) if np.ndim(theta) == 0 and np.ndim(distance) == 0 else w


def record_reception(table: dict[int, NeighborEntry], frame: BeaconFrame, rx_time: float,
                     rx_state: VehicleState, params: WeightParams,
                     target: float) -> PAoISample | None:
    """Update the receiver's neighbor table for a decoded beacon.

    Emits a PAoI sample only from the second beacon of a sender onward: the
    sample is the link age immediately before this update, i.e. the reception
    time minus the generation time of the previously received beacon. The
    weighting uses the receiver's current pose and the sender position carried
    inside the packet.
    """
    if rx_time < frame.generated_at:
        raise AoiError("reception before generation violates causality")
    entry = table.get(frame.sender)
    sample = None
    if entry is not None:
        paoi = rx_time - entry.last_generated_at
        dist, theta = distance_bearing(rx_state.x, rx_state.y, rx_state.heading,
                                       frame.sender_position[0], frame.sender_position[1])
        omega = 0.5 * (1.0 + math.cos(params.alpha * theta)) * math.exp(-params.beta * dist)
        omega = min(max(omega, 0.0), 1.0)
        sample = PAoISample(
            receiver=rx_state.id, sender=frame.sender, paoi=paoi, omega=omega,
            weighted_paoi=omega * paoi, weighted_target=omega * target,
            link_distance=dist, bearing=theta, recorded_at=rx_time,
        )
        entry.last_generated_at = frame.generated_at
        entry.last_received_at = rx_time
        entry.last_position = frame.sender_position
        entry.last_heading = frame.sender_heading
        entry.sample_count += 1
    else:
        table[frame.sender] = NeighborEntry(
            neighbor=frame.sender, last_generated_at=frame.generated_at,
            last_received_at=rx_time, last_position=frame.sender_position,
            last_heading=frame.sender_heading, sample_count=0,
        )
    return sample


def _group_by_link(samples: Iterable[PAoISample]) -> dict[tuple[int, int], list[PAoISample]]:
    links: dict[tuple[int, int], list[PAoISample]] = {}
    for s in samples:
        links.setdefault((s.receiver, s.sender), []).append(s)
    return links


def weighted_neighbor_avg(samples: Iterable[PAoISample], mode: str = PER_LINK) -> float:
    """Combined weighted PAoI at one receiver across its sampled neighbors.

    In per_link mode each neighbor contributes its mean PAoI scaled by its
    latest coefficient; in pooled mode every sample contributes once.
    """
    samples = list(samples)
    if len({s.receiver for s in samples}) > 1:
        raise AoiError("neighbor average expects samples of a single receiver")
    return _weighted_avg(samples, attr="weighted_paoi", mode=mode)


def weighted_network_avg(samples: Iterable[PAoISample], mode: str = PER_LINK) -> float:
    """Weighted PAoI across every ordered link that produced samples."""
    return _weighted_avg(samples, attr="weighted_paoi", mode=mode)


def weighted_target_avg(samples: Iterable[PAoISample], scope: str = "network",
                        mode: str = PER_LINK) -> float:
    """Average weighted target over the same links/samples as the PAoI averages."""
    if scope not in ("neighbor", "network"):
        raise AoiError("scope must be 'neighbor' or 'network'")
    return _weighted_avg(samples, attr="weighted_target", mode=mode)


def _weighted_avg(samples: Iterable[PAoISample], attr: str, mode: str) -> float:
    samples = list(samples)
    if not samples:
        raise AoiError("no samples to average")
    if mode == POOLED:
        return sum(getattr(s, attr) for s in samples) / len(samples)
    if mode != PER_LINK:
        raise AoiError(f"unknown aggregation mode: {mode!r}")
    links = _group_by_link(samples)
    total = 0.0
    for link_samples in links.values():
        latest = max(link_samples, key=lambda s: s.recorded_at)
        if attr == "weighted_paoi":
            mean_paoi = sum(s.paoi for s in link_samples) / len(link_samples)
            total += latest.omega * mean_paoi
        else:
            total += latest.weighted_target
    return total / len(links)


def meets_target(weighted_paoi: float, weighted_target: float) -> bool:
    """Freshness verdict: weighted age at or below the weighted requirement."""
    return weighted_paoi <= weighted_target


def below_target_ratio(samples: Iterable[PAoISample], weighted: bool,
                       target: float | None = None) -> float:
    """Fraction of samples meeting the (weighted or static) target.

    With weighting, a zero-coefficient sample compares 0 <= 0 and counts as
    meeting the target. The unweighted variant needs the static target; when
    not given it is recovered from any sample with a positive coefficient.
    """
    samples = list(samples)
    if not samples:
        raise AoiError("no samples")
    if weighted:
        hits = sum(1 for s in samples if s.weighted_paoi <= s.weighted_target)
        return hits / len(samples)
    if target is None:
        carrier = next((s for s in samples if s.omega > 0), None)
        if carrier is None:
            raise AoiError("cannot recover the static target from all-zero coefficients")
        target = carrier.weighted_target / carrier.omega
    hits = sum(1 for s in samples if s.paoi <= target)
    return hits / len(samples)


def analytic_paoi(mean_interarrival: float, mean_system_time: float, p_sd: float) -> float:
    """Expected PAoI of a link with delivery probability p_sd.

    Failed deliveries stretch the inter-update gap geometrically, so the mean
    peak age is the beacon interarrival divided by p_sd plus the mean time a
    delivered update spends in the system.
    """
    if not (0.0 < p_sd <= 1.0):
        raise AoiError("p_sd must lie in (0, 1]")
    if mean_interarrival < 0 or mean_system_time < 0:
        raise AoiError("means must be >= 0")
    return mean_interarrival / p_sd + mean_system_time
