"""Spatially weighted peak age-of-information for vehicular beaconing.

A deterministic discrete-event simulator of broadcast CSMA/CA beaconing with
a free-space/obstacle channel, plus the weighting model, freshness targets,
two-hop feedback rate adaptation, and sweep/export tooling around it.
"""

from .aoi import (
    PAoISample,
    TargetConfig,
    WeightParams,
    analytic_paoi,
    below_target_ratio,
    meets_target,
    record_reception,
    weight_coefficient,
    weighted_neighbor_avg,
    weighted_network_avg,
    weighted_target_avg,
)
from .channel import ChannelConfig, TransmissionEvent, decide_reception, measure_success_prob
from .config import RunConfig, ScenarioConfig, load_config
from .engine import run, sweep
from .geometry import RoadNetwork, VehicleState, build_network, relative_geometry, step_mobility
from .mac import BeaconFrame, MacConfig, frame_airtime
from .metrics import ECDF, MetricsStore, compute_brr, compute_cbr, export, known_neighbors_ratio

__version__ = "0.1.0"

__all__ = [
    "BeaconFrame", "ChannelConfig", "ECDF", "MacConfig", "MetricsStore", "PAoISample",
    "RoadNetwork", "RunConfig", "ScenarioConfig", "TargetConfig", "TransmissionEvent",
    "VehicleState", "WeightParams", "analytic_paoi", "below_target_ratio", "build_network",
    "compute_brr", "compute_cbr", "decide_reception", "export", "frame_airtime",
    "known_neighbors_ratio", "load_config", "measure_success_prob", "meets_target",
    "record_reception", "relative_geometry", "run", "step_mobility", "sweep",
    "weight_coefficient", "weighted_neighbor_avg", "weighted_network_avg",
    "weighted_target_avg",
]
