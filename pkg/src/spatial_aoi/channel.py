"""Free-space path loss, building shadowing, and SINR-based reception decisions.

Powers are dBm, losses dB, distances meters. The channel is deterministic:
no fading term, so identical geometry always yields identical outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RoadNetwork

SPEED_OF_LIGHT = 299792458.0

# Reception outcomes.
SUCCESS = "success"
BELOW_SENSITIVITY = "below_sensitivity"
COLLISION = "collision"


class ChannelError(ValueError):
    pass


@dataclass
class ChannelConfig:
    carrier_frequency_hz: float = 5.89e9
    tx_power_dbm: float = 13.01  # 20 mW
    path_loss_exponent: float = 2.0
    noise_floor_dbm: float = -104.0
    sensitivity_dbm: float = -92.0
    sinr_threshold_db: float = 8.0
    # Threshold at which an ongoing transmission marks the medium busy for
    # carrier sensing and CBR accounting. Less sensitive than the decoder so
    # distant transmitters do not serialize the whole scenario.
    cs_threshold_dbm: float = -81.0
    wall_attenuation_db: float = 9.0
    interior_attenuation_db_per_m: float = 0.4
    obstacle_shadowing_enabled: bool = True
    propagation_delay_s: float = 1e-6  # distance-independent

    def validate(self) -> None:
        if self.sensitivity_dbm < self.noise_floor_dbm:
            raise ChannelError("sensitivity must be at or above the noise floor")
        if self.tx_power_dbm <= self.sensitivity_dbm:
            raise ChannelError("tx power must exceed sensitivity")
        if self.path_loss_exponent < 2.0:
            raise ChannelError("path loss exponent must be >= 2")
        if self.carrier_frequency_hz <= 0:
            raise ChannelError("carrier frequency must be positive")
        if self.propagation_delay_s < 0:
            raise ChannelError("propagation delay must be >= 0")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz


@dataclass
class TransmissionEvent:
    """One frame on the air; tx_position is snapshotted at transmission start."""

    sender: int
    frame: object
    air_start: float
    air_end: float
    tx_position: tuple[float, float]

    def __post_init__(self):
        if self.air_end <= self.air_start:
            raise ChannelError("air_end must be after air_start")

    def overlaps(self, other: "TransmissionEvent") -> bool:
        return self.air_start < other.air_end and other.air_start < self.air_end


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def path_loss_db(distance, cfg: ChannelConfig):
    """Free-space loss 10*alpha*log10(4*pi*d/lambda); distances below 1 m clamp to 1 m.

    Accepts scalars or numpy arrays.
    """
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    loss = 10.0 * cfg.path_loss_exponent * np.log10(4.0 * math.pi * d / cfg.wavelength_m)
    return float(loss) if np.isscalar(distance) or np.ndim(distance) == 0 else loss


def _clip_segments_to_rects(ax: float, ay: float, px: np.ndarray, py: np.ndarray,
                            rects: np.ndarray):
    """Liang-Barsky clip of segments from (ax, ay) to each (px, py) endpoint.

    Vectorized over endpoints and rectangles at once; returns per-endpoint
    (interior_length, wall_crossings) summed over the rectangles. Axis-parallel
    segments are handled by nudging the direction by an epsilon far below any
    geometric scale, which reproduces the inside/outside slab semantics.
    """
    dx = px - ax
    dy = py - ay
    seg_len = np.hypot(dx, dy)
    dxs = np.where(np.abs(dx) < 1e-12, 1e-12, dx)[:, None]
    dys = np.where(np.abs(dy) < 1e-12, 1e-12, dy)[:, None]
    t1 = (rects[None, :, 0] - ax) / dxs
    t2 = (rects[None, :, 2] - ax) / dxs
    t3 = (rects[None, :, 1] - ay) / dys
    t4 = (rects[None, :, 3] - ay) / dys
    t_enter = np.maximum(np.minimum(t1, t2), np.minimum(t3, t4))
    t_exit = np.minimum(np.maximum(t1, t2), np.maximum(t3, t4))
    lo = np.maximum(t_enter, 0.0)
    hi = np.minimum(t_exit, 1.0)
    hit = hi > lo
    interior = np.sum(np.where(hit, hi - lo, 0.0), axis=1) * seg_len
    crossings = np.where(hit, (t_enter > 0.0).astype(np.int64) + (t_exit < 1.0).astype(np.int64), 0)
    return interior, np.sum(crossings, axis=1)


def obstacle_loss_db(a: tuple[float, float], b: tuple[float, float],
                     network: RoadNetwork, cfg: ChannelConfig) -> float:
    """Shadowing loss of the a-b segment: per-wall plus per-interior-meter terms."""
    if not cfg.obstacle_shadowing_enabled or not network.obstacles:
        return 0.0
    interior, walls = _clip_segments_to_rects(
        a[0], a[1], np.asarray([b[0]]), np.asarray([b[1]]), network.obstacle_arrays())
    return float(walls[0]) * cfg.wall_attenuation_db + float(interior[0]) * cfg.interior_attenuation_db_per_m


def obstacle_loss_db_many(a: tuple[float, float], points: np.ndarray,
                          network: RoadNetwork, cfg: ChannelConfig) -> np.ndarray:
    """Shadowing loss from one point to many endpoints, (N,) result for (N, 2) points."""
    if not cfg.obstacle_shadowing_enabled or not network.obstacles:
        return np.zeros(points.shape[0])
    interior, walls = _clip_segments_to_rects(
        a[0], a[1], points[:, 0], points[:, 1], network.obstacle_arrays())
    return walls * cfg.wall_attenuation_db + interior * cfg.interior_attenuation_db_per_m


def received_power_dbm(tx_position: tuple[float, float], rx_position: tuple[float, float],
                       network: RoadNetwork, cfg: ChannelConfig) -> float:
    """Deterministic received power: tx power minus path loss minus shadowing."""
    d = math.hypot(rx_position[0] - tx_position[0], rx_position[1] - tx_position[1])
    return cfg.tx_power_dbm - path_loss_db(d, cfg) - obstacle_loss_db(tx_position, rx_position, network, cfg)


def received_power_dbm_many(tx_position: tuple[float, float], rx_positions: np.ndarray,
                            network: RoadNetwork, cfg: ChannelConfig) -> np.ndarray:
    """Vectorized received power at many receiver positions."""
    d = np.hypot(rx_positions[:, 0] - tx_position[0], rx_positions[:, 1] - tx_position[1])
    loss = path_loss_db(d, cfg)
    return cfg.tx_power_dbm - loss - obstacle_loss_db_many(tx_position, rx_positions, network, cfg)


def decide_reception(target: TransmissionEvent, rx, overlapping: list[TransmissionEvent],
                     network: RoadNetwork, cfg: ChannelConfig) -> str:
    """Outcome of receiving ``target`` at vehicle ``rx`` given concurrent transmissions.

    below_sensitivity if the frame arrives under the decoder sensitivity;
    otherwise success iff the SINR stays at or above the threshold for the whole
    frame airtime, with every overlapping transmission contributing interference
    while it overlaps. A receiver that transmits during the frame cannot decode
    it (half-duplex).
    """
    rx_pos = (rx.x, rx.y)
    power = received_power_dbm(target.tx_position, rx_pos, network, cfg)
    if power < cfg.sensitivity_dbm:
        return BELOW_SENSITIVITY
    live = [o for o in overlapping if o is not target and o.overlaps(target)]
    if any(o.sender == rx.id for o in live):
        return COLLISION
    interferers = [o for o in live if o.sender != target.sender]
    max_interference_mw = _worst_interference_mw(target, interferers, rx_pos, network, cfg)
    noise_mw = float(dbm_to_mw(cfg.noise_floor_dbm))
    sinr_db = power - float(mw_to_dbm(noise_mw + max_interference_mw))
    return SUCCESS if sinr_db >= cfg.sinr_threshold_db else COLLISION


def _worst_interference_mw(target: TransmissionEvent, interferers: list[TransmissionEvent],
                           rx_pos: tuple[float, float], network: RoadNetwork,
                           cfg: ChannelConfig) -> float:
    if not interferers:
        return 0.0
    powers_mw = [float(dbm_to_mw(received_power_dbm(o.tx_position, rx_pos, network, cfg)))
                 for o in interferers]
    bounds = {target.air_start, target.air_end}
    for o in interferers:
        bounds.add(max(o.air_start, target.air_start))
        bounds.add(min(o.air_end, target.air_end))
    edges = sorted(bounds)
    worst = 0.0
    for t0, t1 in zip(edges[:-1], edges[1:]):
        if t1 <= t0:
            continue
        mid = 0.5 * (t0 + t1)
        total = sum(p for p, o in zip(powers_mw, interferers)
                    if o.air_start <= mid < o.air_end)
        worst = max(worst, total)
    return worst


def measure_success_prob(tx_count: int, rx_count: int) -> float:
    """Empirical per-link success probability: receptions over emissions."""
    if tx_count < 1:
        raise ChannelError("tx_count must be at least 1")
    if rx_count > tx_count:
        raise ChannelError("rx_count cannot exceed tx_count")
    if rx_count < 0:
        raise ChannelError("rx_count must be >= 0")
    return rx_count / tx_count
