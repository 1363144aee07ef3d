"""Broadcast CSMA/CA per vehicle: AIFS sensing, uniform backoff, queue of one.

Frames are broadcast exactly once: no ACK, no retransmission, no contention
window doubling. The single-slot queue always replaces a waiting frame with a
newer one, so the frame on the air carries the freshest application data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable


class MacError(ValueError):
    pass


@dataclass
class MacConfig:
    bitrate: float = 6e6  # bits/s
    cw_slots: int = 4  # backoff drawn uniformly from {0, ..., cw_slots - 1}
    slot_time: float = 13e-6
    aifs: float = 58e-6
    preamble: float = 32e-6
    plcp: float = 8e-6
    beacon_size: int = 512  # bytes, total on-air payload
    queue_capacity: int = 1
    max_feedback_records: int = 60

    def validate(self) -> None:
        if self.queue_capacity != 1:
            raise MacError("queue capacity is fixed at 1")
        if self.cw_slots < 1:
            raise MacError("cw_slots must be >= 1")
        for name in ("bitrate", "slot_time", "aifs", "preamble", "plcp"):
            if getattr(self, name) <= 0:
                raise MacError(f"{name} must be positive")


@dataclass
class BeaconFrame:
    sender: int
    sequence: int
    generated_at: float
    sender_position: tuple[float, float]
    sender_heading: float
    feedback: list = field(default_factory=list)
    size: int = 512


def frame_airtime(size: int, cfg: MacConfig) -> float:
    """On-air duration of one frame: preamble + PLCP + payload serialization."""
    if size <= 0:
        raise MacError("frame size must be positive")
    return cfg.preamble + cfg.plcp + (8.0 * size) / cfg.bitrate


# Access procedure phases.
_IDLE = "idle"
_DEFER = "defer"
_AIFS = "aifs"
_COUNTDOWN = "countdown"


class BroadcastMac:
    """Per-node MAC state machine, driven by its host through callbacks.

    The host supplies:
      draw_backoff()          -> int in [0, cw_slots)
      schedule_timer(t, tok)  -> deliver on_timer(t, tok) at time t
      begin_tx(frame, t)      -> put the frame on the air now
      medium_busy()           -> current carrier-sense state at this node

    and feeds back on_medium_busy / on_medium_idle transitions plus on_tx_end.
    """

    def __init__(self, node_id: int, cfg: MacConfig,
                 draw_backoff: Callable[[], int],
                 schedule_timer: Callable[[float, int], None],
                 begin_tx: Callable[[BeaconFrame, float], None],
                 medium_busy: Callable[[], bool]):
        self.node_id = node_id
        self.cfg = cfg
        self._draw_backoff = draw_backoff
        self._schedule_timer = schedule_timer
        self._begin_tx = begin_tx
        self._medium_busy = medium_busy

        self.queued: BeaconFrame | None = None
        self.on_air: BeaconFrame | None = None
        self.phase = _IDLE
        self.backoff_remaining: int | None = None
        self._countdown_start = 0.0
        self._token = 0

        self.replaced = 0
        self.transmitted = 0

    # -- host-facing API ----------------------------------------------------

    def enqueue(self, frame: BeaconFrame, now: float) -> None:
        """Queue a fresh beacon, replacing any frame still waiting for the channel."""
        if self.queued is not None:
            # A waiting frame is discarded; the ongoing access procedure keeps
            # its AIFS/backoff progress and will send the newer frame instead.
            self.replaced += 1
            self.queued = frame
            return
        self.queued = frame
        if self.on_air is None and self.phase == _IDLE:
            self._start_access(now)

    def on_medium_busy(self, now: float) -> None:
        if self.phase == _AIFS:
            self._token += 1
            self.phase = _DEFER
        elif self.phase == _COUNTDOWN:
            elapsed = int((now - self._countdown_start) / self.cfg.slot_time + 1e-9)
            self.backoff_remaining = max(self.backoff_remaining - elapsed, 1)
            self._token += 1
            self.phase = _DEFER

    def on_medium_idle(self, now: float) -> None:
        if self.phase == _DEFER:
            self.phase = _AIFS
            self._token += 1
            self._schedule_timer(now + self.cfg.aifs, self._token)

    def on_timer(self, now: float, token: int) -> None:
        if token != self._token:
            return  # cancelled by a later state change
        if self.phase == _AIFS:
            if self.backoff_remaining is None:
                self.backoff_remaining = int(self._draw_backoff())
            if self.backoff_remaining == 0:
                self._transmit(now)
            else:
                self.phase = _COUNTDOWN
                self._countdown_start = now
                self._token += 1
                self._schedule_timer(now + self.backoff_remaining * self.cfg.slot_time,
                                     self._token)
        elif self.phase == _COUNTDOWN:
            self._transmit(now)

    def on_tx_end(self, now: float) -> None:
        self.on_air = None
        if self.queued is not None:
            self._start_access(now)

    # -- internals ----------------------------------------------------------

    def _start_access(self, now: float) -> None:
        if self._medium_busy():
            self.phase = _DEFER
        else:
            self.phase = _AIFS
            self._token += 1
            self._schedule_timer(now + self.cfg.aifs, self._token)

    def _transmit(self, now: float) -> None:
        frame = self.queued
        self.queued = None
        self.on_air = frame
        self.phase = _IDLE
        self.backoff_remaining = None
        self._token += 1
        self.transmitted += 1
        self._begin_tx(frame, now)
