"""Deterministic discrete-event kernel: scenario assembly and the run loop.

Events dispatch in (time, insertion sequence) order, so identical
(configuration, seed) pairs replay the exact same event trace. Mobility, MAC
backoff, beacon phases, and controller phases each draw from their own RNG
stream derived from the master seed, so perturbing one subsystem does not
reshuffle the draws of another.
"""

from __future__ import annotations

import heapq
import itertools
from copy import deepcopy
from typing import Iterator

import numpy as np

from . import adaptive as ad
from .aoi import record_reception
from .channel import dbm_to_mw, obstacle_loss_db_many, path_loss_db
from .config import ADAPTIVE, ConfigError, RunConfig
from .geometry import build_network, spawn_vehicles, step_mobility, VehicleState
from .mac import BeaconFrame, BroadcastMac, frame_airtime
from .metrics import MetricsStore

# Event codes; payloads are code-specific tuples.
EV_GENERATION = 0
EV_MAC_TIMER = 1
EV_TX_END = 2
EV_AIR_ARRIVE = 3
EV_AIR_DEPART = 4
EV_MOBILITY = 5
EV_CONTROLLER = 6

_PERIODIC = frozenset((EV_GENERATION, EV_MOBILITY, EV_CONTROLLER))


class _LiveTx:
    """One frame on the air plus its cached per-receiver power rows."""

    __slots__ = ("sender", "frame", "air_start", "air_end", "row_dbm", "row_mw",
                 "hearers", "tx_index")

    def __init__(self, sender, frame, air_start, air_end, row_dbm, row_mw, hearers, tx_index):
        self.sender = sender
        self.frame = frame
        self.air_start = air_start
        self.air_end = air_end
        self.row_dbm = row_dbm
        self.row_mw = row_mw
        self.hearers = hearers
        self.tx_index = tx_index


class _Simulation:
    def __init__(self, config: RunConfig):
        config.validate()
        self.cfg = config
        sc = config.scenario
        self.static = sc.is_static
        self.n = sc.vehicle_count
        self.sim_time = sc.sim_time
        self.adaptive = sc.beacon_mode == ADAPTIVE
        self.target = sc.target.target
        self.primary_weights = sc.weights[0]
        self.airtime = frame_airtime(config.mac.beacon_size, config.mac)
        self.delta = config.channel.propagation_delay_s
        self.noise_mw = float(dbm_to_mw(config.channel.noise_floor_dbm))

        master = np.random.SeedSequence(sc.seed)
        mob_ss, backoff_ss, phase_ss, ctrl_ss = master.spawn(4)
        self.rng_mobility = np.random.default_rng(mob_ss)
        self.rng_backoff = np.random.default_rng(backoff_ss)
        self.rng_phase = np.random.default_rng(phase_ss)
        self.rng_ctrl_phase = np.random.default_rng(ctrl_ss)

        self.network = build_network(sc.kind, sc.bounds, sc.block_pitch, sc.seed)
        speed = 0.0 if self.static else sc.speed
        if sc.positions is not None:
            self.vehicles = [VehicleState(i, x, y, h, speed)
                             for i, (x, y, h) in enumerate(sc.positions)]
        else:
            self.vehicles = spawn_vehicles(self.network, self.n, speed, self.rng_mobility)
        self._refresh_positions()
        self.epoch = 0

        meta = {"config": config.to_dict(), "kind": sc.kind, "rate_hz": sc.rate_hz,
                "seed": sc.seed, "vehicle_count": self.n, "beacon_mode": sc.beacon_mode,
                "alpha": self.primary_weights.alpha, "beta": self.primary_weights.beta}
        self.store = MetricsStore(self.n, sc.warmup, sc.sim_time, self.target, meta)
        self.store.record_receptions = sc.record_receptions

        self.heap: list = []
        self.seq = itertools.count()
        self.now = 0.0

        self.busy_count = [0] * self.n
        self.recent: list[_LiveTx] = []
        self._row_cache: dict[int, tuple[int, np.ndarray, np.ndarray]] = {}

        w = config.mac.cw_slots
        self.macs = [BroadcastMac(
            i, config.mac,
            draw_backoff=lambda w=w: int(self.rng_backoff.integers(0, w)),
            schedule_timer=lambda t, tok, i=i: self._push(t, EV_MAC_TIMER, (i, tok)),
            begin_tx=lambda frame, t, i=i: self._begin_tx(i, frame, t),
            medium_busy=lambda i=i: self.busy_count[i] > 0,
        ) for i in range(self.n)]

        self.tables: list[dict] = [{} for _ in range(self.n)]
        interval0 = min(max(1.0 / sc.rate_hz, config.controller.interval_min),
                        config.controller.interval_max)
        self.intervals = [interval0] * self.n
        self.last_gen = [0.0] * self.n
        self.gen_token = [0] * self.n
        self.gen_count = [0] * self.n

        phases = self.rng_phase.uniform(0.0, interval0, size=self.n)
        for i in range(self.n):
            self.last_gen[i] = float(phases[i]) - interval0
            self._push(float(phases[i]), EV_GENERATION, (i, 0))

        if self.adaptive:
            cc = config.controller
            period = ad.controller_period(self.target)
            self.ctrl_period = period
            max_age = cc.feedback_max_age_periods * period
            self.feedback_out = [ad.FeedbackState(i) for i in range(self.n)]
            self.feedback_in = [ad.FeedbackInbox(i, max_age) for i in range(self.n)]
            self.pids = []
            ctrl_phases = self.rng_ctrl_phase.uniform(0.0, period, size=self.n)
            for i in range(self.n):
                pid = ad.PidState(gain_p=cc.gain_p, gain_i=cc.gain_i, gain_d=cc.gain_d,
                                  interval=interval0, interval_min=cc.interval_min,
                                  interval_max=cc.interval_max,
                                  derivative_form=cc.derivative_form,
                                  last_exec=float(ctrl_phases[i]) - period)
                pid.validate()
                self.pids.append(pid)
                self._push(float(ctrl_phases[i]), EV_CONTROLLER, (i,))

        if not self.static:
            self._push(sc.mobility_step, EV_MOBILITY, ())

    # -- infrastructure ------------------------------------------------------

    def _push(self, t: float, code: int, payload: tuple) -> None:
        if t < self.now - 1e-9:
            raise RuntimeError("attempt to schedule an event in the past")
        heapq.heappush(self.heap, (t, next(self.seq), code, payload))

    def _refresh_positions(self) -> None:
        self.pos = np.asarray([[v.x, v.y] for v in self.vehicles])

    def _power_row(self, sender: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._row_cache.get(sender)
        if cached is not None and cached[0] == self.epoch:
            return cached[1], cached[2]
        ch = self.cfg.channel
        src = (self.pos[sender, 0], self.pos[sender, 1])
        d = np.hypot(self.pos[:, 0] - src[0], self.pos[:, 1] - src[1])
        row = ch.tx_power_dbm - path_loss_db(d, ch)
        if self.network.obstacles and ch.obstacle_shadowing_enabled:
            row = row - obstacle_loss_db_many(src, self.pos, self.network, ch)
        row[sender] = -np.inf
        row_mw = np.power(10.0, row / 10.0)
        self._row_cache[sender] = (self.epoch, row, row_mw)
        return row, row_mw

    # -- medium state ---------------------------------------------------------

    def _busy_inc(self, node: int, t: float) -> None:
        c = self.busy_count[node]
        self.busy_count[node] = c + 1
        if c == 0:
            self.store.busy[node].open(t)
            self.macs[node].on_medium_busy(t)

    def _busy_dec(self, node: int, t: float) -> None:
        c = self.busy_count[node] - 1
        self.busy_count[node] = c
        if c == 0:
            self.store.busy[node].close(t)
            self.macs[node].on_medium_idle(t)

    # -- event handlers ---------------------------------------------------------

    def _on_generation(self, t: float, node: int, token: int) -> None:
        if token != self.gen_token[node]:
            return
        records = []
        if self.adaptive:
            records = self.feedback_out[node].records_for_beacon(
                self.cfg.mac.max_feedback_records)
        v = self.vehicles[node]
        frame = BeaconFrame(sender=node, sequence=self.gen_count[node], generated_at=t,
                            sender_position=(v.x, v.y), sender_heading=v.heading,
                            feedback=records, size=self.cfg.mac.beacon_size)
        self.gen_count[node] += 1
        self.last_gen[node] = t
        self.store.generated[node] += 1
        self.macs[node].enqueue(frame, t)
        self._push(t + self.intervals[node], EV_GENERATION, (node, token))

    def _begin_tx(self, node: int, frame: BeaconFrame, t: float) -> None:
        row_dbm, row_mw = self._power_row(node)
        ch = self.cfg.channel
        hearers = np.flatnonzero(row_dbm >= ch.cs_threshold_dbm).tolist()
        tx_index = self.store.add_transmission(node, t)
        lt = _LiveTx(node, frame, t, t + self.airtime, row_dbm, row_mw, hearers, tx_index)
        self.recent.append(lt)
        self._busy_inc(node, t)
        self._push(t + self.delta, EV_AIR_ARRIVE, (lt,))
        self._push(lt.air_end, EV_TX_END, (lt,))

    def _on_air_arrive(self, t: float, lt: _LiveTx) -> None:
        inc = self._busy_inc
        for h in lt.hearers:
            inc(h, t)

    def _on_tx_end(self, t: float, lt: _LiveTx) -> None:
        self._busy_dec(lt.sender, t)
        self.macs[lt.sender].on_tx_end(t)
        self._push(t + self.delta, EV_AIR_DEPART, (lt,))

    def _on_air_depart(self, t: float, lt: _LiveTx) -> None:
        dec = self._busy_dec
        for h in lt.hearers:
            dec(h, t)
        self._decide_receptions(t, lt)
        # transmissions that ended before this frame started can never overlap again
        while self.recent and self.recent[0].air_end <= lt.air_start:
            self.recent.pop(0)

    def _decide_receptions(self, t: float, lt: _LiveTx) -> None:
        ch = self.cfg.channel
        cand = np.flatnonzero(lt.row_dbm >= ch.sensitivity_dbm)
        if cand.size == 0:
            return
        overlapping = [o for o in self.recent
                       if o is not lt and o.air_start < lt.air_end and lt.air_start < o.air_end]
        if overlapping:
            edges = {lt.air_start, lt.air_end}
            for o in overlapping:
                edges.add(max(o.air_start, lt.air_start))
                edges.add(min(o.air_end, lt.air_end))
            cuts = sorted(edges)
            worst = np.zeros(cand.size)
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi <= lo:
                    continue
                mid = 0.5 * (lo + hi)
                total = None
                for o in overlapping:
                    if o.air_start <= mid < o.air_end:
                        p = o.row_mw[cand]
                        total = p if total is None else total + p
                if total is not None:
                    worst = np.maximum(worst, total)
            sinr = lt.row_dbm[cand] - 10.0 * np.log10(self.noise_mw + worst)
            ok = sinr >= ch.sinr_threshold_db
            busy_senders = {o.sender for o in overlapping}
        else:
            ok = np.ones(cand.size, dtype=bool)
            busy_senders = set()

        store = self.store
        frame = lt.frame
        adaptive = self.adaptive
        for k in range(cand.size):
            r = int(cand[k])
            if r in busy_senders:
                store.count_reception(lt.tx_index, "collision")
                continue
            if not ok[k]:
                store.count_reception(lt.tx_index, "collision")
                continue
            store.count_reception(lt.tx_index, "success")
            store.known[r, lt.sender] = True
            rx = self.vehicles[r]
            if store.record_receptions:
                store.reception_log.append((r, lt.sender, t, frame.generated_at))
            sample = record_reception(self.tables[r], frame, t, rx,
                                      self.primary_weights, self.target)
            if adaptive:
                if frame.feedback:
                    self.feedback_in[r].ingest(frame.feedback)
                if sample is not None:
                    self.feedback_out[r].observe(sample)
            if sample is not None and store.warmup < t <= store.sim_time:
                store.add_sample(sample)

    def _on_mobility(self, t: float) -> None:
        self.vehicles = step_mobility(self.vehicles, self.network,
                                      self.cfg.scenario.mobility_step, self.rng_mobility)
        self._refresh_positions()
        self.epoch += 1
        self._push(t + self.cfg.scenario.mobility_step, EV_MOBILITY, ())

    def _on_controller(self, t: float, node: int) -> None:
        pid = self.pids[node]
        averages = self.feedback_in[node].averages(t)
        if averages is not None:
            wp, wt = averages
            error = wt - wp
            u = ad.pid_step(pid, error, t)
            ad.apply_interval(pid, u)
            if pid.interval != self.intervals[node]:
                self.intervals[node] = pid.interval
                self.gen_token[node] += 1
                next_gen = max(t, self.last_gen[node] + pid.interval)
                self._push(next_gen, EV_GENERATION, (node, self.gen_token[node]))
            self.store.controller_log.append((t, node, error, u, pid.interval))
        self.store.rate_series.append((t, node, self.intervals[node]))
        self._push(t + self.ctrl_period, EV_CONTROLLER, (node,))

    # -- main loop ---------------------------------------------------------------

    def run(self) -> MetricsStore:
        heap = self.heap
        sim_time = self.sim_time
        while heap:
            t, _seq, code, payload = heapq.heappop(heap)
            if code in _PERIODIC and t > sim_time:
                continue
            self.now = t
            if code == EV_AIR_DEPART:
                self._on_air_depart(t, payload[0])
            elif code == EV_AIR_ARRIVE:
                self._on_air_arrive(t, payload[0])
            elif code == EV_TX_END:
                self._on_tx_end(t, payload[0])
            elif code == EV_MAC_TIMER:
                node, token = payload
                self.macs[node].on_timer(t, token)
            elif code == EV_GENERATION:
                self._on_generation(t, *payload)
            elif code == EV_MOBILITY:
                self._on_mobility(t)
            else:
                self._on_controller(t, payload[0])

        for node in range(self.n):
            self.store.busy[node].flush(max(self.now, sim_time))
            self.store.replaced[node] = self.macs[node].replaced
            self.store.transmitted[node] = self.macs[node].transmitted
            self.store.pending_at_end[node] = 1 if self.macs[node].queued is not None else 0
        return self.store


def run(config: RunConfig) -> MetricsStore:
    """Simulate one scenario; identical (config, seed) yields identical stores."""
    return _Simulation(config).run()


class SweepFailure:
    """One grid cell that could not run; the sweep continues past it."""

    def __init__(self, rate_hz: float, seed: int, alpha: float, beta: float, error: str):
        self.rate_hz = rate_hz
        self.seed = seed
        self.alpha = alpha
        self.beta = beta
        self.error = error

    def __repr__(self):
        return (f"SweepFailure(rate_hz={self.rate_hz}, seed={self.seed}, "
                f"alpha={self.alpha}, beta={self.beta}, error={self.error!r})")


def sweep(base_config: RunConfig, beacon_rates: list[float],
          weight_param_sets: list, seeds: list[int]) -> Iterator:
    """Run the sweep grid lazily, yielding a store (or a SweepFailure) per cell.

    In fixed-rate mode a single pass per (rate, seed) serves every weighting
    configuration, because weighting is evaluated per sample after the fact.
    Adaptive mode couples the weighting to the channel, so the grid becomes
    (weight configuration x seed) with the initial rate taken from the base
    configuration.
    """
    if not beacon_rates or not seeds or not weight_param_sets:
        raise ConfigError("sweep lists must be nonempty")
    base_config.validate()
    if base_config.scenario.beacon_mode == ADAPTIVE:
        cells = [(base_config.scenario.rate_hz, seed, [wp])
                 for wp in weight_param_sets for seed in seeds]
    else:
        cells = [(float(rate), seed, list(weight_param_sets))
                 for rate in beacon_rates for seed in seeds]
    for rate, seed, weights in cells:
        cfg = deepcopy(base_config)
        cfg.scenario.rate_hz = rate
        cfg.scenario.seed = seed
        cfg.scenario.weights = weights
        try:
            yield run(cfg)
        except Exception as exc:
            yield SweepFailure(rate, seed, weights[0].alpha, weights[0].beta, str(exc))
