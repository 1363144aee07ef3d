"""Metric accumulation, aggregation, and CSV export.

The store keeps PAoI samples columnar (compact arrays) so full sweeps over a
few million samples stay cheap; per-sample bearing and distance are retained,
which lets any weighting configuration be evaluated after the fact.
"""

from __future__ import annotations

import bisect
import json
import os
from array import array

import numpy as np

from .aoi import POOLED, PER_LINK, PAoISample, weight_coefficient, WeightParams


class MetricsError(ValueError):
    pass


class BusyAccumulator:
    """Merged busy intervals of one vehicle, clipped to the metrics window."""

    def __init__(self, window_start: float, window_end: float):
        if window_end <= window_start:
            raise MetricsError("empty metrics window")
        self.window_start = window_start
        self.window_end = window_end
        self.starts = array("d")
        self.ends = array("d")
        self._open_start: float | None = None

    def open(self, t: float) -> None:
        if self._open_start is None:
            self._open_start = t

    def close(self, t: float) -> None:
        if self._open_start is None:
            return
        self.add(self._open_start, t)
        self._open_start = None

    def add(self, start: float, end: float) -> None:
        """Insert one interval; inserts must arrive with nondecreasing starts."""
        if end <= start:
            return
        if self.ends and start <= self.ends[-1]:
            if start < self.starts[-1] - 1e-12:
                raise MetricsError("busy intervals must be inserted in start order")
            self.ends[-1] = max(self.ends[-1], end)
        else:
            self.starts.append(start)
            self.ends.append(end)

    def flush(self, t: float) -> None:
        """Close any span still open at the end of the run."""
        if self._open_start is not None:
            self.add(self._open_start, t)
            self._open_start = None

    def busy_time(self, window: tuple[float, float] | None = None) -> float:
        w0, w1 = window if window is not None else (self.window_start, self.window_end)
        if w1 <= w0:
            raise MetricsError("zero-length window")
        lo = bisect.bisect_left(self.ends, w0)
        total = 0.0
        for i in range(lo, len(self.starts)):
            if self.starts[i] >= w1:
                break
            total += min(self.ends[i], w1) - max(self.starts[i], w0)
        return total


class ECDF:
    """Empirical CDF: evaluation at x gives the fraction of values <= x."""

    def __init__(self, values):
        vals = np.asarray(values, dtype=float)
        if vals.size == 0:
            raise MetricsError("eCDF needs at least one value")
        self.values = np.sort(vals)

    def __call__(self, x) -> float:
        return float(np.searchsorted(self.values, x, side="right")) / self.values.size

    def quantile(self, q: float) -> float:
        if not (0.0 <= q <= 1.0):
            raise MetricsError("quantile must lie in [0, 1]")
        if q == 0.0:
            return float(self.values[0])
        idx = int(np.ceil(q * self.values.size)) - 1
        return float(self.values[idx])


_SAMPLE_COLUMNS = ("receiver", "sender", "paoi", "omega", "weighted_paoi",
                   "weighted_target", "link_distance", "bearing", "recorded_at")


class MetricsStore:
    """Append-only sink for one simulation run."""

    def __init__(self, vehicle_count: int, warmup: float, sim_time: float,
                 target: float, meta: dict | None = None):
        self.vehicle_count = vehicle_count
        self.warmup = warmup
        self.sim_time = sim_time
        self.target = target
        self.meta = dict(meta or {})

        self._receiver = array("q")
        self._sender = array("q")
        self._paoi = array("d")
        self._omega = array("d")
        self._weighted_paoi = array("d")
        self._weighted_target = array("d")
        self._distance = array("d")
        self._bearing = array("d")
        self._recorded_at = array("d")

        self.busy = {v: BusyAccumulator(warmup, sim_time) for v in range(vehicle_count)}
        self.known = np.zeros((vehicle_count, vehicle_count), dtype=bool)

        self.generated = np.zeros(vehicle_count, dtype=np.int64)
        self.replaced = np.zeros(vehicle_count, dtype=np.int64)
        self.transmitted = np.zeros(vehicle_count, dtype=np.int64)
        self.pending_at_end = np.zeros(vehicle_count, dtype=np.int64)

        # One row per transmission: sender, air_start, receptions by outcome.
        self._tx_sender = array("q")
        self._tx_air_start = array("d")
        self._tx_success = array("q")
        self._tx_collision = array("q")
        self._tx_below = array("q")

        # Adaptive-mode records.
        self.rate_series: list[tuple[float, int, float]] = []  # (time, vehicle, interval)
        self.controller_log: list[tuple[float, int, float, float, float]] = []  # (t, v, e, u, interval)

        # Optional raw reception log for replay oracles (small runs only).
        self.reception_log: list[tuple[int, int, float, float]] = []
        self.record_receptions = False

    # -- appends --------------------------------------------------------

    def add_sample(self, s: PAoISample) -> None:
        self._receiver.append(s.receiver)
        self._sender.append(s.sender)
        self._paoi.append(s.paoi)
        self._omega.append(s.omega)
        self._weighted_paoi.append(s.weighted_paoi)
        self._weighted_target.append(s.weighted_target)
        self._distance.append(s.link_distance)
        self._bearing.append(s.bearing)
        self._recorded_at.append(s.recorded_at)

    def add_transmission(self, sender: int, air_start: float) -> int:
        self._tx_sender.append(sender)
        self._tx_air_start.append(air_start)
        self._tx_success.append(0)
        self._tx_collision.append(0)
        self._tx_below.append(0)
        return len(self._tx_sender) - 1

    def count_reception(self, tx_index: int, outcome: str) -> None:
        if outcome == "success":
            self._tx_success[tx_index] += 1
        elif outcome == "collision":
            self._tx_collision[tx_index] += 1
        else:
            self._tx_below[tx_index] += 1

    # -- views ------------------------------------------------------------

    @property
    def n_samples(self) -> int:
        return len(self._paoi)

    def sample_arrays(self) -> dict[str, np.ndarray]:
        return {
            "receiver": np.frombuffer(self._receiver, dtype=np.int64),
            "sender": np.frombuffer(self._sender, dtype=np.int64),
            "paoi": np.frombuffer(self._paoi, dtype=float),
            "omega": np.frombuffer(self._omega, dtype=float),
            "weighted_paoi": np.frombuffer(self._weighted_paoi, dtype=float),
            "weighted_target": np.frombuffer(self._weighted_target, dtype=float),
            "link_distance": np.frombuffer(self._distance, dtype=float),
            "bearing": np.frombuffer(self._bearing, dtype=float),
            "recorded_at": np.frombuffer(self._recorded_at, dtype=float),
        }

    def samples(self) -> list[PAoISample]:
        cols = self.sample_arrays()
        return [PAoISample(int(cols["receiver"][i]), int(cols["sender"][i]),
                           float(cols["paoi"][i]), float(cols["omega"][i]),
                           float(cols["weighted_paoi"][i]), float(cols["weighted_target"][i]),
                           float(cols["link_distance"][i]), float(cols["bearing"][i]),
                           float(cols["recorded_at"][i]))
                for i in range(self.n_samples)]

    def tx_arrays(self) -> dict[str, np.ndarray]:
        return {
            "sender": np.frombuffer(self._tx_sender, dtype=np.int64),
            "air_start": np.frombuffer(self._tx_air_start, dtype=float),
            "success": np.frombuffer(self._tx_success, dtype=np.int64),
            "collision": np.frombuffer(self._tx_collision, dtype=np.int64),
            "below_sensitivity": np.frombuffer(self._tx_below, dtype=np.int64),
        }


# -- channel / reception metrics ---------------------------------------------


def compute_cbr(store: MetricsStore, vehicle: int,
                window: tuple[float, float] | None = None) -> float:
    """Share of the window this vehicle sensed the channel busy."""
    acc = store.busy[vehicle]
    w0, w1 = window if window is not None else (acc.window_start, acc.window_end)
    if w1 <= w0:
        raise MetricsError("zero-length window")
    return acc.busy_time((w0, w1)) / (w1 - w0)


def mean_cbr(store: MetricsStore, window: tuple[float, float] | None = None) -> float:
    return float(np.mean([compute_cbr(store, v, window) for v in range(store.vehicle_count)]))


def compute_brr(store: MetricsStore, in_window_only: bool = True) -> float:
    """Successful receptions over potential ones (all other vehicles), per beacon."""
    tx = store.tx_arrays()
    mask = np.ones(tx["sender"].size, dtype=bool)
    if in_window_only:
        mask = (tx["air_start"] >= store.warmup) & (tx["air_start"] <= store.sim_time)
    n_tx = int(np.sum(mask))
    if n_tx < 1:
        raise MetricsError("no transmissions")
    total_success = int(np.sum(tx["success"][mask]))
    return total_success / (n_tx * (store.vehicle_count - 1))


def known_neighbors_ratio(store: MetricsStore, vehicle: int) -> float:
    """Distinct senders this vehicle ever decoded, over all other vehicles."""
    return float(np.sum(store.known[vehicle])) / (store.vehicle_count - 1)


def mean_known_neighbors(store: MetricsStore) -> float:
    return float(np.mean([known_neighbors_ratio(store, v)
                          for v in range(store.vehicle_count)]))


# -- PAoI aggregation over the columnar samples --------------------------------


def _omega_for(cols: dict[str, np.ndarray], params: WeightParams) -> np.ndarray:
    if params.is_identity:
        return np.ones_like(cols["paoi"])
    return weight_coefficient(cols["bearing"], cols["link_distance"], params)


def network_paoi_summary(store: MetricsStore, params: WeightParams,
                         mode: str = POOLED) -> dict[str, float]:
    """Weighted network PAoI and target for one weighting configuration.

    Works from the per-sample geometry, so any (alpha, beta) can be evaluated
    on a run that simulated a different configuration (weighting does not act
    back on the channel in fixed-rate mode).
    """
    cols = store.sample_arrays()
    if cols["paoi"].size == 0:
        raise MetricsError("no samples")
    omega = _omega_for(cols, params)
    wp = omega * cols["paoi"]
    wt = omega * store.target
    if mode == POOLED:
        paoi = float(np.mean(wp))
        target = float(np.mean(wt))
        pairs = np.unique(cols["receiver"] * store.vehicle_count + cols["sender"]).size
    elif mode == PER_LINK:
        key = cols["receiver"] * store.vehicle_count + cols["sender"]
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        boundaries = np.flatnonzero(np.diff(key_sorted)) + 1
        groups_paoi = np.split(cols["paoi"][order], boundaries)
        groups_omega = np.split(omega[order], boundaries)
        groups_time = np.split(cols["recorded_at"][order], boundaries)
        per_link_wp = []
        per_link_wt = []
        for gp, go, gt in zip(groups_paoi, groups_omega, groups_time):
            latest = int(np.argmax(gt))
            per_link_wp.append(go[latest] * float(np.mean(gp)))
            per_link_wt.append(go[latest] * store.target)
        paoi = float(np.mean(per_link_wp))
        target = float(np.mean(per_link_wt))
        pairs = len(per_link_wp)
    else:
        raise MetricsError(f"unknown aggregation mode: {mode!r}")
    return {"weighted_paoi": paoi, "weighted_target": target,
            "samples": int(cols["paoi"].size), "pairs": int(pairs)}


def below_target_ratios(store: MetricsStore, params: WeightParams) -> dict[str, float]:
    """Weighted and unweighted below-target sample ratios for one configuration."""
    cols = store.sample_arrays()
    if cols["paoi"].size == 0:
        raise MetricsError("no samples")
    omega = _omega_for(cols, params)
    weighted = float(np.mean(omega * cols["paoi"] <= omega * store.target))
    unweighted = float(np.mean(cols["paoi"] <= store.target))
    return {"weighted_ratio": weighted, "unweighted_ratio": unweighted,
            "omega_zero": int(np.sum(omega == 0.0)), "samples": int(cols["paoi"].size)}


def bin_paoi_by_distance(store: MetricsStore, bin_width: float = 10.0) -> dict[float, tuple[float, int]]:
    """Mean PAoI and count per distance bin; samples land in round(d / bin) * bin."""
    if bin_width <= 0:
        raise MetricsError("bin width must be positive")
    cols = store.sample_arrays()
    bins = np.round(cols["link_distance"] / bin_width) * bin_width
    table: dict[float, tuple[float, int]] = {}
    for b in np.unique(bins):
        mask = bins == b
        table[float(b)] = (float(np.mean(cols["paoi"][mask])), int(np.sum(mask)))
    return table


_DEVIATION_PERCENTILES = (5, 25, 50, 75, 95, 99)


def deviation_from_target(store: MetricsStore, params: WeightParams) -> dict[str, float]:
    """|weighted PAoI - weighted target| / weighted target over omega > 0 samples."""
    cols = store.sample_arrays()
    if cols["paoi"].size == 0:
        raise MetricsError("no samples")
    omega = _omega_for(cols, params)
    mask = omega > 0
    if not np.any(mask):
        raise MetricsError("deviation undefined: all coefficients are zero")
    wp = omega[mask] * cols["paoi"][mask]
    wt = omega[mask] * store.target
    dev = np.abs(wp - wt) / wt
    out = {"mean": float(np.mean(dev)), "samples": int(dev.size)}
    for p in _DEVIATION_PERCENTILES:
        out[f"p{p}"] = float(np.percentile(dev, p))
    return out


def observed_rates(store: MetricsStore) -> np.ndarray:
    """Beacon rates (1/interval) observed at controller executions after warm-up."""
    rates = [1.0 / interval for (t, _v, interval) in store.rate_series if t > store.warmup]
    if not rates:
        raise MetricsError("no beacon-rate observations after warm-up")
    return np.asarray(rates)


# -- export ---------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise MetricsError(f"cannot write {path}: {exc}") from exc


def export_samples(store: MetricsStore, path: str) -> None:
    """Raw per-sample CSV; floats are written with repr so re-import is bit-exact."""
    cols = store.sample_arrays()
    rows = []
    for i in range(store.n_samples):
        rows.append([int(cols["receiver"][i]), int(cols["sender"][i]),
                     float(cols["paoi"][i]), float(cols["omega"][i]),
                     float(cols["weighted_paoi"][i]), float(cols["weighted_target"][i]),
                     float(cols["link_distance"][i]), float(cols["bearing"][i]),
                     float(cols["recorded_at"][i])])
    _write_csv(path, list(_SAMPLE_COLUMNS), rows)


def read_samples(path: str) -> list[PAoISample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != list(_SAMPLE_COLUMNS):
            raise MetricsError(f"unexpected sample schema in {path}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            samples.append(PAoISample(
                receiver=int(parts[0]), sender=int(parts[1]), paoi=float(parts[2]),
                omega=float(parts[3]), weighted_paoi=float(parts[4]),
                weighted_target=float(parts[5]), link_distance=float(parts[6]),
                bearing=float(parts[7]), recorded_at=float(parts[8])))
    return samples


def export(stores: list[MetricsStore] | MetricsStore, out_dir: str,
           weight_sets: list[WeightParams] | None = None,
           include_samples: bool = False) -> list[str]:
    """Write the per-experiment CSV set plus a manifest; returns written paths.

    Each store labels its rows with the rate and seed recorded in its metadata.
    Aggregate CSVs carry 9 significant digits; the optional raw sample CSV
    keeps full precision for bit-exact round trips.
    """
    if isinstance(stores, MetricsStore):
        stores = [stores]
    if not stores:
        raise MetricsError("nothing to export")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise MetricsError(f"cannot create output directory {out_dir}: {exc}") from exc
    if weight_sets is None:
        weight_sets = [WeightParams(0.0, 0.0)]

    written = []

    def agg(x: float) -> str:
        return f"{x:.9g}"

    net_rows, ratio_rows, bin_rows, metric_rows = [], [], [], []
    ecdf_rows, ctrl_rows = [], []
    manifest = {}
    for idx, store in enumerate(stores):
        rate = float(store.meta.get("rate_hz", 0.0))
        seed = int(store.meta.get("seed", 0))
        manifest[f"run{idx:03d}"] = store.meta
        if store.n_samples:
            for wp in weight_sets:
                for mode in (POOLED, PER_LINK):
                    s = network_paoi_summary(store, wp, mode=mode)
                    net_rows.append([agg(rate), agg(wp.alpha), agg(wp.beta), seed, mode,
                                     s["samples"], s["pairs"], agg(s["weighted_paoi"]),
                                     agg(s["weighted_target"])])
                r = below_target_ratios(store, wp)
                ratio_rows.append([agg(rate), agg(wp.alpha), agg(wp.beta), seed,
                                   agg(r["weighted_ratio"]), agg(r["unweighted_ratio"]),
                                   r["omega_zero"], r["samples"]])
            for b, (mean_paoi, count) in sorted(bin_paoi_by_distance(store).items()):
                bin_rows.append([agg(rate), seed, agg(b), agg(mean_paoi), count])
        tx = store.tx_arrays()
        if tx["sender"].size:
            metric_rows.append([agg(rate), seed, agg(mean_cbr(store)), agg(compute_brr(store)),
                                agg(mean_known_neighbors(store))])
        if store.rate_series:
            ecdf = ECDF(observed_rates(store))
            n = ecdf.values.size
            for i, v in enumerate(ecdf.values):
                ecdf_rows.append([agg(store.meta.get("alpha", 0.0)),
                                  agg(store.meta.get("beta", 0.0)), seed,
                                  agg(float(v)), agg((i + 1) / n)])
        for (t, v, e, u, interval) in store.controller_log:
            ctrl_rows.append([agg(rate), seed, agg(t), v, agg(e), agg(u), agg(interval)])

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        if not rows:
            return
        path = os.path.join(out_dir, name)
        _write_csv(path, header, rows)
        written.append(path)

    emit("network_aoi.csv",
         ["rate_hz", "alpha", "beta", "seed", "aggregation", "samples", "pairs",
          "weighted_paoi_s", "weighted_target_s"], net_rows)
    emit("below_target_ratio.csv",
         ["rate_hz", "alpha", "beta", "seed", "weighted_ratio", "unweighted_ratio",
          "omega_zero", "samples"], ratio_rows)
    emit("paoi_by_distance.csv",
         ["rate_hz", "seed", "bin_m", "mean_paoi_s", "count"], bin_rows)
    emit("network_metrics.csv",
         ["rate_hz", "seed", "cbr", "brr", "known_neighbors"], metric_rows)
    emit("beacon_rate_ecdf.csv",
         ["alpha", "beta", "seed", "observed_rate_hz", "ecdf"], ecdf_rows)
    emit("controller_log.csv",
         ["rate_hz", "seed", "time_s", "vehicle", "error_s", "adjustment_s", "interval_s"],
         ctrl_rows)

    if include_samples:
        for idx, store in enumerate(stores):
            path = os.path.join(out_dir, f"samples_run{idx:03d}.csv")
            export_samples(store, path)
            written.append(path)

    manifest_path = os.path.join(out_dir, "run_manifest.json")
    try:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise MetricsError(f"cannot write {manifest_path}: {exc}") from exc
    written.append(manifest_path)
    return written
