"""Road grid construction, vehicle spawning and mobility, inter-vehicle geometry.

Distances are meters, angles radians, time seconds throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Clearance kept free of buildings on each side of a road center line.
ROAD_HALF_WIDTH = 5.0

SCENARIO_KINDS = ("freespace", "freespace_static", "manhattan", "manhattan_static")


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class RoadNetwork:
    """Axis-aligned road grid (or an open square when there are no roads)."""

    kind: str  # "freespace" or "manhattan"
    width: float
    height: float
    vertical_xs: tuple[float, ...] = ()
    horizontal_ys: tuple[float, ...] = ()
    obstacles: tuple[tuple[float, float, float, float], ...] = ()  # (xmin, ymin, xmax, ymax)
    block_pitch: float = 0.0

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.width, self.height)

    @property
    def road_segments(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        """Center lines as ((x0, y0), (x1, y1)) pairs."""
        segs = []
        if self.vertical_xs:
            y0, y1 = self.horizontal_ys[0], self.horizontal_ys[-1]
            for x in self.vertical_xs:
                segs.append(((x, y0), (x, y1)))
            x0, x1 = self.vertical_xs[0], self.vertical_xs[-1]
            for y in self.horizontal_ys:
                segs.append(((x0, y), (x1, y)))
        return segs

    @property
    def intersections(self) -> list[tuple[float, float]]:
        return [(x, y) for x in self.vertical_xs for y in self.horizontal_ys]

    def obstacle_arrays(self) -> np.ndarray:
        """Obstacle rectangles as an (M, 4) float array, empty-safe."""
        if not self.obstacles:
            return np.zeros((0, 4))
        return np.asarray(self.obstacles, dtype=float)


@dataclass
class VehicleState:
    id: int
    x: float
    y: float
    heading: float  # radians in [-pi, pi)
    speed: float  # m/s, 0 in static scenarios
    route: list[tuple[float, float]] = field(default_factory=list)

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class RelativeGeometry:
    distance: float  # meters, >= 0
    bearing: float  # radians in [0, pi], 0 = directly ahead of the receiver


def build_network(scenario_kind: str, bounds: tuple[float, float] = (550.0, 550.0),
                  block_pitch: float = 50.0, seed: int = 0) -> RoadNetwork:
    """Build the scenario geometry for one of the four scenario kinds.

    Manhattan kinds lay parallel road center lines every ``block_pitch`` meters
    (inset half a pitch from the boundary) and fill the cells between them with
    building rectangles. Free-space kinds return an empty square.
    """
    if scenario_kind not in SCENARIO_KINDS:
        raise GeometryError(f"unknown scenario kind: {scenario_kind!r}")
    width, height = float(bounds[0]), float(bounds[1])
    if width <= 0 or height <= 0:
        raise GeometryError("bounds must be positive")
    if scenario_kind.startswith("freespace"):
        return RoadNetwork(kind="freespace", width=width, height=height)

    pitch = float(block_pitch)
    if pitch <= 0:
        raise GeometryError("block_pitch must be positive for manhattan scenarios")
    if pitch >= min(width, height):
        raise GeometryError("block_pitch must be smaller than the scenario bounds")

    # Lines at pitch/2, pitch/2 + pitch, ...: a 550 m side at 50 m pitch gives 11 lines.
    xs = tuple(np.arange(pitch / 2.0, width, pitch))
    ys = tuple(np.arange(pitch / 2.0, height, pitch))
    hw = ROAD_HALF_WIDTH
    obstacles = []
    for i in range(len(xs) - 1):
        x0, x1 = xs[i] + hw, xs[i + 1] - hw
        if x1 <= x0:
            continue
        for j in range(len(ys) - 1):
            y0, y1 = ys[j] + hw, ys[j + 1] - hw
            if y1 > y0:
                obstacles.append((x0, y0, x1, y1))
    return RoadNetwork(kind="manhattan", width=width, height=height,
                       vertical_xs=xs, horizontal_ys=ys,
                       obstacles=tuple(obstacles), block_pitch=pitch)


def _heading_to(x0: float, y0: float, x1: float, y1: float) -> float:
    return math.atan2(y1 - y0, x1 - x0)


def _draw_freespace_waypoint(net: RoadNetwork, rng: np.random.Generator) -> tuple[float, float]:
    return (float(rng.uniform(0.0, net.width)), float(rng.uniform(0.0, net.height)))


def _draw_grid_waypoint(net: RoadNetwork, x: float, y: float,
                        rng: np.random.Generator) -> tuple[float, float]:
    """Next intersection adjacent to the intersection at (x, y), drawn uniformly."""
    xs, ys = net.vertical_xs, net.horizontal_ys
    xi = int(np.argmin(np.abs(np.asarray(xs) - x)))
    yi = int(np.argmin(np.abs(np.asarray(ys) - y)))
    options = []
    if xi > 0:
        options.append((xs[xi - 1], ys[yi]))
    if xi < len(xs) - 1:
        options.append((xs[xi + 1], ys[yi]))
    if yi > 0:
        options.append((xs[xi], ys[yi - 1]))
    if yi < len(ys) - 1:
        options.append((xs[xi], ys[yi + 1]))
    return options[int(rng.integers(0, len(options)))]


def spawn_vehicles(network: RoadNetwork, count: int, speed: float,
                   rng: np.random.Generator) -> list[VehicleState]:
    """Spawn vehicles at random positions (on road segments in manhattan mode)."""
    vehicles = []
    if network.kind == "freespace":
        for i in range(count):
            x, y = _draw_freespace_waypoint(network, rng)
            heading = float(rng.uniform(-math.pi, math.pi))
            v = VehicleState(i, x, y, heading, speed)
            if speed > 0:
                v.route = [_draw_freespace_waypoint(network, rng)]
                v.heading = _heading_to(v.x, v.y, *v.route[0])
            vehicles.append(v)
        return vehicles

    xs, ys = network.vertical_xs, network.horizontal_ys
    lo_x, hi_x = xs[0], xs[-1]
    lo_y, hi_y = ys[0], ys[-1]
    for i in range(count):
        if rng.integers(0, 2) == 0:  # on a horizontal road
            y = ys[int(rng.integers(0, len(ys)))]
            x = float(rng.uniform(lo_x, hi_x))
            forward = rng.integers(0, 2) == 0
            heading = 0.0 if forward else math.pi
            j = int(np.searchsorted(xs, x))
            target = (xs[min(j, len(xs) - 1)], y) if forward else (xs[max(j - 1, 0)], y)
        else:  # on a vertical road
            x = xs[int(rng.integers(0, len(xs)))]
            y = float(rng.uniform(lo_y, hi_y))
            forward = rng.integers(0, 2) == 0
            heading = math.pi / 2.0 if forward else -math.pi / 2.0
            j = int(np.searchsorted(ys, y))
            target = (x, ys[min(j, len(ys) - 1)]) if forward else (x, ys[max(j - 1, 0)])
        v = VehicleState(i, x, y, heading, speed)
        if speed > 0:
            v.route = [target]
        vehicles.append(v)
    return vehicles


def step_mobility(vehicles: list[VehicleState], network: RoadNetwork, dt: float,
                  rng: np.random.Generator) -> list[VehicleState]:
    """Advance every vehicle speed*dt along its route, drawing new waypoints as needed.

    Static vehicles (speed 0) are returned unchanged. Waypoints are drawn from
    the scenario RNG stream: adjacent intersections in manhattan mode, uniform
    points in free-space mode.
    """
    if dt <= 0:
        raise GeometryError("dt must be positive")
    out = []
    for v in vehicles:
        if v.speed <= 0:
            out.append(v)
            continue
        x, y, heading = v.x, v.y, v.heading
        route = list(v.route)
        remaining = v.speed * dt
        while remaining > 1e-12:
            if not route:
                if network.kind == "freespace":
                    route.append(_draw_freespace_waypoint(network, rng))
                else:
                    route.append(_draw_grid_waypoint(network, x, y, rng))
            tx, ty = route[0]
            dist = math.hypot(tx - x, ty - y)
            if dist <= 1e-9:
                route.pop(0)
                continue
            heading = _heading_to(x, y, tx, ty)
            if remaining >= dist:
                x, y = tx, ty
                remaining -= dist
                route.pop(0)
            else:
                x += remaining * math.cos(heading)
                y += remaining * math.sin(heading)
                if network.kind == "manhattan":
                    # keep the off-axis coordinate exact to stay on the lane
                    if abs(tx - v.x) < abs(ty - v.y):
                        x = tx
                    else:
                        y = ty
                remaining = 0.0
        out.append(VehicleState(v.id, x, y, heading, v.speed, route))
    return out


def relative_geometry(i: VehicleState, j: VehicleState) -> RelativeGeometry:
    """Distance and unsigned bearing of transmitter j as seen from receiver i."""
    if i.id == j.id:
        raise GeometryError("relative geometry requires two distinct vehicles")
    return RelativeGeometry(*distance_bearing(i.x, i.y, i.heading, j.x, j.y))


def distance_bearing(rx_x: float, rx_y: float, rx_heading: float,
                     tx_x: float, tx_y: float) -> tuple[float, float]:
    """Scalar fast path used on every reception: (distance, bearing in [0, pi])."""
    dx = tx_x - rx_x
    dy = tx_y - rx_y
    dist = math.hypot(dx, dy)
    if dist <= 0.0:
        return 0.0, 0.0
    cosb = (math.cos(rx_heading) * dx + math.sin(rx_heading) * dy) / dist
    cosb = max(-1.0, min(1.0, cosb))
    return dist, math.acos(cosb)
