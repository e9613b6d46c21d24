"""World construction: POI catalog, road graph, and the agent population.

The catalog is a seeded synthetic stand-in for a curated place inventory:
POIs are scattered around a handful of Gaussian urban centers, with per-type
counts defaulting to the proportions of a large metro inventory. Residences
double as Visit and DropOff locations, so the Home and Visit pools are
identical and the DropOff pool is a superset of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ActivityType, AgentRecord, PoiRecord
from .geo import haversine_km
from .seeds import stage_rng

# Large-metro POI inventory sizes used as default per-type proportions.
REFERENCE_POI_COUNTS: dict[ActivityType, int] = {
    ActivityType.TRANSPORTATION: 449,
    ActivityType.HOME: 2_509_756,
    ActivityType.WORK: 409_920,
    ActivityType.SCHOOL: 10_904,
    ActivityType.CHILD_CARE: 33_821,
    ActivityType.BUY_GOODS: 108_496,
    ActivityType.SERVICES: 17_028,
    ActivityType.EAT_OUT: 165_442,
    ActivityType.ERRANDS: 4_414,
    ActivityType.RECREATION: 17_685,
    ActivityType.EXERCISE: 30_520,
    ActivityType.VISIT: 2_509_756,
    ActivityType.HEALTH_CARE: 3_100,
    ActivityType.RELIGIOUS: 7_255,
    ActivityType.SOMETHING_ELSE: 2_054,
    ActivityType.DROP_OFF: 2_838_192,
}


class WorldConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float = 33.75
    lat_max: float = 34.28
    lon_min: float = -118.55
    lon_max: float = -117.95

    def __post_init__(self) -> None:
        if self.lat_min >= self.lat_max or self.lon_min >= self.lon_max:
            raise WorldConfigError("bounding box must have positive extent")


@dataclass(frozen=True)
class GridConfig:
    rows: int = 20
    cols: int = 20
    spacing_m: float = 3000.0
    speed_mps: float = 13.9


@dataclass(frozen=True)
class PopulationConfig:
    n_agents: int = 1000
    worker_fraction: float = 0.6
    max_occupancy: int = 4
    commute_median_minutes: float = 30.0
    commute_sigma: float = 0.35
    work_candidates: int = 24


@dataclass(frozen=True)
class WorldConfig:
    bbox: BoundingBox = field(default_factory=BoundingBox)
    n_residences: int = 1500
    poi_counts: dict[ActivityType, int] | None = None
    n_centers: int = 5
    center_sigma_km: float = 6.0
    residential_sigma_scale: float = 1.8
    grid: GridConfig = field(default_factory=GridConfig)
    population: PopulationConfig = field(default_factory=PopulationConfig)

    def resolved_poi_counts(self) -> dict[ActivityType, int]:
        if self.poi_counts is not None:
            counts = dict(self.poi_counts)
        else:
            f = self.n_residences / REFERENCE_POI_COUNTS[ActivityType.HOME]
            counts = {t: max(1, round(REFERENCE_POI_COUNTS[t] * f)) for t in ActivityType}
            counts[ActivityType.HOME] = self.n_residences
        counts[ActivityType.VISIT] = counts[ActivityType.HOME]
        counts[ActivityType.DROP_OFF] = max(counts[ActivityType.DROP_OFF], counts[ActivityType.HOME])
        for t, n in counts.items():
            if n <= 0:
                raise WorldConfigError(f"POI count for {t.value} must be positive, got {n}")
        return counts


class PoiCatalog:
    """Indexed POI collection with per-type pools and a lat/lon grid index."""

    def __init__(self, pois: list[PoiRecord], index_cell_deg: float = 0.02):
        if not pois:
            raise WorldConfigError("catalog must contain at least one POI")
        self.pois: dict[int, PoiRecord] = {}
        for p in pois:
            if p.poi_id in self.pois:
                raise WorldConfigError(f"duplicate poi_id {p.poi_id}")
            self.pois[p.poi_id] = p
        self.by_activity: dict[ActivityType, np.ndarray] = {}
        type_ids: dict[ActivityType, list[int]] = {t: [] for t in ActivityType}
        for p in pois:
            for t in p.act_types:
                type_ids[t].append(p.poi_id)
        for t, ids in type_ids.items():
            self.by_activity[t] = np.array(sorted(ids), dtype=np.int64)
        self._lat = {p.poi_id: p.latitude for p in pois}
        self._lon = {p.poi_id: p.longitude for p in pois}
        self._type_lat = {
            t: np.array([self._lat[i] for i in ids]) for t, ids in self.by_activity.items()
        }
        self._type_lon = {
            t: np.array([self._lon[i] for i in ids]) for t, ids in self.by_activity.items()
        }
        self._cell_deg = index_cell_deg
        self._grid: dict[tuple[int, int], list[int]] = {}
        for p in pois:
            key = (int(math.floor(p.latitude / index_cell_deg)),
                   int(math.floor(p.longitude / index_cell_deg)))
            self._grid.setdefault(key, []).append(p.poi_id)

    def __contains__(self, poi_id: int) -> bool:
        return poi_id in self.pois

    def __len__(self) -> int:
        return len(self.pois)

    def coords(self, poi_id: int) -> tuple[float, float]:
        return self._lat[poi_id], self._lon[poi_id]

    def type_pool(self, t: ActivityType) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ids, lats, lons) arrays for one activity type, id-sorted."""
        return self.by_activity[t], self._type_lat[t], self._type_lon[t]

    def radius_query(self, lat: float, lon: float, radius_km: float) -> list[int]:
        """POI ids within ``radius_km`` of (lat, lon)."""
        dlat = radius_km / 111.32
        dlon = radius_km / (111.32 * max(0.05, math.cos(math.radians(lat))))
        out: list[int] = []
        for gy in range(int(math.floor((lat - dlat) / self._cell_deg)),
                        int(math.floor((lat + dlat) / self._cell_deg)) + 1):
            for gx in range(int(math.floor((lon - dlon) / self._cell_deg)),
                            int(math.floor((lon + dlon) / self._cell_deg)) + 1):
                for poi_id in self._grid.get((gy, gx), ()):
                    if haversine_km(lat, lon, self._lat[poi_id], self._lon[poi_id]) <= radius_km:
                        out.append(poi_id)
        return sorted(out)

    def validate(self) -> None:
        for t in ActivityType:
            ids = self.by_activity[t]
            if ids.size == 0:
                raise WorldConfigError(f"no POIs carry activity type {t.value}")
            for poi_id in ids:
                if t not in self.pois[int(poi_id)].act_types:
                    raise WorldConfigError(
                        f"poi {poi_id} indexed under {t.value} but does not carry it"
                    )


def _sample_positions(rng: np.random.Generator, n: int, bbox: BoundingBox,
                      centers: np.ndarray, sigma_km: float) -> np.ndarray:
    """Clustered positions: Gaussian around urban centers, clipped to the box."""
    out = np.empty((n, 2))
    filled = 0
    sigma_lat = sigma_km / 111.32
    sigma_lon = sigma_km / (111.32 * math.cos(math.radians((bbox.lat_min + bbox.lat_max) / 2)))
    while filled < n:
        m = (n - filled) * 2 + 8
        which = rng.integers(0, centers.shape[0], size=m)
        lat = centers[which, 0] + rng.normal(0.0, sigma_lat, size=m)
        lon = centers[which, 1] + rng.normal(0.0, sigma_lon, size=m)
        ok = ((lat >= bbox.lat_min) & (lat <= bbox.lat_max)
              & (lon >= bbox.lon_min) & (lon <= bbox.lon_max))
        take = min(int(ok.sum()), n - filled)
        out[filled:filled + take, 0] = lat[ok][:take]
        out[filled:filled + take, 1] = lon[ok][:take]
        filled += take
    return out


def generate_poi_catalog(config: WorldConfig, seed: int) -> PoiCatalog:
    """Build the seeded synthetic POI universe.

    Residences carry {Home, Visit, DropOff}; every other type gets its own
    singleton pool, plus standalone DropOff POIs so the DropOff pool reaches
    its configured size.
    """
    counts = config.resolved_poi_counts()
    rng = stage_rng(seed, "world")
    bbox = config.bbox
    lat_span = bbox.lat_max - bbox.lat_min
    lon_span = bbox.lon_max - bbox.lon_min
    centers = np.column_stack([
        bbox.lat_min + lat_span * (0.2 + 0.6 * rng.random(config.n_centers)),
        bbox.lon_min + lon_span * (0.2 + 0.6 * rng.random(config.n_centers)),
    ])

    pois: list[PoiRecord] = []
    next_id = 1

    n_res = counts[ActivityType.HOME]
    res_positions = _sample_positions(
        rng, n_res, bbox, centers, config.center_sigma_km * config.residential_sigma_scale
    )
    residential_types = frozenset(
        {ActivityType.HOME, ActivityType.VISIT, ActivityType.DROP_OFF}
    )
    for k in range(n_res):
        pois.append(PoiRecord(next_id, "", float(res_positions[k, 0]),
                              float(res_positions[k, 1]), residential_types))
        next_id += 1

    n_dropoff_extra = counts[ActivityType.DROP_OFF] - n_res
    plain_types = [t for t in ActivityType
                   if t not in (ActivityType.HOME, ActivityType.VISIT, ActivityType.DROP_OFF)]
    for t in plain_types + ([ActivityType.DROP_OFF] if n_dropoff_extra > 0 else []):
        n = n_dropoff_extra if t is ActivityType.DROP_OFF else counts[t]
        positions = _sample_positions(rng, n, bbox, centers, config.center_sigma_km)
        for k in range(n):
            pois.append(PoiRecord(next_id, f"{t.value} {k + 1}",
                                  float(positions[k, 0]), float(positions[k, 1]),
                                  frozenset({t})))
            next_id += 1

    catalog = PoiCatalog(pois)
    catalog.validate()
    return catalog


# ---------------------------------------------------------------------------
# Road graph
# ---------------------------------------------------------------------------

class RoadGraphError(ValueError):
    pass


class RoadGraph:
    """Directed road network: nodes with coordinates, edges with free-flow times."""

    def __init__(self, nodes: dict[int, tuple[float, float]],
                 edges: list[tuple[int, int, float, float]],
                 keep_largest_component: bool = True):
        for (u, v, length_m, speed) in edges:
            if length_m <= 0:
                raise RoadGraphError(f"edge {u}->{v} has non-positive length {length_m}")
            if speed <= 0:
                raise RoadGraphError(f"edge {u}->{v} has non-positive speed {speed}")
            if u not in nodes or v not in nodes:
                raise RoadGraphError(f"edge {u}->{v} references unknown node")
        if keep_largest_component:
            nodes, edges = _largest_weak_component(nodes, edges)
        if not nodes:
            raise RoadGraphError("road graph has no nodes")
        self.nodes = nodes
        self.edges = edges
        self.adjacency: dict[int, list[tuple[int, float]]] = {u: [] for u in nodes}
        for (u, v, length_m, speed) in edges:
            self.adjacency[u].append((v, length_m / speed))
        self._node_ids = np.array(sorted(nodes), dtype=np.int64)
        self._node_lat = np.array([nodes[i][0] for i in self._node_ids])
        self._node_lon = np.array([nodes[i][1] for i in self._node_ids])

    def nearest_node(self, lat: float, lon: float) -> int:
        d = haversine_km(lat, lon, self._node_lat, self._node_lon)
        return int(self._node_ids[int(np.argmin(d))])

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def _largest_weak_component(nodes, edges):
    if not nodes:
        return nodes, edges
    parent = {u: u for u in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    linked = set()
    for (u, v, _, _) in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
        linked.add(u)
        linked.add(v)
    comps: dict[int, list[int]] = {}
    for u in nodes:
        if u not in linked:
            continue  # isolated nodes are dropped
        comps.setdefault(find(u), []).append(u)
    if not comps:
        raise RoadGraphError("road graph has no connected edges")
    keep = set(max(comps.values(), key=len))
    nodes2 = {u: nodes[u] for u in keep}
    edges2 = [e for e in edges if e[0] in keep and e[1] in keep]
    return nodes2, edges2


ROAD_GRAPH_COLUMNS = ["u", "v", "lat_u", "lon_u", "lat_v", "lon_v", "length_m", "speed_mps"]


def load_road_graph(path) -> RoadGraph:
    """Read a directed edge list (CSV with the documented 8-column header)."""
    nodes: dict[int, tuple[float, float]] = {}
    edges: list[tuple[int, int, float, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if [c.strip() for c in header.split(",")] != ROAD_GRAPH_COLUMNS:
            raise RoadGraphError(
                f"bad header: expected {','.join(ROAD_GRAPH_COLUMNS)}, got {header!r}"
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 8:
                raise RoadGraphError(f"line {lineno}: expected 8 fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
                lat_u, lon_u, lat_v, lon_v = map(float, parts[2:6])
                length_m, speed = float(parts[6]), float(parts[7])
            except ValueError as exc:
                raise RoadGraphError(f"line {lineno}: {exc}") from None
            if length_m <= 0:
                raise RoadGraphError(f"line {lineno}: non-positive length {length_m}")
            if speed <= 0:
                raise RoadGraphError(f"line {lineno}: non-positive speed {speed}")
            nodes.setdefault(u, (lat_u, lon_u))
            nodes.setdefault(v, (lat_v, lon_v))
            edges.append((u, v, length_m, speed))
    if not edges:
        raise RoadGraphError(f"{path}: no edges")
    return RoadGraph(nodes, edges)


def generate_grid_graph(config: WorldConfig) -> RoadGraph:
    """Synthetic rectangular grid over the bounding box, bidirectional edges."""
    grid = config.grid
    bbox = config.bbox
    if grid.rows < 2 or grid.cols < 2:
        raise RoadGraphError("grid must be at least 2x2")
    lat_mid = (bbox.lat_min + bbox.lat_max) / 2
    dlat = grid.spacing_m / 111_320.0
    dlon = grid.spacing_m / (111_320.0 * math.cos(math.radians(lat_mid)))
    nodes: dict[int, tuple[float, float]] = {}
    for r in range(grid.rows):
        for c in range(grid.cols):
            nodes[r * grid.cols + c] = (bbox.lat_min + r * dlat, bbox.lon_min + c * dlon)
    edges: list[tuple[int, int, float, float]] = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            u = r * grid.cols + c
            if c + 1 < grid.cols:
                v = u + 1
                edges.append((u, v, grid.spacing_m, grid.speed_mps))
                edges.append((v, u, grid.spacing_m, grid.speed_mps))
            if r + 1 < grid.rows:
                v = u + grid.cols
                edges.append((u, v, grid.spacing_m, grid.speed_mps))
                edges.append((v, u, grid.spacing_m, grid.speed_mps))
    return RoadGraph(nodes, edges)


# ---------------------------------------------------------------------------
# Population
# ---------------------------------------------------------------------------

AGE_BANDS = ["0-17", "18-34", "35-54", "55-74", "75+"]
AGE_MARGINALS = [0.21, 0.26, 0.27, 0.19, 0.07]
HOUSEHOLD_SIZES = [1, 2, 3, 4, 5, 6]
HOUSEHOLD_MARGINALS = [0.27, 0.33, 0.16, 0.14, 0.07, 0.03]
STUDENT_RATE_BY_AGE = {"0-17": 0.95, "18-34": 0.18, "35-54": 0.03, "55-74": 0.01, "75+": 0.005}


class PopulationError(ValueError):
    pass


def generate_population(n_agents: int, catalog: PoiCatalog, seed: int,
                        config: PopulationConfig | None = None,
                        travel_time=None) -> list[AgentRecord]:
    """Sample agents with anchored home (and, for workers, work) POIs.

    Workers draw a personal commute-time target around the configured median
    and take the candidate work POI whose home->work travel time is closest.
    ``travel_time(origin_latlon, dest_latlon) -> seconds`` defaults to a
    straight-line estimate when no network oracle is supplied.
    """
    config = config or PopulationConfig()
    if n_agents < 1:
        raise PopulationError("n_agents must be >= 1")
    residences = catalog.by_activity[ActivityType.HOME]
    work_ids, work_lat, work_lon = catalog.type_pool(ActivityType.WORK)
    if residences.size == 0 or work_ids.size == 0:
        raise PopulationError("catalog must provide Home and Work POIs")
    if n_agents > residences.size * config.max_occupancy:
        raise PopulationError(
            f"{n_agents} agents exceed capacity "
            f"{residences.size} residences x occupancy {config.max_occupancy}"
        )

    if travel_time is None:
        def travel_time(o, d):  # straight-line fallback with grid circuity
            return haversine_km(o[0], o[1], d[0], d[1]) * 1000.0 / (0.75 * 13.9) + 120.0

    # One global draw assigns agents to residence slots (respects occupancy);
    # everything else streams from per-agent RNGs, order-independent.
    pop_rng = stage_rng(seed, "population")
    slots = np.repeat(residences, config.max_occupancy)
    homes = slots[pop_rng.permutation(slots.size)[:n_agents]]

    agents: list[AgentRecord] = []
    mu = math.log(config.commute_median_minutes * 60.0)
    for agent_id in range(1, n_agents + 1):
        rng = stage_rng(seed, "population", agent_id)
        home_poi = int(homes[agent_id - 1])
        age_band = AGE_BANDS[rng.choice(len(AGE_BANDS), p=AGE_MARGINALS)]
        demographics = {
            "age_band": age_band,
            "household_size": int(HOUSEHOLD_SIZES[rng.choice(len(HOUSEHOLD_SIZES),
                                                             p=HOUSEHOLD_MARGINALS)]),
            "worker": bool(rng.random() < config.worker_fraction),
            "student": bool(rng.random() < STUDENT_RATE_BY_AGE[age_band]),
        }
        work_poi = None
        if demographics["worker"]:
            target_s = math.exp(mu + config.commute_sigma * rng.standard_normal())
            k = min(config.work_candidates, work_ids.size)
            cand = rng.choice(work_ids.size, size=k, replace=False)
            home_ll = catalog.coords(home_poi)
            times = np.array([
                travel_time(home_ll, (work_lat[j], work_lon[j])) for j in cand
            ])
            work_poi = int(work_ids[cand[int(np.argmin(np.abs(times - target_s)))]])
        agents.append(AgentRecord(agent_id, demographics, home_poi, work_poi))
    return agents
