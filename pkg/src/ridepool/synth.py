"""Synthetic networks, fleets and demand for tests and desk-scale experiments."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .netgraph import RoadGraph, write_network

BASE_LAT, BASE_LON = 49.0069, 8.4037
M_PER_DEG_LAT = 111_195.0


def grid_rows(rows: int, cols: int, spacing_m: float = 100.0, seed: int = 0,
              arterial_every: int = 5, footpath_fraction: float = 0.05, oneway_fraction: float = 0.0):
    """Vertex and edge rows for a Manhattan-style city.

    Streets are 8.33 m/s (30 km/h), every ``arterial_every``-th row/column is
    13.9 m/s.  A fraction of street segments is footpath-only (ped=1, veh=0),
    and a fraction of vehicle streets is one-way.
    """
    rng = np.random.default_rng(seed)
    m_per_deg_lon = M_PER_DEG_LAT * math.cos(math.radians(BASE_LAT))
    vertices = []
    for r in range(rows):
        for c in range(cols):
            vid = r * cols + c
            vertices.append((vid, BASE_LAT + r * spacing_m / M_PER_DEG_LAT, BASE_LON + c * spacing_m / m_per_deg_lon))
    edges = []
    eid = 0

    def speed(r1, c1, r2, c2):
        if r1 == r2 and r1 % arterial_every == 0:
            return 13.9
        if c1 == c2 and c1 % arterial_every == 0:
            return 13.9
        return 8.33

    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 >= rows or c2 >= cols:
                    continue
                a, b = r * cols + c, r2 * cols + c2
                tt = max(1, int(round(spacing_m / speed(r, c, r2, c2))))
                footpath = rng.random() < footpath_fraction
                veh = 0 if footpath else 1
                oneway = veh and rng.random() < oneway_fraction
                edges.append((eid, a, b, tt, spacing_m, veh, 1))
                eid += 1
                edges.append((eid, b, a, tt, spacing_m, 0 if oneway else veh, 1))
                eid += 1
    return vertices, edges


def write_grid_city(directory: Path | str, rows: int, cols: int, **kwargs) -> None:
    vertices, edges = grid_rows(rows, cols, **kwargs)
    write_network(directory, vertices, edges)


def grid_city(rows: int, cols: int, **kwargs) -> tuple[RoadGraph, RoadGraph]:
    vertices, edges = grid_rows(rows, cols, **kwargs)
    return graphs_from_rows(vertices, edges)


def graphs_from_rows(vertices, edges) -> tuple[RoadGraph, RoadGraph]:
    ids = [v[0] for v in vertices]
    lat = np.array([v[1] for v in vertices], dtype=float)
    lon = np.array([v[2] for v in vertices], dtype=float)
    vindex = {vid: i for i, vid in enumerate(ids)}
    veh = [e for e in edges if e[5]]
    road = RoadGraph("vehicle", ids, lat, lon, [e[0] for e in veh], [vindex[e[1]] for e in veh],
                     [vindex[e[2]] for e in veh], [int(e[3]) for e in veh])
    ped_rows = [e for e in edges if e[6]]
    veh_pos = {e[0]: i for i, e in enumerate(veh)}
    ped = RoadGraph("pedestrian", ids, lat, lon, [e[0] for e in ped_rows], [vindex[e[1]] for e in ped_rows],
                    [vindex[e[2]] for e in ped_rows], [float(e[4]) for e in ped_rows],
                    veh_edge=[veh_pos[e[0]] if e[5] else -1 for e in ped_rows])
    return road, ped


def random_graph(n: int, seed: int, degree: int = 3, max_weight: int = 100, kind: str = "geometric") -> RoadGraph:
    """Random directed graph with integer weights.

    ``geometric``: each vertex links to its ``degree`` nearest neighbours
    (road-like, weight grows with distance); ``uniform``: each vertex gets
    ``degree`` out-edges to uniformly random vertices.  Some edges are
    one-way, some parallel edges and self-loops are sprinkled in.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    tails, heads, weights = [], [], []
    if kind == "geometric":
        from scipy.spatial import cKDTree

        tree = cKDTree(pts)
        k = min(degree + 1, n)
        _, nbrs = tree.query(pts, k=k)
        nbrs = np.atleast_2d(nbrs)
        for u in range(n):
            for v in nbrs[u][1:]:
                v = int(v)
                base = float(np.hypot(*(pts[u] - pts[v]))) * max_weight * math.sqrt(n) / 2
                w = int(base * rng.uniform(0.8, 1.5)) + int(rng.integers(0, 3))
                tails.append(u); heads.append(v); weights.append(w)
                if rng.random() < 0.8:
                    tails.append(v); heads.append(u); weights.append(int(base * rng.uniform(0.8, 1.5)))
    else:
        for u in range(n):
            for v in rng.integers(0, n, size=degree):
                tails.append(u); heads.append(int(v)); weights.append(int(rng.integers(0, max_weight + 1)))
    # parallel edges and self-loops
    for _ in range(max(1, n // 50)):
        i = int(rng.integers(0, len(tails))) if tails else 0
        if tails:
            tails.append(tails[i]); heads.append(heads[i]); weights.append(weights[i] + int(rng.integers(0, 5)))
        u = int(rng.integers(0, n))
        tails.append(u); heads.append(u); weights.append(int(rng.integers(0, 10)))
    lat = BASE_LAT + pts[:, 1] * 0.05
    lon = BASE_LON + pts[:, 0] * 0.05
    return RoadGraph("vehicle", list(range(n)), lat, lon, list(range(len(tails))), tails, heads, weights)


def random_fleet(road: RoadGraph, n: int, seed: int, capacity: int = 4, t_serv: tuple[int, int] = (0, 86_400)):
    from .fleet import Vehicle

    rng = np.random.default_rng(seed)
    edges = rng.integers(0, road.num_edges, size=n)
    return [Vehicle(i, int(e), capacity, t_serv[0], t_serv[1]) for i, e in enumerate(edges)]


def demand_rows(road: RoadGraph, n: int, seed: int, start: int = 0, end: int = 3600, coarse: int = 0,
                car_prob: float = 0.7, walk_radius: float | None = None) -> list[dict]:
    """Request rows with uniform origins/destinations and a single-peaked departure profile.

    ``coarse`` > 0 rounds departure times to multiples of ``coarse`` seconds,
    imitating survey data.  Category is ``center`` or ``outer`` by origin.
    """
    rng = np.random.default_rng(seed)
    mid, spread = (start + end) / 2, (end - start) / 4
    times = np.clip(np.round(rng.normal(mid, spread, size=n)), start, end - 1).astype(np.int64)
    if coarse:
        times = np.clip((times + coarse // 2) // coarse * coarse, start, end - 1)
    times.sort()
    lat0, lon0 = float(np.mean(road.lat)), float(np.mean(road.lon))
    span = max(float(np.ptp(road.lat)), float(np.ptp(road.lon)), 1e-9)
    rows = []
    for i, t in enumerate(times):
        o, d = (int(x) for x in rng.integers(0, road.num_edges, size=2))
        v = road.head[o]
        central = max(abs(road.lat[v] - lat0), abs(road.lon[v] - lon0)) < span / 4
        rows.append({
            "id": str(i), "origin_edge": str(road.edge_ids[o]), "dest_edge": str(road.edge_ids[d]),
            "t_req_s": str(int(t)), "walk_speed_mps": "1.25",
            "max_walk_m": "" if walk_radius is None else f"{walk_radius:g}",
            "car_prob": f"{car_prob:g}", "category": "center" if central else "outer",
        })
    return rows


def write_instance(directory: Path | str, rows: int = 20, cols: int = 20, vehicles: int = 20,
                   requests: int = 300, seed: int = 0, start: int = 0, end: int = 3600,
                   coarse: int = 0, extra_config: dict | None = None) -> Path:
    """Network, fleet, demand and a config file; returns the config path."""
    from .config import write_vehicles
    from .demand import write_request_rows

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_grid_city(directory / "network", rows, cols, seed=seed)
    road, _ = graphs_from_rows(*grid_rows(rows, cols, seed=seed))
    write_vehicles(directory / "vehicles.csv", random_fleet(road, vehicles, seed + 1, t_serv=(start, end + 3600)),
                   road)
    write_request_rows(directory / "requests.csv", demand_rows(road, requests, seed + 2, start, end, coarse))
    cfg = {"seed": seed, "network_dir": "network", "vehicles": "vehicles.csv", "requests": "requests.csv",
           "out_dir": "out", "observation_start_s": start, "observation_end_s": end}
    cfg.update(extra_config or {})
    lines = []
    for k, v in cfg.items():
        key = f'"{k}"' if "." in k else k
        if isinstance(v, bool):
            val = "true" if v else "false"
        elif isinstance(v, (int, float)):
            val = repr(v)
        else:
            val = f'"{v}"'
        lines.append(f"{key} = {val}")
    path = directory / "config.toml"
    path.write_text("\n".join(lines) + "\n")
    return path


def random_requests(road: RoadGraph, n: int, seed: int, horizon: int = 3600, max_walk: float = 0.0,
                    car_prob: float = 0.7, start: int = 0):
    """Uniform origins, destinations and departure times as ``Request`` objects."""
    from .dispatch import Request

    rng = np.random.default_rng(seed)
    times = np.sort(rng.integers(start, start + horizon, size=n))
    ends = rng.integers(0, road.num_edges, size=(n, 2))
    return [Request(i, int(o), int(d), int(t), max_walk, 1.25, car_prob) for i, (t, (o, d)) in enumerate(zip(times, ends))]
