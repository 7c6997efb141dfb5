"""Road and pedestrian networks, plain Dijkstra, and coordinate mapping.

Vertices and edges are stored under dense integer indices (file order); the
original ids are kept in ``vertex_ids`` / ``edge_ids`` for I/O.  A *location*
is an edge index: a vehicle serving a location always traverses the whole
edge, so "being at" edge ``e`` means standing at ``head[e]``.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

INF = 2**31 - 1  # reserved "unreachable" label

EARTH_RADIUS_M = 6_371_000.0


class GraphFormatError(ValueError):
    """Raised for malformed graph files; carries the offending line number."""

    def __init__(self, message: str, path: Path | str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


def _parse_id(raw: str):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        return raw


@dataclass
class RoadGraph:
    """Directed graph with non-negative integer (vehicle) or real (pedestrian) weights.

    ``kind`` is ``"vehicle"`` (weight = travel time, s) or ``"pedestrian"``
    (weight = length, m).  For pedestrian graphs ``veh_edge[e]`` is the index
    of the corresponding vehicle edge, or -1.
    """

    kind: str
    vertex_ids: list
    lat: np.ndarray
    lon: np.ndarray
    edge_ids: list
    tail: list[int]
    head: list[int]
    weight: list
    veh_edge: list[int] | None = None
    out_adj: list[list[tuple]] = field(default_factory=list, repr=False)
    in_adj: list[list[tuple]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        n = len(self.vertex_ids)
        if not self.out_adj:
            self.out_adj = [[] for _ in range(n)]
            self.in_adj = [[] for _ in range(n)]
            for e, (u, v, w) in enumerate(zip(self.tail, self.head, self.weight)):
                if not (0 <= u < n and 0 <= v < n):
                    raise GraphFormatError(f"edge {self.edge_ids[e]!r} has dangling endpoint")
                if w < 0:
                    raise GraphFormatError(f"edge {self.edge_ids[e]!r} has negative weight {w}")
                if u == v:
                    continue  # self-loops never shorten a path
                self.out_adj[u].append((v, w, e))
                self.in_adj[v].append((u, w, e))
        self.vertex_index = {vid: i for i, vid in enumerate(self.vertex_ids)}
        self.edge_index = {eid: i for i, eid in enumerate(self.edge_ids)}

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_ids)

    @property
    def num_edges(self) -> int:
        return len(self.edge_ids)

    def summary(self) -> str:
        return f"{self.kind} graph: |V|={self.num_vertices}, |E|={self.num_edges}"

    def path_weight(self, edges: Iterable[int]):
        return sum(self.weight[e] for e in edges)


# PedestrianGraph shares the RoadGraph layout; the alias keeps call sites readable.
PedestrianGraph = RoadGraph


def _read_vertices(path: Path):
    ids, lat, lon = [], [], []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "lat", "lon"]:
            raise GraphFormatError("expected header 'id,lat,lon'", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 3:
                raise GraphFormatError("expected 3 columns", path, lineno)
            vid = _parse_id(row[0])
            if vid in seen:
                raise GraphFormatError(f"duplicate vertex id {vid!r}", path, lineno)
            seen.add(vid)
            try:
                lat.append(float(row[1]))
                lon.append(float(row[2]))
            except ValueError:
                raise GraphFormatError("non-numeric coordinate", path, lineno) from None
            ids.append(vid)
    return ids, lat, lon


EDGE_HEADER = ["id", "tail", "head", "travel_time_s", "length_m", "veh", "ped"]


def _read_edges(path: Path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EDGE_HEADER:
            raise GraphFormatError("expected header '" + ",".join(EDGE_HEADER) + "'", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 7:
                raise GraphFormatError("expected 7 columns", path, lineno)
            try:
                tt = float(row[3])
                length = float(row[4])
                veh = int(row[5])
                ped = int(row[6])
            except ValueError:
                raise GraphFormatError("non-numeric field", path, lineno) from None
            if veh not in (0, 1) or ped not in (0, 1):
                raise GraphFormatError("veh/ped flags must be 0 or 1", path, lineno)
            rows.append((lineno, _parse_id(row[0]), _parse_id(row[1]), _parse_id(row[2]), tt, length, veh, ped))
    return rows


def load_network(directory: Path | str) -> tuple[RoadGraph, RoadGraph]:
    """Load both networks from ``vertices.csv`` / ``edges.csv`` in *directory*."""
    directory = Path(directory)
    vfile, efile = directory / "vertices.csv", directory / "edges.csv"
    for f in (vfile, efile):
        if not f.exists():
            raise FileNotFoundError(f"missing graph file: {f}")
    ids, lat, lon = _read_vertices(vfile)
    vindex = {vid: i for i, vid in enumerate(ids)}
    rows = _read_edges(efile)

    veh_ids, veh_t, veh_h, veh_w = [], [], [], []
    ped_ids, ped_t, ped_h, ped_w, ped_x = [], [], [], [], []
    seen_edges = set()
    for lineno, eid, t, h, tt, length, veh, ped in rows:
        if eid in seen_edges:
            raise GraphFormatError(f"duplicate edge id {eid!r}", efile, lineno)
        seen_edges.add(eid)
        for end in (t, h):
            if end not in vindex:
                raise GraphFormatError(f"dangling vertex reference {end!r}", efile, lineno)
        if veh:
            if tt < 0:
                raise GraphFormatError(f"negative travel time {tt}", efile, lineno)
            veh_ids.append(eid)
            veh_t.append(vindex[t])
            veh_h.append(vindex[h])
            veh_w.append(int(round(tt)))
        if ped:
            if length < 0:
                raise GraphFormatError(f"negative length {length}", efile, lineno)
            ped_ids.append(eid)
            ped_t.append(vindex[t])
            ped_h.append(vindex[h])
            ped_w.append(length)
            ped_x.append(len(veh_ids) - 1 if veh else -1)

    lat_a, lon_a = np.asarray(lat, dtype=float), np.asarray(lon, dtype=float)
    road = RoadGraph("vehicle", ids, lat_a, lon_a, veh_ids, veh_t, veh_h, veh_w)
    ped_graph = RoadGraph("pedestrian", ids, lat_a, lon_a, ped_ids, ped_t, ped_h, ped_w, veh_edge=ped_x)
    return road, ped_graph


def load_graph(path: Path | str, kind: str = "vehicle") -> RoadGraph:
    """Load one network (``kind`` = ``vehicle`` or ``pedestrian``) from a graph directory."""
    if kind not in ("vehicle", "pedestrian"):
        raise ValueError(f"unknown graph kind {kind!r}")
    road, ped = load_network(path)
    return road if kind == "vehicle" else ped


def write_network(directory: Path | str, vertices, edges) -> None:
    """Write graph CSVs.

    ``vertices``: iterable of (id, lat, lon); ``edges``: iterable of
    (id, tail, head, travel_time_s, length_m, veh, ped).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "vertices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon"])
        for vid, la, lo in vertices:
            w.writerow([vid, f"{la:.7f}", f"{lo:.7f}"])
    with open(directory / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_HEADER)
        for row in edges:
            eid, t, h, tt, length, veh, ped = row
            w.writerow([eid, t, h, tt, f"{length:g}", veh, ped])


# --------------------------------------------------------------------------
# Dijkstra


@dataclass
class SearchState:
    """Result of one Dijkstra run: distances and parents of settled vertices."""

    source: int
    dist: dict[int, float] = field(default_factory=dict)
    parent: dict[int, int] = field(default_factory=dict)
    parent_edge: dict[int, int] = field(default_factory=dict)
    order: list[int] = field(default_factory=list)

    def settled(self, v: int) -> bool:
        return v in self.dist

    def path_to(self, v: int) -> list[int]:
        """Edge indices from the source to ``v`` (reverse searches: from ``v`` to the source)."""
        edges = []
        while v != self.source:
            edges.append(self.parent_edge[v])
            v = self.parent[v]
        edges.reverse()
        return edges


def dijkstra(
    graph: RoadGraph,
    source: int,
    radius: float | None = None,
    targets: Iterable[int] | None = None,
    reverse: bool = False,
) -> SearchState:
    """Settle vertices from ``source`` in order of distance.

    Stops once every vertex within ``radius`` is settled, or once all
    ``targets`` are settled; otherwise settles everything reachable.
    ``reverse=True`` searches the reversed graph (distances *to* source).
    """
    adj = graph.in_adj if reverse else graph.out_adj
    state = SearchState(source)
    dist, parent, parent_edge, order = state.dist, state.parent, state.parent_edge, state.order
    remaining = set(targets) if targets is not None else None
    if remaining is not None and not remaining:
        return state
    tentative = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in dist:
            continue
        if radius is not None and d > radius:
            break
        dist[u] = d
        order.append(u)
        if remaining is not None:
            remaining.discard(u)
            if not remaining:
                break
        for v, w, e in adj[u]:
            nd = d + w
            if v not in dist and nd < tentative.get(v, INF):
                tentative[v] = nd
                parent[v] = u
                parent_edge[v] = e
                heapq.heappush(heap, (nd, v))
    # parents of unsettled vertices are meaningless
    for v in [v for v in parent if v not in dist]:
        del parent[v]
        del parent_edge[v]
    return state


class AStarRouter:
    """Exact point-to-point distances by A* with a straight-line heuristic.

    The heuristic is the planar distance to the target scaled by the smallest
    weight-to-chord ratio over all edges.  That keeps it consistent for any
    edge weights; a ratio of 0 (e.g. a zero-weight edge between distinct
    points) makes the search plain Dijkstra.
    """

    def __init__(self, graph: RoadGraph):
        self.graph = graph
        lat0 = float(np.mean(graph.lat)) if graph.num_vertices else 0.0
        self.xy = project(graph.lat, graph.lon, lat0)
        tails = np.asarray(graph.tail, dtype=int)
        heads = np.asarray(graph.head, dtype=int)
        chord = np.hypot(*(self.xy[tails] - self.xy[heads]).T) if len(tails) else np.zeros(0)
        weight = np.asarray(graph.weight, dtype=float)
        pos = chord > 0
        self.kappa = float(np.min(weight[pos] / chord[pos])) if pos.any() else 0.0

    def distance(self, source: int, target: int) -> float:
        """Shortest-path distance, INF if unreachable."""
        if source == target:
            return 0
        adj = self.graph.out_adj
        tx, ty = self.xy[target]
        xy, kappa = self.xy, self.kappa

        def h(v):
            return kappa * math.hypot(xy[v][0] - tx, xy[v][1] - ty)

        g = {source: 0}
        closed = set()
        heap = [(h(source), source)]
        while heap:
            _, u = heapq.heappop(heap)
            if u in closed:
                continue
            if u == target:
                return g[u]
            closed.add(u)
            du = g[u]
            for v, w, _e in adj[u]:
                nd = du + w
                if v not in closed and nd < g.get(v, INF):
                    g[v] = nd
                    heapq.heappush(heap, (nd + h(v), v))
        return INF


def edge_distance_from(state: SearchState, graph: RoadGraph, source_edge: int, target_edge: int):
    """Location distance using a forward search rooted at ``head[source_edge]``."""
    if source_edge == target_edge:
        return 0
    d = state.dist.get(graph.tail[target_edge])
    return INF if d is None else d + graph.weight[target_edge]


# --------------------------------------------------------------------------
# Location mapping


def project(lat, lon, lat0: float):
    """Local equirectangular projection to metres."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    return np.column_stack((EARTH_RADIUS_M * lon * math.cos(math.radians(lat0)), EARTH_RADIUS_M * lat))


class LocationIndex:
    """Nearest-vertex lookup over dual-accessible vertices."""

    def __init__(self, vertex_ids: Sequence, vertices: Sequence[int], lat, lon):
        if len(vertices) == 0:
            self.vertices = np.zeros(0, dtype=int)
            self.tree = None
            self.lat0 = 0.0
            return
        self.vertex_ids = list(vertex_ids)
        self.vertices = np.asarray(vertices, dtype=int)
        lat = np.asarray(lat, dtype=float)[self.vertices]
        lon = np.asarray(lon, dtype=float)[self.vertices]
        self.lat0 = float(np.mean(lat))
        self.points = project(lat, lon, self.lat0)
        self.tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.vertices)

    @classmethod
    def from_networks(cls, road: RoadGraph, ped: RoadGraph) -> "LocationIndex":
        dual = set()
        for pe, ve in enumerate(ped.veh_edge):
            if ve >= 0:
                dual.add(ped.tail[pe])
                dual.add(ped.head[pe])
        return cls(road.vertex_ids, sorted(dual), road.lat, road.lon)

    def _id_key(self, v: int):
        vid = self.vertex_ids[v]
        return (0, vid, "") if isinstance(vid, int) else (1, 0, str(vid))

    def nearest(self, lat: float, lon: float) -> int:
        """Dense index of the closest indexed vertex; ties go to the smallest vertex id."""
        if self.tree is None:
            raise ValueError("location index is empty")
        q = project([lat], [lon], self.lat0)[0]
        dmin, _ = self.tree.query(q)
        # projection rounding can split a geometric tie by an ulp
        tol = dmin * 1e-9 + 1e-9
        cands = self.tree.query_ball_point(q, dmin + tol)
        tied = [int(self.vertices[c]) for c in cands if np.hypot(*(self.points[c] - q)) <= dmin + tol]
        return min(tied, key=self._id_key)


def map_location(index: LocationIndex, lat: float, lon: float) -> int:
    return index.nearest(lat, lon)
