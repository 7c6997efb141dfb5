"""Exhaustive insertion enumeration with plain Dijkstra distances.

Independent of the hierarchy and the bucket indices: every distance comes
from scipy's Dijkstra over the input graph.  Used as the reference the
bucket-accelerated dispatcher must agree with.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as sp_dijkstra

from .dispatch import CostParameters, MeetingPointSet, Request
from .fleet import Insertion, InsertionEvaluator, RouteState
from .netgraph import INF, RoadGraph


def csr_graph(graph: RoadGraph) -> sp.csr_matrix:
    """Adjacency matrix with the lightest of any parallel edges; self-loops dropped."""
    best: dict[tuple[int, int], float] = {}
    for u, v, w in zip(graph.tail, graph.head, graph.weight):
        if u != v and w < best.get((u, v), np.inf):
            best[(u, v)] = w
    n = graph.num_vertices
    keys = sorted(best)
    rows = np.fromiter((k[0] for k in keys), dtype=np.int64, count=len(keys))
    cols = np.fromiter((k[1] for k in keys), dtype=np.int64, count=len(keys))
    data = np.fromiter((best[k] for k in keys), dtype=float, count=len(keys))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    # explicit zeros are kept as edges because the structure is given directly
    return sp.csr_matrix((data, cols, indptr), shape=(n, n))


class DijkstraDistances:
    """Location distances for a fixed set of query edges, from two multi-source Dijkstra runs."""

    def __init__(self, graph: RoadGraph, matrix: sp.csr_matrix, locations):
        self.graph = graph
        self.locs = sorted(set(locations))
        pos = {x: r for r, x in enumerate(self.locs)}
        self.pos = pos
        heads = [graph.head[x] for x in self.locs]
        tails = [graph.tail[x] for x in self.locs]
        self.fwd = self._rows(sp_dijkstra(matrix, directed=True, indices=heads))
        self.bwd = self._rows(sp_dijkstra(matrix.T.tocsr(), directed=True, indices=tails))

    @staticmethod
    def _rows(d: np.ndarray) -> list[list[int]]:
        d = np.atleast_2d(d)
        return np.where(np.isfinite(d), d, INF).astype(np.int64).tolist()

    def to_loc(self, a: int, x: int) -> int:
        """dist(a -> x) for any edge ``a`` and query location ``x``."""
        if a == x:
            return 0
        d = self.bwd[self.pos[x]][self.graph.head[a]]
        return INF if d >= INF else d + self.graph.weight[x]

    def from_loc(self, x: int, b: int) -> int:
        """dist(x -> b) for query location ``x`` and any edge ``b``."""
        if x == b:
            return 0
        d = self.fwd[self.pos[x]][self.graph.tail[b]]
        return INF if d >= INF else d + self.graph.weight[b]


def exhaustive_best_insertion(routes: dict[int, RouteState], graph: RoadGraph, matrix: sp.csr_matrix,
                              req: Request, mps: MeetingPointSet, now: int,
                              params: CostParameters | None = None) -> Insertion | None:
    """Try every (vehicle, i, j, pickup, dropoff) and return the cheapest feasible insertion."""
    params = params or CostParameters()
    pick = dict(mps.pickups)
    drop = dict(mps.dropoffs)
    dist = DijkstraDistances(graph, matrix, set(pick) | set(drop))
    best = None
    for vid in sorted(routes):
        route = routes[vid]
        ev = InsertionEvaluator(route, now, req.id, req.t_req, params.detour_weight, params.walk_weight)
        stops = route.stops
        k = route.k
        for i in range(k + 1):
            origin = ev.start_edge if i == 0 else stops[i].edge
            for p, acc in pick.items():
                d_to_p = dist.to_loc(origin, p)
                pk = ev.pickup(i, p, acc, d_to_p)
                if pk is None:
                    continue
                d_p_next = dist.from_loc(p, stops[i + 1].edge) if i < k else 0
                # same tests the evaluator applies; they only skip candidates it would reject
                later_ok = i < k and (pk[0] or pk[1] + d_p_next - ev.arr[i + 1] <= route.max_delay[i + 1])
                for j in range(i, k + 1):
                    if j > i:
                        if not later_ok:
                            break
                        if j - 1 > i and route.occupancy[j - 1] >= route.vehicle.capacity:
                            break
                    for d, egr in drop.items():
                        d_d_next = dist.from_loc(d, stops[j + 1].edge) if j < k else 0
                        if i == j:
                            ins = ev.complete(i, p, acc, pk, j, d, egr, d_to_p,
                                              d_pd=dist.from_loc(p, d), d_d_next=d_d_next)
                        else:
                            ins = ev.complete(i, p, acc, pk, j, d, egr, d_to_p, d_p_next=d_p_next,
                                              d_to_d=dist.to_loc(stops[j].edge, d), d_d_next=d_d_next)
                        if ins is not None and (best is None or ins.sort_key() < best.sort_key()):
                            best = ins
    return best


def _carry(delay, trip_plus, slack, alight, first, last):
    """Push arrival delays at stop ``first`` on through stop ``last``; elementwise."""
    for x in range(first, last + 1):
        trip_plus = trip_plus + np.where(delay > 0, delay * alight[x], 0)
        delay = np.where(delay > slack[x], delay - slack[x], 0)
    return np.maximum(delay, 0), trip_plus


def matrix_best_cost(routes: dict[int, RouteState], graph: RoadGraph, matrix: sp.csr_matrix,
                     req: Request, mps: MeetingPointSet, now: int,
                     params: CostParameters | None = None) -> float | None:
    """Cheapest feasible insertion cost over every (vehicle, i, j, pickup, dropoff).

    Same enumeration as :func:`exhaustive_best_insertion`, but each (vehicle,
    i, j) slot prices all pickup x dropoff pairs at once as numpy arrays, with
    its own schedule arithmetic rather than the shared evaluator.
    """
    params = params or CostParameters()
    gd, gw = params.detour_weight, params.walk_weight
    if not mps.pickups or not mps.dropoffs:
        return None
    pe = np.array([p for p, _ in mps.pickups], dtype=np.int64)
    acc = np.array([a for _, a in mps.pickups], dtype=np.int64)
    de = np.array([d for d, _ in mps.dropoffs], dtype=np.int64)
    egr = np.array([e for _, e in mps.dropoffs], dtype=np.int64)
    heads = np.asarray(graph.head, dtype=np.int64)
    tails = np.asarray(graph.tail, dtype=np.int64)
    weight = np.asarray(graph.weight, dtype=np.int64)
    fwd_p = sp_dijkstra(matrix, directed=True, indices=heads[pe])  # from each pickup's head
    fwd_d = sp_dijkstra(matrix, directed=True, indices=heads[de])
    mt = matrix.T.tocsr()
    bwd_p = sp_dijkstra(mt, directed=True, indices=tails[pe])  # into each pickup's tail
    bwd_d = sp_dijkstra(mt, directed=True, indices=tails[de])
    fwd_p, fwd_d, bwd_p, bwd_d = (np.atleast_2d(a) for a in (fwd_p, fwd_d, bwd_p, bwd_d))

    def into(bwd, locs, a):
        """dist(a -> x) for each location x; inf if unreachable."""
        out = bwd[:, heads[a]] + weight[locs]
        return np.where(locs == a, 0.0, out)

    def out_of(fwd, locs, b):
        out = fwd[:, tails[b]] + weight[b]
        return np.where(locs == b, 0.0, out)

    pd = fwd_p[:, tails[de]] + weight[de][None, :]
    pd = np.where(pe[:, None] == de[None, :], 0.0, pd)
    best = None
    for vid in sorted(routes):
        route = routes[vid]
        veh = route.vehicle
        stops = route.stops
        k = len(stops) - 1
        dwell = route.params.dwell
        arr = np.array([s.arr for s in stops], dtype=np.int64)
        dep = np.array([s.dep for s in stops], dtype=np.int64)
        slack = dep - dwell - arr
        alight = np.array([len(s.alighting) for s in stops], dtype=np.int64)
        occ = route.occupancy
        md = route.max_delay
        start_edge, start_time, _ = route.departure_point(now)
        old_end = route.end_time(now)
        for i in range(k + 1):
            if occ[i] >= veh.capacity:
                continue
            origin = start_edge if i == 0 else stops[i].edge
            to_p = into(bwd_p, pe, origin)
            ok_p = np.isfinite(to_p)
            earliest = req.t_req + acc
            t0 = start_time if i == 0 else int(dep[i])
            merged_p = (pe == stops[i].edge) & (dep[i] >= earliest) if i >= 1 else np.zeros(len(pe), bool)
            t_pick = np.where(merged_p, dep[i], np.maximum(t0 + np.where(ok_p, to_p, 0), earliest) + dwell)
            for j in range(i, k + 1):
                if j == i:
                    valid = ok_p[:, None] & np.isfinite(pd)
                    t_drop = t_pick[:, None] + np.where(valid, pd, 0)
                    if j < k:
                        d_next = out_of(fwd_d, de, stops[j + 1].edge)
                        valid &= np.isfinite(d_next)[None, :]
                        delta = t_drop + dwell + np.where(np.isfinite(d_next), d_next, 0)[None, :] - arr[j + 1]
                        valid &= delta <= md[j + 1]
                        shift, plus = _carry(delta, np.zeros_like(delta), slack, alight, j + 1, k)
                        new_end = old_end + shift
                    else:
                        valid &= t_drop <= veh.t_serv_max
                        plus = np.zeros_like(t_drop)
                        new_end = t_drop + dwell
                else:
                    # pickup leg: delay it causes at s_{i+1}
                    p_next = out_of(fwd_p, pe, stops[i + 1].edge)
                    ok_next = merged_p | (ok_p & np.isfinite(p_next))
                    delta_p = np.where(merged_p, 0, t_pick + np.where(np.isfinite(p_next), p_next, 0) - arr[i + 1])
                    ok_next &= merged_p | (delta_p <= md[i + 1])
                    if not ok_next.any():
                        break
                    if any(occ[m] >= veh.capacity for m in range(i + 1, j)):
                        break
                    delay_j, plus_p = _carry(np.where(ok_next, delta_p, 0), np.zeros(len(pe)), slack, alight,
                                             i + 1, j - 1)
                    merged_d = de == stops[j].edge
                    cap_free = occ[j] < veh.capacity
                    # merged dropoff: the rider leaves at s_j itself
                    t_drop_m = arr[j] + delay_j
                    shift_m, plus_m = _carry(delay_j, plus_p, slack, alight, j, k)
                    # separate dropoff after s_j
                    to_d = into(bwd_d, de, stops[j].edge)
                    ok_d = np.isfinite(to_d) & cap_free
                    plus_s = plus_p + np.where(delay_j > 0, delay_j * alight[j], 0)
                    late_j = np.maximum(0, delay_j - slack[j])
                    t_drop_s = (dep[j] + late_j)[:, None] + np.where(ok_d, to_d, 0)[None, :]
                    valid_s = ok_next[:, None] & ok_d[None, :]
                    if j < k:
                        d_next = out_of(fwd_d, de, stops[j + 1].edge)
                        valid_s &= np.isfinite(d_next)[None, :]
                        delta2 = t_drop_s + dwell + np.where(np.isfinite(d_next), d_next, 0)[None, :] - arr[j + 1]
                        valid_s &= delta2 <= md[j + 1]
                        shift_s, plus_s = _carry(delta2, np.broadcast_to(plus_s[:, None], delta2.shape), slack,
                                                 alight, j + 1, k)
                        end_s = old_end + shift_s
                    else:
                        valid_s &= t_drop_s <= veh.t_serv_max
                        plus_s = np.broadcast_to(plus_s[:, None], t_drop_s.shape)
                        end_s = t_drop_s + dwell
                    md_mask = merged_d[None, :]
                    valid = np.where(md_mask, ok_next[:, None], valid_s)
                    t_drop = np.where(md_mask, t_drop_m[:, None], t_drop_s)
                    plus = np.where(md_mask, plus_m[:, None], plus_s)
                    new_end = np.where(md_mask, (old_end + shift_m)[:, None], end_s)
                if not valid.any():
                    continue
                t_trip = t_drop + egr[None, :] - req.t_req
                cost = (t_trip + plus) + gd * (new_end - old_end) + gw * (acc[:, None] + egr[None, :])
                c = float(np.min(np.where(valid, cost, np.inf)))
                if best is None or c < best:
                    best = c
    return best


def schedule_violations(log, params: CostParameters) -> list[str]:
    """Audit an executed schedule from the log alone.

    Replays every vehicle's stop history to count passengers, and checks
    each served ride against its accepted pickup and trip time.
    """
    problems = []
    by_id = {v.id: v for v in log.vehicles}
    aboard: dict[int, set[int]] = {}
    for visit in log.visits:
        veh = by_id[visit.vehicle_id]
        cur = aboard.setdefault(visit.vehicle_id, set())
        cur -= set(visit.alighting)
        cur |= set(visit.boarding)
        if len(cur) != visit.occupancy_after:
            problems.append(f"vehicle {veh.id}: logged occupancy {visit.occupancy_after} != replayed {len(cur)}")
        if len(cur) > veh.capacity:
            problems.append(f"vehicle {veh.id}: capacity exceeded at t={visit.arr}")
        # the service end bounds arrivals; dwelling at the final stop may run past it
        if (visit.boarding or visit.alighting) and visit.arr > veh.t_serv_max:
            problems.append(f"vehicle {veh.id}: stop reached after shutdown at t={visit.arr}")
    for o in log.outcomes:
        if o.mode != "rp":
            continue
        if o.actual_pickup < 0 or o.actual_dropoff < 0:
            problems.append(f"request {o.request_id}: ride never completed")
            continue
        if o.actual_pickup > o.offered_pickup + params.t_wait_max:
            problems.append(f"request {o.request_id}: wait bound exceeded")
        trip = o.actual_dropoff + o.egress - o.t_req
        if trip > int(np.floor(params.alpha * o.offered_trip + params.beta + 1e-6)):
            problems.append(f"request {o.request_id}: trip bound exceeded ({trip} s)")
    return problems
