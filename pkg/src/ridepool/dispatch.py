"""Meeting points, insertion cost and the bucket-accelerated best-insertion search."""
from __future__ import annotations

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass

from .chrouting import FROM_TARGETS, TO_TARGETS, BucketIndex, ContractionHierarchy, leg_ellipse
from .fleet import (
    ConstraintParams,
    Insertion,
    InsertionEvaluator,
    RouteDelta,
    RouteState,
    StopVisit,
    Vehicle,
    advance_vehicle,
    apply_insertion,
)
from .netgraph import INF, RoadGraph, dijkstra

logger = logging.getLogger(__name__)

# first distance cap (s) for last-stop bucket scans, grown fourfold per round
LAST_STOP_CAP0 = 300
LAST_STOP_CAP_MAX = 20_000

__all__ = [
    "CostParameters", "Dispatcher", "Insertion", "MeetingPointSet", "Request",
    "find_meeting_points", "insertion_cost",
]


@dataclass
class Request:
    id: int
    origin: int  # vehicle edge index
    destination: int
    t_req: int
    max_walk: float = 0.0  # metres
    walk_speed: float = 1.25  # m/s
    car_prob: float = 1.0
    category: str = ""

    def __post_init__(self):
        if self.max_walk < 0:
            raise ValueError(f"request {self.id}: negative walking radius")
        if self.walk_speed <= 0:
            raise ValueError(f"request {self.id}: walking speed must be positive")


@dataclass
class MeetingPointSet:
    pickups: list[tuple[int, int]]  # (edge, access s)
    dropoffs: list[tuple[int, int]]  # (edge, egress s)


@dataclass
class CostParameters:
    detour_weight: float = 1.0
    walk_weight: float = 1.0
    t_wait_max: int = 600
    alpha: float = 1.4
    beta: int = 600
    dwell: int = 0

    def __post_init__(self):
        if min(self.detour_weight, self.walk_weight, self.t_wait_max, self.beta, self.dwell) < 0:
            raise ValueError("cost parameters must be non-negative")
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")

    def constraints(self) -> ConstraintParams:
        return ConstraintParams(self.t_wait_max, self.alpha, self.beta, self.dwell)


def insertion_cost(t_trip, t_trip_plus, t_detour, t_walk, params: CostParameters | None = None) -> float:
    p = params or CostParameters()
    return t_trip + t_trip_plus + p.detour_weight * t_detour + p.walk_weight * t_walk


def find_meeting_points(req: Request, ped: RoadGraph, road: RoadGraph) -> MeetingPointSet:
    """Vehicle edges within walking range of the origin (forward) and destination (backward).

    The rider stands at the head of the origin edge; being picked up at edge
    x means walking to head(x).  Times are ``floor(length / speed)``.
    """
    speed = req.walk_speed
    pickups = {req.origin: 0}
    dropoffs = {req.destination: 0}
    if req.max_walk > 0:
        for out, rev in ((pickups, False), (dropoffs, True)):
            root = road.head[req.origin if not rev else req.destination]
            state = dijkstra(ped, root, radius=req.max_walk, reverse=rev)
            for v, dist in state.dist.items():
                t = int(math.floor(dist / speed + 1e-9))
                for _, _, pe in ped.in_adj[v]:
                    ve = ped.veh_edge[pe]
                    if ve >= 0 and t < out.get(ve, INF):
                        out[ve] = t
    return MeetingPointSet(sorted(pickups.items()), sorted(dropoffs.items()))


@dataclass
class _Leg:
    src_stop: int
    src_edge: int
    dst_stop: int
    dst_edge: int
    leeway: float


@dataclass
class SearchStats:
    evaluated: int = 0
    vehicles: int = 0
    last_entries: int = 0


class Dispatcher:
    """Fleet state plus the three bucket indices used to price insertions.

    ``src``  : stop ``s_i`` of every non-final leg, entries pruned to the leg's detour ellipse
    ``tgt``  : stop ``s_{i+1}`` of every leg, same pruning
    ``last`` : each route's final stop, unpruned and distance-sorted
    """

    def __init__(self, ch: ContractionHierarchy, params: CostParameters | None = None, prune: bool = True):
        self.ch = ch
        self.graph = ch.graph
        self.params = params or CostParameters()
        self.constraint_params = self.params.constraints()
        self.prune = prune
        self.routes: dict[int, RouteState] = {}
        self.src = BucketIndex(ch, FROM_TARGETS)
        self.tgt = BucketIndex(ch, TO_TARGETS)
        self.last = BucketIndex(ch, FROM_TARGETS, sorted_buckets=True)
        self.owner: dict[int, int] = {}  # stop id -> vehicle id
        self._legs: dict[int, dict[int, _Leg]] = {}
        self._last_stop: dict[int, int] = {}
        self.searching = 0  # debug phase flag: number of searches in flight

    # ------------------------------------------------------------ fleet
    def add_vehicle(self, vehicle: Vehicle, t: int) -> RouteState:
        route = RouteState(vehicle, self.constraint_params)
        route.start(t)
        self.routes[vehicle.id] = route
        self._reindex(vehicle.id)
        return route

    def remove_vehicle(self, vehicle_id: int) -> StopVisit:
        self._assert_writable()
        route = self.routes.pop(vehicle_id)
        for leg in self._legs.pop(vehicle_id, {}).values():
            self.src.remove_target(leg.src_stop)
            self.tgt.remove_target(leg.dst_stop)
        last = self._last_stop.pop(vehicle_id, None)
        if last is not None:
            self.last.remove_target(last)
        for s in route.stops:
            self.owner.pop(s.id, None)
        s0 = route.stops[0]
        return StopVisit(vehicle_id, s0.id, s0.edge, s0.arr, s0.dep, list(s0.boarding),
                         list(s0.alighting), route.occupancy[0])

    def apply(self, ins: Insertion, now: int) -> RouteDelta:
        self._assert_writable()
        route = self.routes[ins.vehicle_id]
        delta = apply_insertion(route, ins, now)
        self.update_indices_for_stops([delta])
        return delta

    def advance(self, vehicle_id: int, now: int) -> tuple[StopVisit, RouteDelta]:
        self._assert_writable()
        visit, delta = advance_vehicle(self.routes[vehicle_id], now)
        self.update_indices_for_stops([delta])
        return visit, delta

    def _assert_writable(self):
        if self.searching:
            raise RuntimeError("fleet state mutated while insertion searches are in flight")

    # ---------------------------------------------------------- indices
    def update_indices_for_stops(self, deltas: list[RouteDelta]) -> None:
        for vid in sorted({d.vehicle_id for d in deltas}):
            for d in deltas:
                if d.vehicle_id == vid:
                    for sid in d.removed:
                        self.owner.pop(sid, None)
            if vid in self.routes:
                self._reindex(vid)

    def _reindex(self, vid: int) -> None:
        """Regenerate every leg whose endpoints or leeway changed, and the last-stop entry."""
        route = self.routes[vid]
        stops = route.stops
        for s in stops:
            self.owner[s.id] = vid
        new = {}
        for i in range(len(stops) - 1):
            a, b = stops[i], stops[i + 1]
            new[a.id] = _Leg(a.id, a.edge, b.id, b.edge, route.leeway(i))
        old = self._legs.get(vid, {})
        for sid, leg in old.items():
            if new.get(sid) != leg:
                self.src.remove_target(leg.src_stop)
                self.tgt.remove_target(leg.dst_stop)
        for sid, leg in new.items():
            if old.get(sid) != leg:
                if self.prune:
                    _, src, tgt = leg_ellipse(self.ch, leg.src_edge, leg.dst_edge, leg.leeway)
                else:
                    src = tgt = None
                self.src.insert_target(leg.src_stop, leg.src_edge, src)
                self.tgt.insert_target(leg.dst_stop, leg.dst_edge, tgt)
        self._legs[vid] = new
        last = stops[-1]
        if self._last_stop.get(vid) != last.id:
            if vid in self._last_stop:
                self.last.remove_target(self._last_stop[vid])
            self.last.insert_target(last.id, last.edge)
            self._last_stop[vid] = last.id
        if len(stops) > 1:
            key = (stops[0].id, stops[1].id, stops[0].dep)
            if route.leg0_key != key:
                _, path = self.ch.edge_query(stops[0].edge, stops[1].edge)
                route.set_leg0_path(path, self.graph.weight)
                route.leg0_key = key
        else:
            route.leg0_path = []
            route.leg0_key = None

    def rebuilt_indices(self) -> tuple[BucketIndex, BucketIndex, BucketIndex]:
        """Indices built from scratch for the current routes (consistency oracle)."""
        src = BucketIndex(self.ch, FROM_TARGETS)
        tgt = BucketIndex(self.ch, TO_TARGETS)
        last = BucketIndex(self.ch, FROM_TARGETS, sorted_buckets=True)
        for vid in sorted(self.routes):
            route = self.routes[vid]
            stops = route.stops
            for i in range(len(stops) - 1):
                if self.prune:
                    _, s, t = leg_ellipse(self.ch, stops[i].edge, stops[i + 1].edge, route.leeway(i))
                else:
                    s = t = None
                src.insert_target(stops[i].id, stops[i].edge, s)
                tgt.insert_target(stops[i + 1].id, stops[i + 1].edge, t)
            last.insert_target(stops[-1].id, stops[-1].edge)
        return src, tgt, last

    # ----------------------------------------------------------- search
    def meeting_points(self, req: Request, ped: RoadGraph | None) -> MeetingPointSet:
        if ped is None or req.max_walk <= 0:
            return MeetingPointSet([(req.origin, 0)], [(req.destination, 0)])
        return find_meeting_points(req, ped, self.graph)

    @contextmanager
    def read_phase(self):
        """Mark a span in which only searches may run; mutations raise."""
        self.searching += 1
        try:
            yield self
        finally:
            self.searching -= 1

    def find_best_insertion(self, req: Request, mps: MeetingPointSet, now: int,
                            stats: SearchStats | None = None) -> Insertion | None:
        """Minimum-cost feasible insertion over all vehicles and meeting points.

        Read-only: safe to run concurrently for different requests.
        """
        return self._find_best(req, mps, now, stats)

    def _find_best(self, req, mps, now, stats):
        g = self.graph
        ch = self.ch
        w = g.weight
        gd = self.params.detour_weight
        gw = self.params.walk_weight
        pick = dict(mps.pickups)
        drop = dict(mps.dropoffs)
        locs = sorted(set(pick) | set(drop))
        rev = {x: ch.down_search(g.tail[x]) for x in locs}
        fwd = {x: ch.up_search(g.head[x]) for x in locs}

        # per vehicle: from_s[v][i][x] = dist(s_i -> x), to_s[v][i][x] = dist(x -> s_i)
        from_s: dict[int, dict[int, dict[int, int]]] = {}
        to_s: dict[int, dict[int, dict[int, int]]] = {}
        for x in locs:
            for sid, d in self.src.scan(rev[x], w[x], x).items():
                vid = self.owner[sid]
                from_s.setdefault(vid, {}).setdefault(self.routes[vid].index[sid], {})[x] = d
            for sid, d in self.tgt.scan(fwd[x], 0, x).items():
                vid = self.owner[sid]
                to_s.setdefault(vid, {}).setdefault(self.routes[vid].index[sid], {})[x] = d

        pd_memo: dict[tuple[int, int], int] = {}

        def dist_pd(p, d):
            key = (p, d)
            r = pd_memo.get(key)
            if r is None:
                if p == d:
                    r = 0
                else:
                    a, b = fwd[p], rev[d]
                    if len(a) > len(b):
                        a, b = b, a
                    best = min((dv + b[v] for v, dv in a.items() if v in b), default=INF)
                    r = best + w[d] if best < INF else INF
                pd_memo[key] = r
            return r

        best: Insertion | None = None
        evaluated = 0

        def consider(ins):
            nonlocal best
            if ins is not None and (best is None or ins.sort_key() < best.sort_key()):
                best = ins

        evaluators: dict[int, InsertionEvaluator] = {}

        def evaluator(vid):
            ev = evaluators.get(vid)
            if ev is None:
                ev = InsertionEvaluator(self.routes[vid], now, req.id, req.t_req, gd, gw)
                evaluators[vid] = ev
            return ev

        eps = 1e-9
        drops_memo: dict[tuple[int, int], list] = {}

        def later_drops(vid, j, fs, ts):
            """Dropoffs reachable on leg j, by d(s_j -> d) + (1 + gw) * egress."""
            key = (vid, j) if fs is not None else (vid, j, last_round)
            lst = drops_memo.get(key)
            if lst is None:
                fj = fs.get(j) if fs is not None else last_hits_by_vehicle.get(vid, {})
                tj = ts.get(j + 1, {}) if ts is not None else None
                lst = sorted((dd + (1 + gw) * drop[d], d, dd) for d, dd in (fj or {}).items()
                             if d in drop and (tj is None or d in tj))
                drops_memo[key] = lst
            return lst

        last_hits_by_vehicle: dict[int, dict[int, int]] = {}
        last_round = 0
        direct_memo: dict[tuple[int, float], list] = {}

        def direct_drops(p, weight):
            """Dropoffs by weight * d(p -> d) + (1 + gw) * egress, unreachable ones left out."""
            key = (p, weight)
            lst = direct_memo.get(key)
            if lst is None:
                lst = []
                for d, e in drop.items():
                    dd = dist_pd(p, d)
                    if dd < INF:
                        lst.append((weight * dd + (1 + gw) * e, d, dd))
                lst.sort()
                direct_memo[key] = lst
            return lst
        # pickups on ordinary legs with a lower bound on any insertion using them;
        # evaluated cheapest bound first so the incumbent tightens early
        starts = []
        for vid in sorted(from_s):
            route = self.routes[vid]
            k = route.k
            fs, ts = from_s[vid], to_s.get(vid, {})
            ev = evaluator(vid)
            cur_space = None
            for i in sorted(fs):
                if i >= k:
                    continue
                nxt = ts.get(i + 1, {})
                for p, d_to_p in sorted(fs[i].items()):
                    if p not in pick:
                        continue
                    acc = pick[p]
                    if i == 0 and ev.replaces_s0:
                        if p == ev.start_edge:
                            d_to_p = 0
                        else:
                            if cur_space is None:
                                cur_space = ch.up_search(g.head[ev.start_edge])
                            rp = rev[p]
                            m = min((dv + rp[v] for v, dv in cur_space.items() if v in rp), default=INF)
                            d_to_p = m + w[p] if m < INF else INF
                    pk = ev.pickup(i, p, acc, d_to_p)
                    if pk is None:
                        continue
                    cheapest = direct_drops(p, 1.0)
                    if not cheapest:
                        continue
                    # the new rider's own cost so far plus the detour that no slack can absorb
                    base = pk[1] - req.t_req + gw * acc
                    d_p_next = route.leg_dist[i] if pk[0] else nxt.get(p)
                    if d_p_next is not None and not pk[0]:
                        base += gd * max(0, pk[1] + d_p_next - ev.arr[i + 1] - ev.suffix_slack[i + 1])
                    starts.append((base + cheapest[0][0], vid, i, p, acc, d_to_p, pk, d_p_next, base))
        starts.sort(key=lambda c: c[:4])

        deferred = []  # pickups whose dropoff may follow the last stop
        for lb, vid, i, p, acc, d_to_p, pk, d_p_next, base in starts:
            if best is not None and lb > best.cost + eps:
                break
            route = self.routes[vid]
            k = route.k
            fs, ts = from_s[vid], to_s.get(vid, {})
            nxt = ts.get(i + 1, {})
            ev = evaluator(vid)
            # i == j: p -> d -> s_{i+1}
            for key, d, d_pd in direct_drops(p, 1.0):
                if best is not None and base + key > best.cost + eps:
                    break
                d_next = nxt.get(d)
                if d_next is None:
                    continue
                evaluated += 1
                consider(ev.complete(i, p, acc, pk, i, d, drop[d], d_to_p, d_pd=d_pd, d_d_next=d_next))
            if d_p_next is None:
                continue
            for j in range(i + 1, k):
                # in-vehicle time >= (old arrival at s_j - pickup) + dist(s_j -> d)
                floor = base + max(0, ev.arr[j] - pk[1])
                tj = ts.get(j + 1)
                for key, d, d_to_d in later_drops(vid, j, fs, ts):
                    if best is not None and floor + key > best.cost + eps:
                        break
                    evaluated += 1
                    consider(ev.complete(i, p, acc, pk, j, d, drop[d], d_to_p, d_p_next=d_p_next,
                                         d_to_d=d_to_d, d_d_next=tj[d]))
            deferred.append((vid, i, p, acc, d_to_p, pk, d_p_next, base))

        # cheapest dropoff tail per pickup, for insertions after the last stop
        tail_cost = {}
        for p in pick:
            lst = direct_drops(p, 1.0 + gd)
            tail_cost[p] = lst[0][0] if lst else math.inf

        # last-stop buckets, scanned in rounds with a growing distance cap.  Hits within the
        # cap are exact.  An insertion leaving the last stop for x at distance y costs at
        # least (1 + gd) * y plus what x itself adds, so a round is final once the cap
        # covers that distance limit for the best cost found
        def limit(x, cost):
            slack = -math.inf
            if x in pick:
                slack = cost - gw * pick[x] - tail_cost[x]
            if x in drop:
                slack = max(slack, cost - (1 + gw) * drop[x])
            return slack / (1.0 + gd) * (1 + 1e-12) + 1e-9

        cap = LAST_STOP_CAP0
        while True:
            bounds = {}
            for x in locs:
                b = cap
                if best is not None:
                    b = limit(x, best.cost) if cap is None else min(cap, limit(x, best.cost))
                bounds[x] = b
            last_hits = {x: self.last.scan(rev[x], w[x], x, bounds[x]) for x in locs}
            if stats is not None:
                stats.last_entries += sum(len(h) for h in last_hits.values())
            last_hits_by_vehicle.clear()
            for x, hits in last_hits.items():
                for sid, dd in hits.items():
                    last_hits_by_vehicle.setdefault(self.owner[sid], {})[x] = dd
            last_round += 1
            for vid, i, p, acc, d_to_p, pk, d_p_next, base in deferred:
                route = self.routes[vid]
                k = route.k
                ev = evaluator(vid)
                floor = base + max(0, ev.arr[k] - pk[1])
                for key, d, d_to_d in later_drops(vid, k, None, None):
                    if best is not None:
                        if floor + key > best.cost + eps:
                            break
                        if (1 + gd) * d_to_d > best.cost + eps:
                            continue
                    evaluated += 1
                    consider(ev.complete(i, p, acc, pk, k, d, drop[d], d_to_p,
                                         d_p_next=d_p_next, d_to_d=d_to_d))
            # pickup and dropoff both after the last stop
            cands = sorted((x, self.owner[sid], p) for p in pick for sid, x in last_hits[p].items())
            for x, vid, p in cands:
                if best is not None and (1 + gd) * x > best.cost + eps:
                    break
                route = self.routes[vid]
                k = route.k
                acc = pick[p]
                ev = evaluator(vid)
                pk = ev.pickup(k, p, acc, x)
                if pk is None:
                    continue
                t_pick = pk[1]
                lower = (t_pick - req.t_req) + gd * (t_pick - ev.old_end) + gw * acc + tail_cost[p]
                if best is not None and lower > best.cost + eps:
                    continue
                head = lower - tail_cost[p]
                for key, d, d_pd in direct_drops(p, 1.0 + gd):
                    if best is not None and head + key > best.cost + eps:
                        break
                    evaluated += 1
                    consider(ev.complete(k, p, acc, pk, k, d, drop[d], x, d_pd=d_pd))
            if cap is None or (best is not None and max(limit(x, best.cost) for x in locs) <= cap):
                break
            cap = cap * 4 if cap < LAST_STOP_CAP_MAX else None
        if stats is not None:
            stats.evaluated += evaluated
            stats.vehicles += len(evaluators)
        return best
