"""Vehicle routes, schedule arithmetic, occupancy and feasibility constraints.

Times are integer seconds.  A route is ``s_0 .. s_k``; ``s_0`` is the stop the
vehicle is at or has last left, and leg ``i`` runs from ``s_i`` to ``s_{i+1}``.
Every stop ``m >= 1`` departs at ``max(arr, earliest boarding) + dwell``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .netgraph import INF


class InfeasibleInsertion(ValueError):
    pass


@dataclass
class Vehicle:
    id: int
    initial_edge: int
    capacity: int = 4
    t_serv_min: int = 0
    t_serv_max: int = 86_400

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"vehicle {self.id}: capacity must be >= 1")
        if self.t_serv_min > self.t_serv_max:
            raise ValueError(f"vehicle {self.id}: empty service interval")


@dataclass
class ConstraintParams:
    t_wait_max: int = 600
    alpha: float = 1.4
    beta: int = 600
    dwell: int = 0

    def trip_bound(self, accepted_trip: int) -> int:
        # integral seconds; the epsilon absorbs alpha's binary representation
        return math.floor(self.alpha * accepted_trip + self.beta + 1e-6)


_stop_ids = itertools.count()


@dataclass
class Stop:
    edge: int
    arr: int
    dep: int
    boarding: list[int] = field(default_factory=list)
    alighting: list[int] = field(default_factory=list)
    earliest: int = -INF
    id: int = field(default_factory=lambda: next(_stop_ids))


@dataclass
class Rider:
    request_id: int
    t_req: int
    access: int
    egress: int
    pickup_stop: int
    dropoff_stop: int
    accepted_pickup: int  # T_p
    accepted_trip: int  # T_t
    latest_pickup: int
    latest_arrival: int  # latest arrival at the dropoff stop

    @property
    def earliest_pickup(self) -> int:
        return self.t_req + self.access


@dataclass
class Insertion:
    """Candidate placement of a request into one vehicle route.

    Distances are the legs the insertion creates: ``d_to_p`` from ``s_i`` (or
    the departure point when ``i == 0``), ``d_p_next`` pickup -> ``s_{i+1}``
    (``i < j``), ``d_pd`` pickup -> dropoff (``i == j``), ``d_to_d``
    ``s_j`` -> dropoff (``i < j``) and ``d_d_next`` dropoff -> ``s_{j+1}``.
    """

    request_id: int
    vehicle_id: int
    i: int
    j: int
    pickup: int
    access: int
    dropoff: int
    egress: int
    t_req: int
    d_to_p: int = 0
    d_p_next: int = 0
    d_pd: int = 0
    d_to_d: int = 0
    d_d_next: int = 0
    start_edge: int = -1
    start_time: int = 0
    pickup_merged: bool = False
    dropoff_merged: bool = False
    pickup_time: int = 0
    dropoff_time: int = 0
    t_trip: int = 0
    t_trip_plus: int = 0
    t_detour: int = 0
    t_walk: int = 0
    cost: float = math.inf

    def sort_key(self):
        return (self.cost, self.vehicle_id, self.i, self.j, self.pickup, self.dropoff)

    @property
    def in_vehicle(self) -> int:
        return self.dropoff_time - self.pickup_time

    @property
    def wait(self) -> int:
        return self.pickup_time - self.t_req - self.access


@dataclass
class StopVisit:
    """A completed stop, as recorded in a vehicle's history."""

    vehicle_id: int
    stop_id: int
    edge: int
    arr: int
    dep: int
    boarding: list[int]
    alighting: list[int]
    occupancy_after: int


@dataclass
class RouteDelta:
    vehicle_id: int
    added: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    visits: list[StopVisit] = field(default_factory=list)  # stops left behind by the change


class RouteState:
    """Stop sequence of one vehicle with derived schedule and constraint margins."""

    def __init__(self, vehicle: Vehicle, params: ConstraintParams):
        self.vehicle = vehicle
        self.params = params
        self.stops: list[Stop] = []
        self.leg_dist: list[int] = []  # leg_dist[i] = dist(s_i, s_{i+1})
        self.riders: dict[int, Rider] = {}
        self.leg0_path: list[tuple[int, int]] = []  # (edge, time vehicle reaches its head)
        self.leg0_key = None
        self.occupancy: list[int] = []
        self.max_delay: list[float] = []
        self.index: dict[int, int] = {}

    # ----------------------------------------------------------- lifecycle
    def start(self, t: int) -> Stop:
        s0 = Stop(self.vehicle.initial_edge, t, t)
        self.stops = [s0]
        self.leg_dist = []
        self.leg0_path = []
        self.refresh()
        return s0

    @property
    def k(self) -> int:
        return len(self.stops) - 1

    @property
    def idle(self) -> bool:
        return len(self.stops) == 1

    # ------------------------------------------------------------ schedule
    def refresh(self) -> None:
        """Recompute arrivals/departures, occupancy and per-stop delay margins."""
        stops, p = self.stops, self.params
        for m in range(1, len(stops)):
            s = stops[m]
            s.arr = stops[m - 1].dep + self.leg_dist[m - 1]
            s.dep = max(s.arr, s.earliest) + p.dwell
        k = len(stops) - 1
        self.occupancy = leg_occupancy(stops)
        md = [math.inf] * (k + 2)
        for m in range(k, 0, -1):
            s = stops[m]
            own = math.inf
            for r in s.boarding:
                own = min(own, self.riders[r].latest_pickup - p.dwell - s.arr)
            for r in s.alighting:
                own = min(own, self.riders[r].latest_arrival - s.arr)
            if m == k:
                own = min(own, self.vehicle.t_serv_max - s.arr)
            else:
                own = min(own, md[m + 1] + (s.dep - p.dwell - s.arr))
            md[m] = own
        self.max_delay = md
        self.index = {s.id: m for m, s in enumerate(stops)}

    def leeway(self, i: int) -> float:
        """Largest arrival delay at ``s_{i+1}`` (i.e. added detour on leg i) violating nothing."""
        return self.max_delay[i + 1]

    def set_leg0_path(self, edges: list[int], weights) -> None:
        t = self.stops[0].dep
        path = []
        for e in edges:
            t += weights[e]
            path.append((e, t))
        self.leg0_path = path

    def departure_point(self, now: int) -> tuple[int, int, bool]:
        """(edge, time) from which the vehicle can next divert, and whether that replaces ``s_0``."""
        s0 = self.stops[0]
        if len(self.stops) == 1:
            return s0.edge, max(now, s0.dep), False
        if now <= s0.dep:
            return s0.edge, s0.dep, False
        for e, t in self.leg0_path:
            if t >= now:
                return e, t, True
        # at or past the end of leg 0 (reached-stop event pending this instant)
        return self.stops[1].edge, self.stops[1].arr, True

    def end_time(self, now: int) -> int:
        if len(self.stops) == 1:
            return max(now, self.stops[0].dep)
        return self.stops[-1].dep


# --------------------------------------------------------------------------
# fast evaluation


class InsertionEvaluator:
    """Exact schedule effects of insertions into one route, O(k) per insertion.

    Shared by the bucket-based dispatcher and the exhaustive enumerator so
    that both price identical distance inputs identically.
    """

    def __init__(self, route: RouteState, now: int, request_id: int, t_req: int,
                 detour_weight: float = 1.0, walk_weight: float = 1.0):
        self.route = route
        self.now = now
        self.request_id = request_id
        self.t_req = t_req
        self.gd = detour_weight
        self.gw = walk_weight
        self.start_edge, self.start_time, self.replaces_s0 = route.departure_point(now)
        self.old_end = route.end_time(now)
        stops = route.stops
        dwell = route.params.dwell
        self.arr = [s.arr for s in stops]
        self.dep = [s.dep for s in stops]
        self.slack = [s.dep - dwell - s.arr for s in stops]
        self.alight = [len(s.alighting) for s in stops]
        # suffix_slack[m]: waiting that can absorb a delay arriving at s_m before the route end
        suffix = [0] * (len(stops) + 1)
        for m in range(len(stops) - 1, -1, -1):
            suffix[m] = suffix[m + 1] + self.slack[m]
        self.suffix_slack = suffix

    def pickup(self, i: int, p: int, access: int, d_to_p: int):
        """Pickup after ``s_i``: (merged, pickup_time) or None if capacity forbids it."""
        route = self.route
        if route.occupancy[i] >= route.vehicle.capacity:
            return None
        if d_to_p >= INF:
            return None
        earliest = self.t_req + access
        if i >= 1 and p == route.stops[i].edge and self.dep[i] >= earliest:
            return True, self.dep[i]
        t0 = self.start_time if i == 0 else self.dep[i]
        return False, max(t0 + d_to_p, earliest) + route.params.dwell

    def _propagate(self, m: int, delay: int, trip_plus: int, stop_at: int):
        """Push an arrival delay at ``s_m`` through ``s_m .. s_stop_at``; returns (dep delay, trip_plus)."""
        slack, alight = self.slack, self.alight
        for x in range(m, stop_at + 1):
            if delay <= 0:
                return 0, trip_plus
            trip_plus += delay * alight[x]
            delay = delay - slack[x] if delay > slack[x] else 0
        return max(delay, 0), trip_plus

    def complete(self, i: int, p: int, access: int, pick, j: int, d: int, egress: int,
                 d_to_p: int, d_p_next: int = 0, d_pd: int = 0, d_to_d: int = 0, d_d_next: int = 0):
        """Finish an insertion started by :meth:`pickup`; None if infeasible."""
        route = self.route
        k = route.k
        dwell = route.params.dwell
        cap = route.vehicle.capacity
        merged_p, pickup_time = pick
        md = route.max_delay
        trip_plus = 0
        merged_d = False
        if i == j:
            if d_pd >= INF:
                return None
            dropoff_time = pickup_time + d_pd
            if j < k:
                if d_d_next >= INF:
                    return None
                delta = dropoff_time + dwell + d_d_next - self.arr[j + 1]
                if delta > md[j + 1]:
                    return None
                dep_delay, trip_plus = self._propagate(j + 1, delta, 0, k)
                new_end = self.old_end + dep_delay
            else:
                if dropoff_time > route.vehicle.t_serv_max:
                    return None
                new_end = dropoff_time + dwell
        else:
            occ = route.occupancy
            merged_d = d == route.stops[j].edge
            last_leg = j - 1 if merged_d else j
            for m in range(i + 1, last_leg + 1):
                if occ[m] >= cap:
                    return None
            if merged_p:
                delta = 0
            else:
                if d_p_next >= INF:
                    return None
                delta = pickup_time + d_p_next - self.arr[i + 1]
                if delta > md[i + 1]:
                    return None
            delay_j_dep, trip_plus = self._propagate(i + 1, delta, 0, j - 1)
            # arrival delay at s_j
            if merged_d:
                arr_delay_j = delay_j_dep
                dropoff_time = self.arr[j] + arr_delay_j
                dep_delay, trip_plus = self._propagate(j, arr_delay_j, trip_plus, k)
                new_end = self.old_end + dep_delay
            else:
                if d_to_d >= INF:
                    return None
                arr_delay_j = delay_j_dep
                trip_plus += arr_delay_j * self.alight[j] if arr_delay_j > 0 else 0
                dep_j_delay = max(0, arr_delay_j - self.slack[j])
                dropoff_time = self.dep[j] + dep_j_delay + d_to_d
                if j < k:
                    if d_d_next >= INF:
                        return None
                    delta2 = dropoff_time + dwell + d_d_next - self.arr[j + 1]
                    if delta2 > md[j + 1]:
                        return None
                    dep_delay, trip_plus = self._propagate(j + 1, delta2, trip_plus, k)
                    new_end = self.old_end + dep_delay
                else:
                    if dropoff_time > route.vehicle.t_serv_max:
                        return None
                    new_end = dropoff_time + dwell
        t_trip = dropoff_time + egress - self.t_req
        t_detour = new_end - self.old_end
        t_walk = access + egress
        cost = t_trip + trip_plus + self.gd * t_detour + self.gw * t_walk
        return Insertion(
            request_id=self.request_id, vehicle_id=route.vehicle.id, i=i, j=j,
            pickup=p, access=access, dropoff=d, egress=egress, t_req=self.t_req,
            d_to_p=d_to_p, d_p_next=d_p_next, d_pd=d_pd, d_to_d=d_to_d, d_d_next=d_d_next,
            start_edge=self.start_edge if i == 0 else route.stops[i].edge,
            start_time=self.start_time if i == 0 else self.dep[i],
            pickup_merged=merged_p, dropoff_merged=merged_d,
            pickup_time=pickup_time, dropoff_time=dropoff_time,
            t_trip=t_trip, t_trip_plus=trip_plus, t_detour=t_detour, t_walk=t_walk, cost=cost,
        )


# --------------------------------------------------------------------------
# full recomputation: validator and state update


def _validate_indices(route: RouteState, ins: Insertion) -> None:
    k = route.k
    if not (0 <= ins.i <= ins.j <= k):
        raise ValueError(f"malformed insertion indices i={ins.i}, j={ins.j} for route with k={k}")
    if ins.vehicle_id != route.vehicle.id:
        raise ValueError("insertion targets a different vehicle")


def _build_hypothetical(route: RouteState, ins: Insertion, now: int):
    """New stop list / leg distances / rider map realising ``ins`` (no mutation of ``route``)."""
    old = route.stops
    stops = [Stop(s.edge, s.arr, s.dep, list(s.boarding), list(s.alighting), s.earliest, s.id) for s in old]
    legs = list(route.leg_dist)
    removed: list[int] = []
    added: list[int] = []
    start_edge, start_time, replaces = route.departure_point(now)
    i, j = ins.i, ins.j
    rid = ins.request_id
    if i == 0:
        if replaces:
            removed.append(stops[0].id)
            stops[0] = Stop(start_edge, start_time, start_time)
            added.append(stops[0].id)
        elif len(stops) == 1:
            stops[0].dep = start_time
    earliest = ins.t_req + ins.access
    # pickup
    if ins.pickup_merged:
        stops[i].boarding.append(rid)
        stops[i].earliest = max(stops[i].earliest, earliest)
        p_pos = i
    else:
        ps = Stop(ins.pickup, 0, 0, [rid], [], earliest)
        added.append(ps.id)
        p_pos = i + 1
        stops.insert(p_pos, ps)
        if i < len(legs):
            legs[i:i + 1] = [ins.d_to_p, ins.d_p_next]
        else:
            legs.append(ins.d_to_p)
    # dropoff (indices of original stops after the pickup shift by one if pickup was new)
    shift = p_pos - i
    if ins.i == ins.j:
        ds = Stop(ins.dropoff, 0, 0, [], [rid])
        added.append(ds.id)
        stops.insert(p_pos + 1, ds)
        if ins.j < route.k:
            legs[p_pos:p_pos + 1] = [ins.d_pd, ins.d_d_next]
        else:
            legs.append(ins.d_pd)
    else:
        jj = j + shift
        if ins.dropoff_merged:
            stops[jj].alighting.append(rid)
        else:
            ds = Stop(ins.dropoff, 0, 0, [], [rid])
            added.append(ds.id)
            stops.insert(jj + 1, ds)
            if ins.j < route.k:
                legs[jj:jj + 1] = [ins.d_to_d, ins.d_d_next]
            else:
                legs.append(ins.d_to_d)
    return stops, legs, added, removed


def _schedule(stops: list[Stop], legs: list[int], dwell: int) -> None:
    for m in range(1, len(stops)):
        s = stops[m]
        s.arr = stops[m - 1].dep + legs[m - 1]
        s.dep = max(s.arr, s.earliest) + dwell


def check_constraints(route: RouteState, ins: Insertion, now: int | None = None) -> str:
    """``"feasible"`` or the first violated of capacity / service-end / wait / trip.

    Recomputes the full post-insertion schedule on copies; ``route`` is not touched.
    """
    _validate_indices(route, ins)
    if now is None:
        now = route.stops[0].dep
    stops, legs, _, _ = _build_hypothetical(route, ins, now)
    _schedule(stops, legs, route.params.dwell)
    if max(leg_occupancy(stops)) > route.vehicle.capacity:
        return "capacity"
    if stops[-1].arr > route.vehicle.t_serv_max:
        return "service-end"
    where = {}
    for m, s in enumerate(stops):
        for r in s.boarding:
            where.setdefault(r, [None, None])[0] = m
        for r in s.alighting:
            where.setdefault(r, [None, None])[1] = m
    for rid, rider in route.riders.items():
        pm = where.get(rid, [None, None])[0]
        if pm is not None and pm >= 1 and stops[pm].dep > rider.latest_pickup:
            return "wait"
    for rid, rider in route.riders.items():
        dm = where.get(rid, [None, None])[1]
        if dm is not None and stops[dm].arr > rider.latest_arrival:
            return "trip"
    return "feasible"


def hypothetical_effects(route: RouteState, ins: Insertion, now: int) -> dict:
    """Pickup/dropoff times, trip increase of existing riders and added operation time, by full recomputation."""
    stops, legs, _, _ = _build_hypothetical(route, ins, now)
    _schedule(stops, legs, route.params.dwell)
    old_arr = {s.id: s.arr for s in route.stops}
    pick = drop = None
    trip_plus = 0
    for s in stops:
        if ins.request_id in s.boarding:
            pick = s.dep
        if ins.request_id in s.alighting:
            drop = s.arr
        for r in s.alighting:
            if r != ins.request_id and s.id in old_arr:
                trip_plus += s.arr - old_arr[s.id]
    new_end = stops[-1].dep
    return {
        "pickup_time": pick,
        "dropoff_time": drop,
        "t_trip_plus": trip_plus,
        "t_detour": new_end - route.end_time(now),
    }


def apply_insertion(route: RouteState, ins: Insertion, now: int, t_wait_max: int | None = None) -> RouteDelta:
    """Commit ``ins``; returns the stop delta for bucket maintenance."""
    kind = check_constraints(route, ins, now)
    if kind != "feasible":
        raise InfeasibleInsertion(f"insertion of request {ins.request_id} violates {kind} constraint")
    p = route.params
    old_s0, old_occ0 = route.stops[0], route.occupancy[0]
    stops, legs, added, removed = _build_hypothetical(route, ins, now)
    visits = []
    if old_s0.id in removed:
        visits.append(StopVisit(route.vehicle.id, old_s0.id, old_s0.edge, old_s0.arr, old_s0.dep,
                                list(old_s0.boarding), list(old_s0.alighting), old_occ0))
        for r in old_s0.alighting:
            route.riders.pop(r, None)
    route.stops = stops
    route.leg_dist = legs
    _schedule(stops, legs, p.dwell)
    pick_stop = next(s for s in stops if ins.request_id in s.boarding)
    drop_stop = next(s for s in stops if ins.request_id in s.alighting)
    accepted_trip = drop_stop.arr + ins.egress - ins.t_req
    wait_max = p.t_wait_max if t_wait_max is None else t_wait_max
    route.riders[ins.request_id] = Rider(
        request_id=ins.request_id, t_req=ins.t_req, access=ins.access, egress=ins.egress,
        pickup_stop=pick_stop.id, dropoff_stop=drop_stop.id,
        accepted_pickup=pick_stop.dep, accepted_trip=accepted_trip,
        latest_pickup=pick_stop.dep + wait_max,
        latest_arrival=ins.t_req - ins.egress + p.trip_bound(accepted_trip),
    )
    route.refresh()
    return RouteDelta(route.vehicle.id, added, removed, visits)


def leg_occupancy(stops: list[Stop]) -> list[int]:
    """Riders aboard after each stop, counted back from the empty route end.

    Counting backwards includes riders whose pickup stop has already been
    executed and dropped from the route.
    """
    occ = [0] * len(stops)
    cur = 0
    for m in range(len(stops) - 1, 0, -1):
        cur += len(stops[m].alighting) - len(stops[m].boarding)
        occ[m - 1] = cur
    return occ


def advance_vehicle(route: RouteState, now: int) -> tuple[StopVisit, RouteDelta]:
    """Vehicle reached ``s_1``: drop ``s_0`` and shift indices.

    Returns the record of the departed ``s_0`` and the removal delta.  The
    caller schedules the next reached-stop event at ``stops[1].arr`` if the
    route still has more than one stop; otherwise the vehicle idles.
    """
    if len(route.stops) < 2:
        raise ValueError(f"vehicle {route.vehicle.id} has no next stop")
    if now < route.stops[1].arr:
        raise ValueError(f"vehicle {route.vehicle.id} cannot reach s_1 before {route.stops[1].arr}")
    s0 = route.stops[0]
    visit = StopVisit(route.vehicle.id, s0.id, s0.edge, s0.arr, s0.dep, list(s0.boarding),
                      list(s0.alighting), route.occupancy[0])
    for r in s0.alighting:
        route.riders.pop(r, None)
    route.stops.pop(0)
    route.leg_dist.pop(0)
    route.leg0_path = []
    route.refresh()
    return visit, RouteDelta(route.vehicle.id, [], [s0.id], [visit])


def validate_route(route: RouteState) -> list[str]:
    """Debug sweep of the route invariants; returns human-readable problems."""
    problems = []
    stops = route.stops
    p = route.params
    for m in range(1, len(stops)):
        if stops[m].arr != stops[m - 1].dep + route.leg_dist[m - 1]:
            problems.append(f"schedule inconsistent at stop {m}")
        if stops[m].dep < stops[m].arr:
            problems.append(f"departure before arrival at stop {m}")
    board_at, alight_at = {}, {}
    for m, s in enumerate(stops):
        for r in s.boarding:
            board_at[r] = m
        for r in s.alighting:
            alight_at[r] = m
    if set(alight_at) != set(route.riders):
        problems.append(f"rider ledger mismatch: {sorted(set(alight_at) ^ set(route.riders))}")
    for m in range(len(stops) - 1):
        # riders whose pickup is already behind s_0 count as aboard
        occ = sum(1 for r, a in alight_at.items() if board_at.get(r, -1) <= m < a)
        if occ > route.vehicle.capacity:
            problems.append(f"capacity exceeded on leg {m}")
        if route.occupancy[m] != occ:
            problems.append(f"occupancy ledger wrong on leg {m}")
    if len(stops) > 1 and stops[-1].arr > route.vehicle.t_serv_max:
        problems.append("last stop after service end")
    for rid, r in route.riders.items():
        for m, s in enumerate(stops):
            if m >= 1 and rid in s.boarding and s.dep > r.latest_pickup:
                problems.append(f"rider {rid} pickup too late")
            if rid in s.alighting and s.arr > r.latest_arrival:
                problems.append(f"rider {rid} arrives too late")
    return problems
