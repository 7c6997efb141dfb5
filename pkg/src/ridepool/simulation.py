"""Discrete-event simulation: vehicle events, request batches, conflict resolution."""
from __future__ import annotations

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chrouting import ContractionHierarchy
from .dispatch import CostParameters, Dispatcher, MeetingPointSet, Request
from .fleet import Insertion, StopVisit, Vehicle, validate_route
from .modechoice import (
    ModeParams,
    NoAvailableMode,
    NoTransit,
    PTProvider,
    build_offers,
    choice_probabilities,
    default_mode_params,
    sample_mode,
    walking_time,
)
from .netgraph import INF, AStarRouter, RoadGraph

logger = logging.getLogger(__name__)

# event classes, in processing order at equal timestamps
VEHICLE, REQUEST, BATCH = 0, 1, 2
STARTUP, REACHED, SHUTDOWN = 0, 1, 2


@dataclass
class SimulationConfig:
    t_batch: int = 5  # 0 dispatches every request on arrival
    threads: int = 1
    seed: int = 0
    meeting_points: bool = True
    debug_checks: bool = False
    check_indices: bool = False

    def __post_init__(self):
        if self.t_batch < 0:
            raise ValueError("t_batch must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class Outcome:
    request_id: int
    t_req: int
    origin: int
    destination: int
    category: str = ""
    mode: str = "undecided"
    decided_at: int = -1
    postponed: int = 0
    car_available: bool = False
    car_time: int = INF
    walk_time: int = -1
    num_pickups: int = 1
    num_dropoffs: int = 1
    vehicle_id: int = -1
    pickup_edge: int = -1
    dropoff_edge: int = -1
    access: int = 0
    egress: int = 0
    offered_pickup: int = -1  # T_p
    offered_dropoff: int = -1
    offered_trip: int = -1  # T_t
    latest_pickup: int = -1
    latest_arrival: int = -1
    actual_pickup: int = -1
    actual_dropoff: int = -1


@dataclass
class SimulationLog:
    outcomes: list[Outcome]
    visits: list[StopVisit]
    vehicles: list[Vehicle]
    window: tuple[int, int]
    timing: dict[str, float] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)


class Simulation:
    def __init__(self, ch: ContractionHierarchy, ped: RoadGraph | None, vehicles: list[Vehicle],
                 requests: list[Request], params: CostParameters | None = None,
                 mode_params: dict[str, ModeParams] | None = None, pt: PTProvider | None = None,
                 config: SimulationConfig | None = None, search_hook=None):
        self.ch = ch
        self.road = ch.graph
        self.ped = ped
        self.vehicles = sorted(vehicles, key=lambda v: v.id)
        self.requests = sorted(requests, key=lambda r: (r.t_req, r.id))
        self.params = params or CostParameters()
        self.mode_params = mode_params or default_mode_params()
        self.pt = pt or NoTransit()
        self.config = config or SimulationConfig()
        self.search_hook = search_hook
        self.dispatcher = Dispatcher(ch, self.params)
        self.walk_router = AStarRouter(ped) if ped is not None else None
        if len({r.id for r in requests}) != len(requests):
            raise ValueError("duplicate request ids")
        if len({v.id for v in vehicles}) != len(vehicles):
            raise ValueError("duplicate vehicle ids")
        for v in vehicles:
            if not 0 <= v.initial_edge < self.road.num_edges:
                raise ValueError(f"vehicle {v.id}: unknown initial edge")

        self._events: list = []
        self._seq = 0
        self._next_reached: dict[int, tuple[int, int]] = {}
        self._pending: list[Request] = []
        self._batch_at: int | None = None
        self._rng: dict[int, np.random.Generator] = {}
        self._mps: dict[int, MeetingPointSet] = {}
        self.outcomes: dict[int, Outcome] = {}
        self.visits: list[StopVisit] = []
        self.problems: list[str] = []
        self.timing = {"find_insertion": 0.0, "mode_choice": 0.0, "update": 0.0, "total": 0.0}
        self.counters = {"batches": 0, "iterations": 0, "searches": 0}

    # --------------------------------------------------------------- events
    def _push(self, t: int, cls: int, key: tuple, payload) -> None:
        heapq.heappush(self._events, (t, cls, key, self._seq, payload))
        self._seq += 1

    def run(self) -> SimulationLog:
        t0 = time.perf_counter()
        for v in self.vehicles:
            self._push(v.t_serv_min, VEHICLE, (STARTUP, v.id), v)
            self._push(v.t_serv_max, VEHICLE, (SHUTDOWN, v.id), v)
        for r in self.requests:
            self._push(r.t_req, REQUEST, (r.id,), r)
        pool = ThreadPoolExecutor(self.config.threads) if self.config.threads > 1 else None
        try:
            while self._events:
                t, cls, key, _, payload = heapq.heappop(self._events)
                if cls == VEHICLE:
                    self._vehicle_event(t, key[0], payload)
                elif cls == REQUEST:
                    self._request_event(t, payload, pool)
                else:
                    self._batch_event(t, pool)
        finally:
            if pool is not None:
                pool.shutdown()
        self.timing["total"] = time.perf_counter() - t0
        for v in self.visits:
            for r in v.boarding:
                self.outcomes[r].actual_pickup = v.dep
            for r in v.alighting:
                self.outcomes[r].actual_dropoff = v.arr
        if self.requests:
            window = (self.requests[0].t_req, self.requests[-1].t_req)
        else:
            window = (0, 0)
        visits = sorted(self.visits, key=lambda v: v.vehicle_id)  # stable: execution order per vehicle
        return SimulationLog([self.outcomes[r] for r in sorted(self.outcomes)], visits, self.vehicles,
                             window, dict(self.timing), dict(self.counters), list(self.problems))

    def _vehicle_event(self, t: int, kind: int, payload) -> None:
        disp = self.dispatcher
        if kind == STARTUP:
            disp.add_vehicle(payload, t)
            return
        if kind == SHUTDOWN:
            route = disp.routes.get(payload.id)
            if route is None:
                return
            if route.k >= 1:  # stops still planned (only possible with dwell at the end)
                self._push(max(t + 1, route.stops[-1].dep), VEHICLE, (SHUTDOWN, payload.id), payload)
                return
            self.visits.append(disp.remove_vehicle(payload.id))
            self._next_reached.pop(payload.id, None)
            return
        vid, sid = payload
        if self._next_reached.get(vid) != (sid, t):
            return  # superseded by a later insertion
        del self._next_reached[vid]
        t1 = time.perf_counter()
        visit, _ = disp.advance(vid, t)
        self.visits.append(visit)
        self._schedule_reached(vid)
        if self.config.debug_checks:
            self._check(vid)
        self.timing["update"] += time.perf_counter() - t1

    def _schedule_reached(self, vid: int) -> None:
        route = self.dispatcher.routes[vid]
        if route.k >= 1:
            s1 = route.stops[1]
            key = (s1.id, s1.arr)
            if self._next_reached.get(vid) != key:
                self._next_reached[vid] = key
                self._push(s1.arr, VEHICLE, (REACHED, vid), (vid, s1.id))
        else:
            self._next_reached.pop(vid, None)

    def _request_event(self, t: int, req: Request, pool) -> None:
        rng = np.random.default_rng([self.config.seed, req.id])
        self._rng[req.id] = rng
        out = Outcome(req.id, req.t_req, req.origin, req.destination, req.category)
        out.car_available = bool(rng.random() < req.car_prob)
        self.outcomes[req.id] = out
        if self.config.t_batch == 0:
            self.dispatch_batch([req], t, pool)
            return
        self._pending.append(req)
        if self._batch_at is None:
            tb = self.config.t_batch
            self._batch_at = -(-t // tb) * tb
            self._push(self._batch_at, BATCH, (), None)

    def _batch_event(self, t: int, pool) -> None:
        batch, self._pending = self._pending, []
        self._batch_at = None
        if batch:
            self.dispatch_batch(batch, t, pool)

    # ------------------------------------------------------------- dispatch
    def _meeting_points(self, req: Request) -> MeetingPointSet:
        mps = self._mps.get(req.id)
        if mps is None:
            if not self.config.meeting_points:
                mps = MeetingPointSet([(req.origin, 0)], [(req.destination, 0)])
            else:
                mps = self.dispatcher.meeting_points(req, self.ped)
            self._mps[req.id] = mps
        return mps

    def _search(self, req: Request, now: int):
        mps = self._meeting_points(req)
        return mps, self.dispatcher.find_best_insertion(req, mps, now)

    def dispatch_batch(self, batch: list[Request], now: int, pool=None) -> None:
        """Resolve a batch: parallel searches, then one winner per vehicle per iteration."""
        self.counters["batches"] += 1
        disp = self.dispatcher
        pending = sorted(batch, key=lambda r: r.id)
        while pending:
            self.counters["iterations"] += 1
            t1 = time.perf_counter()
            with disp.read_phase():
                if pool is not None and len(pending) > 1:
                    found = list(pool.map(lambda r: self._search(r, now), pending))
                else:
                    found = [self._search(r, now) for r in pending]
                if self.search_hook is not None:
                    for r, (mps, ins) in zip(pending, found):
                        self.search_hook(r, mps, now, ins, disp)
            self.counters["searches"] += len(pending)
            self.timing["find_insertion"] += time.perf_counter() - t1

            t2 = time.perf_counter()
            groups: dict[int, list[tuple[Request, Insertion]]] = {}
            for r, (mps, ins) in zip(pending, found):
                out = self.outcomes[r.id]
                out.num_pickups, out.num_dropoffs = len(mps.pickups), len(mps.dropoffs)
                if ins is None:
                    self._decide(r, None, now)
                else:
                    groups.setdefault(ins.vehicle_id, []).append((r, ins))
            winners: list[Insertion] = []
            postponed: list[Request] = []
            for vid in sorted(groups):
                members = groups[vid]
                for idx, (r, ins) in enumerate(members):
                    if self._decide(r, ins, now) == "rp":
                        winners.append(ins)
                        postponed.extend(m[0] for m in members[idx + 1:])
                        break
            self.timing["mode_choice"] += time.perf_counter() - t2

            t3 = time.perf_counter()
            for ins in winners:
                delta = disp.apply(ins, now)
                self.visits.extend(delta.visits)
                rider = disp.routes[ins.vehicle_id].riders[ins.request_id]
                out = self.outcomes[ins.request_id]
                out.vehicle_id = ins.vehicle_id
                out.pickup_edge, out.dropoff_edge = ins.pickup, ins.dropoff
                out.access, out.egress = ins.access, ins.egress
                out.offered_pickup = rider.accepted_pickup
                out.offered_trip = rider.accepted_trip
                out.offered_dropoff = rider.t_req + rider.accepted_trip - rider.egress
                out.latest_pickup = rider.latest_pickup
                out.latest_arrival = rider.latest_arrival
                self._schedule_reached(ins.vehicle_id)
                if self.config.debug_checks:
                    self._check(ins.vehicle_id)
            if self.config.check_indices:
                self._check_indices()
            for r in postponed:
                self.outcomes[r.id].postponed += 1
            pending = sorted(postponed, key=lambda r: r.id)
            self.timing["update"] += time.perf_counter() - t3

    def _decide(self, req: Request, ins: Insertion | None, now: int) -> str:
        out = self.outcomes[req.id]
        if out.car_time == INF:
            out.car_time = self.ch.edge_distance(req.origin, req.destination)
        if out.walk_time == -1:
            w = walking_time(self.ped, self.road, req.origin, req.destination, req.walk_speed, self.walk_router)
            out.walk_time = -2 if w is None else int(w)
        offers = build_offers(req, ins, self.ch, None, self.pt, out.car_available, out.car_time)
        if out.walk_time >= 0:
            offers[0].time, offers[0].available = out.walk_time, True
        try:
            probs = choice_probabilities(offers, self.mode_params)
        except NoAvailableMode:
            out.mode = "unservable"
            out.decided_at = now
            return out.mode
        out.mode = sample_mode(probs, self._rng[req.id])
        out.decided_at = now
        return out.mode

    # ---------------------------------------------------------------- debug
    def _check(self, vid: int) -> None:
        for msg in validate_route(self.dispatcher.routes[vid]):
            self.problems.append(f"vehicle {vid}: {msg}")

    def _check_indices(self) -> None:
        disp = self.dispatcher
        src, tgt, last = disp.rebuilt_indices()
        for name, a, b in (("src", src, disp.src), ("tgt", tgt, disp.tgt), ("last", last, disp.last)):
            if a.snapshot() != b.snapshot():
                self.problems.append(f"{name} index differs from rebuild")


def run(ch, ped, vehicles, requests, params=None, mode_params=None, pt=None, config=None, search_hook=None):
    return Simulation(ch, ped, vehicles, requests, params, mode_params, pt, config, search_hook).run()
