import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool.chrouting import build_ch
from ridepool.dispatch import (
    CostParameters,
    Dispatcher,
    MeetingPointSet,
    Request,
    find_meeting_points,
    insertion_cost,
)
from ridepool.fleet import Vehicle, check_constraints, validate_route
from ridepool.netgraph import INF
from ridepool.oracle import csr_graph, exhaustive_best_insertion, matrix_best_cost
from ridepool.synth import grid_city


def advance_all(disp, now):
    for vid in sorted(disp.routes):
        route = disp.routes[vid]
        while route.k >= 1 and route.stops[1].arr <= now:
            disp.advance(vid, route.stops[1].arr)


def stream(disp, road, ped, seed, n, walk=150.0, gap=40, params=None, check=None):
    """Feed random requests, applying each best insertion; ``check(req, mps, now, ins)`` sees every search."""
    rng = np.random.default_rng(seed)
    now = 0
    for r in range(n):
        now += int(rng.integers(0, gap))
        advance_all(disp, now)
        req = Request(r, int(rng.integers(road.num_edges)), int(rng.integers(road.num_edges)), now, walk)
        mps = disp.meeting_points(req, ped)
        ins = disp.find_best_insertion(req, mps, now)
        if check is not None:
            check(req, mps, now, ins)
        if ins is not None:
            disp.apply(ins, now)
    return now


def fleet(disp, road, n, seed, capacity=4):
    rng = np.random.default_rng(seed)
    for v in range(n):
        disp.add_vehicle(Vehicle(v, int(rng.integers(road.num_edges)), capacity, 0, 100_000), 0)


def test_insertion_cost_examples():
    assert insertion_cost(600, 0, 120, 60) == 780
    assert insertion_cost(600, 30, 120, 60, CostParameters(detour_weight=0)) == 690
    assert insertion_cost(0, 0, 0, 0) == 0


def test_no_walking_gives_door_to_door(small_city):
    road, ped, ch = small_city
    req = Request(0, 5, 77, 0, max_walk=0)
    mps = find_meeting_points(req, ped, road)
    assert mps == MeetingPointSet([(5, 0)], [(77, 0)])
    assert Dispatcher(ch).meeting_points(req, ped) == mps


def test_meeting_points_on_100m_grid():
    road, ped = grid_city(9, 9, seed=0, footpath_fraction=0.0)
    origin = next(e for e in range(road.num_edges) if road.head[e] == 40)  # centre vertex
    dest = next(e for e in range(road.num_edges) if road.tail[e] == 40)
    req = Request(0, origin, dest, 0, max_walk=250, walk_speed=1.25)
    mps = find_meeting_points(req, ped, road)
    acc = dict(mps.pickups)
    assert set(acc.values()) == {0, 80, 160}

    def hops(v):
        return abs(v // 9 - 4) + abs(v % 9 - 4)

    expected = {e for e in range(road.num_edges) if hops(road.head[e]) <= 2}
    assert set(acc) == expected
    for e, t in acc.items():
        assert t == 80 * hops(road.head[e])
    egr = dict(mps.dropoffs)
    dhead = road.head[dest]
    assert set(egr) == {e for e in range(road.num_edges)
                        if abs(road.head[e] // 9 - dhead // 9) + abs(road.head[e] % 9 - dhead % 9) <= 2}


def test_single_idle_vehicle_at_origin(small_city):
    road, _, ch = small_city
    disp = Dispatcher(ch)
    disp.add_vehicle(Vehicle(0, 10, 4, 0, 10_000), 0)
    req = Request(0, 10, 90, 100)
    ins = disp.find_best_insertion(req, MeetingPointSet([(10, 0)], [(90, 0)]), 100)
    assert (ins.i, ins.j) == (0, 0)
    assert ins.t_detour == ch.edge_distance(10, 90) and ins.t_trip_plus == 0
    assert ins.pickup_time == 100 and ins.t_trip == ch.edge_distance(10, 90)


def test_nearer_idle_vehicle_wins(small_city):
    road, _, ch = small_city
    disp = Dispatcher(ch)
    near = next(e for e in range(road.num_edges) if road.head[e] == road.tail[30])
    far = max(range(road.num_edges), key=lambda e: ch.edge_distance(e, 30))
    disp.add_vehicle(Vehicle(0, far, 4, 0, 10_000), 0)
    disp.add_vehicle(Vehicle(1, near, 4, 0, 10_000), 0)
    ins = disp.find_best_insertion(Request(0, 30, 60, 0), MeetingPointSet([(30, 0)], [(60, 0)]), 0)
    assert ins.vehicle_id == 1


@pytest.mark.parametrize("seed, walk, capacity", [(1, 0.0, 4), (2, 150.0, 2), (3, 250.0, 4)])
def test_matches_exhaustive_enumeration(mid_city, seed, walk, capacity):
    road, ped, ch = mid_city
    matrix = csr_graph(road)
    disp = Dispatcher(ch)
    fleet(disp, road, 12, seed, capacity)
    seen = []

    def check(req, mps, now, ins):
        ref = exhaustive_best_insertion(disp.routes, road, matrix, req, mps, now, disp.params)
        assert (ins is None) == (ref is None)
        assert matrix_best_cost(disp.routes, road, matrix, req, mps, now, disp.params) == (ref and ref.cost)
        if ins is not None:
            assert ins.cost == ref.cost and ins.sort_key() == ref.sort_key()
            assert check_constraints(disp.routes[ins.vehicle_id], ins, now) == "feasible"
        seen.append(ins is not None)

    stream(disp, road, ped, seed, 60, walk=walk, gap=25, check=check)
    assert sum(seen) > 30
    assert max(r.k for r in disp.routes.values()) >= 2


def test_indices_equal_rebuild_after_random_updates(mid_city):
    road, ped, ch = mid_city
    disp = Dispatcher(ch)
    fleet(disp, road, 10, 5)
    now = stream(disp, road, ped, 5, 80, gap=20)
    src, tgt, last = disp.rebuilt_indices()
    assert src.snapshot() == disp.src.snapshot()
    assert tgt.snapshot() == disp.tgt.snapshot()
    assert last.snapshot() == disp.last.snapshot()
    for route in disp.routes.values():
        assert validate_route(route) == []
    # removed stops leave no entries behind
    live = {s.id for r in disp.routes.values() for s in r.stops}
    for idx in (disp.src, disp.tgt, disp.last):
        assert set(idx.target_vertices) <= live
    advance_all(disp, now + 10_000)
    assert all(r.idle for r in disp.routes.values())
    assert len(disp.src) == 0 and len(disp.tgt) == 0 and len(disp.last) == len(disp.routes)


def test_mutation_during_search_phase_raises(small_city):
    road, _, ch = small_city
    disp = Dispatcher(ch)
    disp.add_vehicle(Vehicle(0, 1, 4, 0, 10_000), 0)
    ins = disp.find_best_insertion(Request(0, 3, 50, 0), MeetingPointSet([(3, 0)], [(50, 0)]), 0)
    with disp.read_phase():
        with pytest.raises(RuntimeError):
            disp.apply(ins, 0)
    disp.apply(ins, 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_larger_walking_radius_never_costs_more(small_city, seed):
    road, ped, ch = small_city
    disp = Dispatcher(ch)
    fleet(disp, road, 6, seed)
    rng = np.random.default_rng(seed)
    stream(disp, road, ped, seed, 15, gap=30)
    now = 15 * 30
    advance_all(disp, now)
    o, d = (int(x) for x in rng.integers(0, road.num_edges, 2))
    costs = []
    for radius in (0.0, 120.0, 260.0):
        req = Request(999, o, d, now, radius)
        ins = disp.find_best_insertion(req, disp.meeting_points(req, ped), now)
        costs.append(ins.cost if ins else INF)
    assert costs[0] >= costs[1] >= costs[2]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_every_returned_insertion_is_feasible(small_city, seed):
    road, ped, ch = small_city
    disp = Dispatcher(ch, CostParameters(t_wait_max=300, alpha=1.2, beta=120))
    fleet(disp, road, 5, seed, capacity=2)

    def check(req, mps, now, ins):
        if ins is not None:
            assert check_constraints(disp.routes[ins.vehicle_id], ins, now) == "feasible"

    stream(disp, road, ped, seed, 25, gap=15, check=check)
    for route in disp.routes.values():
        assert validate_route(route) == []


@pytest.mark.parametrize("seed", [4, 5])
def test_enumerators_agree_with_dwell_and_short_shifts(small_city, seed):
    road, ped, ch = small_city
    matrix = csr_graph(road)
    params = CostParameters(dwell=20, t_wait_max=300, alpha=1.2, beta=120)
    disp = Dispatcher(ch, params)
    rng = np.random.default_rng(seed)
    for v in range(6):
        disp.add_vehicle(Vehicle(v, int(rng.integers(road.num_edges)), 2, 0, int(rng.integers(300, 1200))), 0)
    found = []

    def check(req, mps, now, ins):
        ref = exhaustive_best_insertion(disp.routes, road, matrix, req, mps, now, params)
        assert matrix_best_cost(disp.routes, road, matrix, req, mps, now, params) == (ref and ref.cost)
        assert (ins and ins.cost) == (ref and ref.cost)
        found.append(ref is not None)

    stream(disp, road, ped, seed, 80, walk=150.0, gap=30, check=check)
    assert 10 < sum(found) < len(found)
