import csv

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ridepool.fleet import StopVisit, Vehicle
from ridepool.metrics import (
    FleetRecord,
    RideRecord,
    compute_metrics,
    emit_reports,
    load_records,
    records_from_log,
    report,
    throughput,
)
from ridepool.simulation import Outcome, SimulationLog


def rp_outcome(rid, vid, t_req, pickup, dropoff, car, access=0, egress=0, offered_pickup=None, offered_trip=None):
    o = Outcome(rid, t_req, 0, 1, "center", mode="rp", vehicle_id=vid, car_time=car, access=access, egress=egress)
    o.actual_pickup, o.actual_dropoff = pickup, dropoff
    o.offered_pickup = pickup if offered_pickup is None else offered_pickup
    o.offered_trip = (dropoff - t_req + egress) if offered_trip is None else offered_trip
    return o


def test_single_rider_without_dead_mileage_has_occupancy_one():
    visits = [StopVisit(0, 1, 5, 0, 0, [7], [], 1), StopVisit(0, 2, 9, 300, 300, [], [7], 0)]
    log = SimulationLog([rp_outcome(7, 0, 0, 0, 300, 300)], visits, [Vehicle(0, 5, 4, 0, 1000)], (0, 0))
    rides, fleet = records_from_log(log)
    m = compute_metrics(rides, fleet, (0, 3600))
    assert m["occupancy"] == "1.000000"
    assert m["effectiveness"] == "1.000000"
    assert m["mean_ride_detour"] == "1.000000"
    assert fleet[0].driving == 300 and fleet[0].idle == 700
    assert rides[0].co_riders == 0.0 and rides[0].wait == 0


def test_effectiveness_ratio():
    hours = 3600
    rides = [RideRecord(i, "rp", "", 0, 25 * hours) for i in range(4)]
    fleet = [FleetRecord(0, 4, 0, 100 * hours, 64 * hours, 36 * hours, 64 * hours)]
    assert compute_metrics(rides, fleet, (0, 1))["effectiveness"] == "1.562500"


def test_throughput_statistic():
    assert round(throughput(975773, 3 * 3600), 2) == 90.35
    rides = [RideRecord(i, "car", "", 0, 1) for i in range(9)]
    assert compute_metrics(rides, [], (0, 3))["throughput_req_per_s"] == "3.000000"


def test_shared_ride_exposure_and_added_times():
    # rider 1 boards at 0, rider 2 at 100 (planned pickup 80), both alight at 400
    visits = [StopVisit(0, 1, 5, 0, 0, [1], [], 1), StopVisit(0, 2, 6, 100, 100, [2], [], 2),
              StopVisit(0, 3, 7, 400, 400, [], [1, 2], 0)]
    outs = [rp_outcome(1, 0, 0, 0, 400, 300, offered_trip=380),
            rp_outcome(2, 0, 50, 100, 400, 300, access=20, offered_pickup=80)]
    rides, fleet = records_from_log(SimulationLog(outs, visits, [Vehicle(0, 5, 4, 0, 1000)], (0, 50)))
    r1, r2 = rides
    assert r1.co_riders == pytest.approx(0.75) and r1.co_riders_max == 1
    assert r2.co_riders == 1.0
    assert (r2.wait, r2.added_wait, r2.trip_time) == (30, 20, 350)
    assert r1.added_trip == 20
    assert fleet[0].passenger_seconds == 100 + 2 * 300
    m = compute_metrics(rides, fleet, (0, 50))
    assert m["occupancy"] == "1.750000"


def test_no_riders_gives_undefined_markers():
    m = compute_metrics([RideRecord(0, "walk", "", 0, 100)], [], (0, 0))
    assert m["effectiveness"] == m["mean_ride_detour"] == m["occupancy"] == m["throughput_req_per_s"] == "NA"
    assert m["share_walk"] == "1.000000"


def test_empty_log_writes_headers_only(tmp_path):
    emit_reports([], [], (0, 0), tmp_path, visits=[])
    for name in ("assignments.csv", "distributions.csv", "by_category.csv", "fleet.csv", "stops.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == 1 and lines[0]
    rows = list(csv.reader(open(tmp_path / "metrics.csv")))
    assert rows[0] == ["key", "value"] and dict(rows[1:])["requests"] == "0"


modes = st.sampled_from(["walk", "car", "pt", "rp", "unservable"])


@st.composite
def ride_sets(draw):
    rides = []
    for i in range(draw(st.integers(0, 25))):
        mode = draw(modes)
        direct = draw(st.integers(0, 2000))
        r = RideRecord(i, mode, draw(st.sampled_from(["a", "b", ""])), draw(st.integers(0, 3600)), direct)
        if mode == "rp":
            r.vehicle_id = draw(st.integers(0, 3))
            r.access, r.egress, r.wait = (draw(st.integers(0, 300)) for _ in range(3))
            r.in_vehicle = draw(st.integers(1, 3000))
            r.trip_time = r.access + r.wait + r.in_vehicle + r.egress
            r.co_riders = draw(st.floats(0, 3)).__round__(6)
        rides.append(r)
    fleet = []
    for v in range(draw(st.integers(0, 4))):
        cap = draw(st.integers(1, 6))
        drive = draw(st.integers(0, 5000))
        fleet.append(FleetRecord(v, cap, 0, 10_000, drive, 10_000 - drive, draw(st.integers(0, cap)) * drive))
    return rides, fleet


@given(data=ride_sets())
def test_metric_invariants(data):
    rides, fleet = data
    m = compute_metrics(rides, fleet, (0, 3600))
    shares = [m[f"share_{k}"] for k in ("walk", "car", "pt", "rp")]
    if "NA" not in shares:
        assert abs(sum(map(float, shares)) - 1) < 1e-5
    if m["occupancy"] != "NA":
        assert 0 <= float(m["occupancy"]) <= max(f.capacity for f in fleet)
    if m["mean_ride_detour"] != "NA":
        assert float(m["mean_ride_detour"]) >= 0


def test_report_round_trip_is_byte_identical(tmp_path):
    rides = [RideRecord(0, "rp", "a", 10, 500, 1, 30, 20, 45, 600, 695, 40, 690, 5, 5, 0.333333, 1, 1),
             RideRecord(1, "car", "b", 12, 300), RideRecord(2, "unservable", "a", 20, 0)]
    fleet = [FleetRecord(1, 4, 0, 3600, 900, 2700, 1200)]
    emit_reports(rides, fleet, (0, 60), tmp_path / "run")
    rides2, fleet2, window = load_records(tmp_path / "run")
    assert rides2 == rides and fleet2 == fleet and window == (0, 60)
    report(tmp_path / "run", tmp_path / "again")
    for name in ("metrics.csv", "assignments.csv", "distributions.csv", "by_category.csv", "fleet.csv"):
        assert (tmp_path / "run" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
