from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool.demand import (
    INTERVAL,
    RequestFormatError,
    Resampler,
    bin_counts,
    derive_walk_radius,
    load_requests,
    reference_utility,
    resample_departures,
    resample_rows,
)
from ridepool.modechoice import ModeParams
from ridepool.netgraph import load_network, write_network


def coarse_times(counts, origin=0):
    return np.repeat(origin + INTERVAL * np.arange(len(counts)), counts)


def exact_weights(counts):
    """Per-second weights from the interpolation rule in exact arithmetic, evaluated at second midpoints."""
    m = [Fraction(n, INTERVAL) for n in counts]
    m = [m[0]] + m + [m[-1]]
    out = []
    for i in range(len(counts)):  # interval i spans [450 + 900 (i - 1), 450 + 900 i) around its centre 900 i
        for x in range(INTERVAL):
            pos = Fraction(2 * x + 1, 2) - INTERVAL // 2  # offset from centre i
            if pos < 0:
                lo, c = i, pos + INTERVAL
            else:
                lo, c = i + 1, pos
            out.append(m[lo] + (m[lo + 1] - m[lo]) * c / INTERVAL)
    return out


def test_constant_demand_gives_constant_weights():
    res = Resampler.fit(coarse_times([450, 450, 450]))
    xs, w = res.weights()
    assert np.allclose(w, 0.5, atol=1e-15) and len(xs) == 3 * INTERVAL


def test_two_interval_closed_form():
    res = Resampler.fit(coarse_times([900, 1800], origin=3600))
    xs, w = res.weights()
    assert res.window == (3150, 4950)
    exact = exact_weights([900, 1800])
    assert sum(exact) == 2700
    assert np.allclose(w, [float(v) for v in exact], atol=1e-12)
    assert w.sum() == pytest.approx(2700, abs=1e-9)
    first_half = w[: INTERVAL // 2]
    rise = w[INTERVAL // 2: INTERVAL + INTERVAL // 2]
    assert np.all(first_half == 1.0) and np.all(w[-INTERVAL // 2:] == 2.0)
    assert np.all(np.diff(rise) > 0) and 1.0 < rise[0] < rise[-1] < 2.0
    assert np.allclose(np.diff(rise), 1 / INTERVAL)


def test_expected_interval_counts_by_monte_carlo():
    counts = [40, 90, 160, 220, 160, 90, 40]
    times = coarse_times(counts)
    res = Resampler.fit(times)
    xs, w = res.weights()
    expected = np.add.reduceat(w, np.arange(0, len(w), INTERVAL))
    seeds = 100
    got = np.mean([bin_counts(resample_departures(times, s), res.origin, len(counts)) for s in range(seeds)], axis=0)
    p = expected / expected.sum()
    sigma = np.sqrt(len(times) * p * (1 - p) / seeds)
    assert np.all(np.abs(got - expected) <= 3 * sigma)


@settings(max_examples=60, deadline=None)
@given(counts=st.lists(st.integers(0, 60), min_size=1, max_size=8).filter(lambda c: sum(c) > 0),
       origin=st.integers(0, 40).map(lambda k: 900 * k), seed=st.integers(0, 2**32 - 1))
def test_resampling_properties(counts, origin, seed):
    times = coarse_times(counts, origin)
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(times)
    new = resample_departures(shuffled, seed)
    assert len(new) == len(shuffled)
    res = Resampler.fit(shuffled)
    lo, hi = res.window
    assert np.all((new >= lo) & (new < hi))
    order = np.argsort(shuffled, kind="stable")
    assert np.all(np.diff(new[order]) >= 0)
    assert res.weights()[1].sum() == pytest.approx(len(times), rel=1e-12)
    assert np.array_equal(new, resample_departures(shuffled, seed))


def test_empty_request_set_rejected():
    with pytest.raises(ValueError):
        resample_departures([], 1)


def test_resample_rows_only_rewrites_times():
    rows = [{"id": str(i), "origin_edge": "1", "dest_edge": "2", "t_req_s": str(t)} for i, t in enumerate([900, 0, 900])]
    out = resample_rows(rows, 3)
    assert [r["id"] for r in out] == ["0", "1", "2"]
    assert int(out[1]["t_req_s"]) <= min(int(out[0]["t_req_s"]), int(out[2]["t_req_s"]))
    assert rows[0]["t_req_s"] == "900"


def test_walk_radius_examples():
    assert derive_walk_radius(1.25, -0.005, -1.8, fraction=0.0) == 0.0
    assert derive_walk_radius(1.25, 0.0, -1.8, cap_m=400) == 400
    assert derive_walk_radius(1.25, -0.005, -1.8, fraction=0.5) == pytest.approx(225.0, abs=1e-9)
    assert derive_walk_radius(1.25, -0.005, -10.0, cap_m=500) == 500
    with pytest.raises(ValueError):
        derive_walk_radius(0.0, -0.005, -1.8)


def test_default_reference_trip_radius_in_band():
    params = {"rp": ModeParams(alpha=0.0, beta_t=-0.0015, beta_w=-0.0020, beta_acc=-0.0040)}
    u = reference_utility(params, 600, 300)
    assert u == pytest.approx(-1.5)
    assert 200 <= derive_walk_radius(1.25, -0.004, u) <= 250


@given(speed=st.floats(0.1, 3.0), k=st.floats(0.1, 4.0))
def test_walk_radius_linear_in_speed(speed, k):
    r1 = derive_walk_radius(speed, -0.004, -1.5, cap_m=1e9)
    r2 = derive_walk_radius(speed * k, -0.004, -1.5, cap_m=1e9)
    assert r2 == pytest.approx(k * r1, rel=1e-12)


@pytest.fixture
def tiny_network(tmp_path):
    write_network(tmp_path / "net", [(0, 49.0, 8.0), (1, 49.001, 8.0)],
                  [(10, 0, 1, 12, 100, 1, 1), (11, 1, 0, 12, 100, 1, 1)])
    road, _ = load_network(tmp_path / "net")
    return tmp_path, road


HEADER = "id,origin_edge,dest_edge,t_req_s,walk_speed_mps,max_walk_m,car_prob,category\n"


def test_load_requests_defaults(tiny_network):
    tmp, road = tiny_network
    (tmp / "r.csv").write_text(HEADER + "1,10,11,30,,,,\n2,11,10,40,1.4,120,0.25,outer\n")
    a, b = load_requests(tmp / "r.csv", road, default_walk_radius=234.0, default_speed=1.25)
    assert (a.origin, a.destination, a.t_req) == (road.edge_index[10], road.edge_index[11], 30)
    assert (a.max_walk, a.walk_speed, a.car_prob, a.category) == (234.0, 1.25, 1.0, "")
    assert (b.max_walk, b.walk_speed, b.car_prob, b.category) == (120.0, 1.4, 0.25, "outer")


@pytest.mark.parametrize("body, message", [
    ("1,10,99,0,,,,\n", "r.csv:2: unknown edge"),
    ("1,10,11,0,,,,\n1,11,10,5,,,,\n", "duplicate request id 1"),
    ("1,10,11,0,,,1.5,\n", "car_prob"),
    ("1,10,11,soon,,,,\n", "r.csv:2"),
])
def test_load_requests_errors(tiny_network, body, message):
    tmp, road = tiny_network
    (tmp / "r.csv").write_text(HEADER + body)
    with pytest.raises(RequestFormatError, match=message):
        load_requests(tmp / "r.csv", road)


def test_bad_header(tiny_network):
    tmp, road = tiny_network
    (tmp / "r.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(RequestFormatError, match="header"):
        load_requests(tmp / "r.csv", road)
