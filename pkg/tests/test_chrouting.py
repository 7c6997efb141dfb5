import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridepool.chrouting import (
    FROM_TARGETS,
    TO_TARGETS,
    BucketIndex,
    ContractionHierarchy,
    build_ch,
    ch_query,
    leg_ellipse,
)
from ridepool.netgraph import INF, RoadGraph, dijkstra
from ridepool.synth import random_graph

from conftest import path_graph


def edge_dist_oracle(g, a, b):
    if a == b:
        return 0
    d = dijkstra(g, g.head[a], targets=[g.tail[b]]).dist.get(g.tail[b])
    return INF if d is None else d + g.weight[b]


def test_path_shortcut_and_unpacking():
    g = path_graph((1, 1))
    ch = build_ch(g)
    d, path = ch_query(ch, 0, 2)
    assert (d, path) == (2, [0, 1])
    assert ch_query(ch, 1, 1) == (0, [])
    if ch.rank[1] < min(ch.rank[0], ch.rank[2]):
        assert ch.num_shortcuts == 1 and ch.via[(0, 2)] == 1


def test_no_shortcuts_across_components():
    g = RoadGraph("vehicle", list(range(6)), np.zeros(6), np.zeros(6), list(range(4)),
                  [0, 1, 3, 4], [1, 2, 4, 5], [1, 1, 2, 2])
    ch = build_ch(g)
    comp = {0: 0, 1: 0, 2: 0, 3: 1, 4: 1, 5: 1}
    for (u, w) in ch.via:
        assert comp[u] == comp[w]
    assert ch.distance(0, 5) == INF


@pytest.mark.parametrize("seed", range(5))
def test_random_graph_queries_match_dijkstra(seed):
    g = random_graph(300, seed=seed, kind="geometric" if seed % 2 == 0 else "uniform")
    ch = build_ch(g)
    rng = np.random.default_rng(seed)
    for s in rng.integers(0, 300, size=10):
        ref = dijkstra(g, int(s)).dist
        for t in rng.integers(0, 300, size=20):
            d, path = ch.query(int(s), int(t))
            assert d == ref.get(int(t), INF)
            if d < INF:
                assert g.path_weight(path) == d
                assert not path or (g.tail[path[0]] == s and g.head[path[-1]] == t)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 100_000))
def test_exhaustive_exactness_small_graphs(n, seed):
    g = random_graph(n, seed=seed, kind="uniform", degree=3, max_weight=20)
    ch = build_ch(g)
    for s in range(n):
        ref = dijkstra(g, s).dist
        for t in range(n):
            assert ch.distance(s, t) == ref.get(t, INF)


def test_grid_edge_queries(small_city):
    road, _, ch = small_city
    rng = np.random.default_rng(3)
    for a, b in rng.integers(0, road.num_edges, size=(200, 2)):
        d, path = ch.edge_query(int(a), int(b))
        assert d == edge_dist_oracle(road, int(a), int(b))
        if a != b:
            assert path[-1] == b and road.path_weight(path) == d


def test_cache_round_trip(tmp_path, small_city):
    road, _, ch = small_city
    ch.save(tmp_path / "ch.bin")
    again = ContractionHierarchy.load(tmp_path / "ch.bin", road)
    assert again.rank == ch.rank and again.distance(0, 50) == ch.distance(0, 50)
    other = path_graph((1, 2))
    with pytest.raises(ValueError):
        ContractionHierarchy.load(tmp_path / "ch.bin", other)


# ------------------------------------------------------------------ buckets


def test_path_bucket_one_to_many():
    g = path_graph((1, 1, 1))
    ch = build_ch(g)
    idx = BucketIndex(ch, TO_TARGETS)
    idx.insert_target(10, 1)  # edge b->c
    idx.insert_target(11, 2)  # edge c->d
    assert idx.one_to_many(0) == {10: 1, 11: 2}
    assert idx.one_to_many(1)[10] == 0  # own edge


@pytest.mark.parametrize("direction", [TO_TARGETS, FROM_TARGETS])
def test_unpruned_buckets_match_dijkstra_with_updates(small_city, direction):
    road, _, ch = small_city
    rng = np.random.default_rng(4)
    idx = BucketIndex(ch, direction)
    live = {}
    next_id = 0
    for step in range(60):
        if live and rng.random() < 0.35:
            tid = int(rng.choice(sorted(live)))
            idx.remove_target(tid)
            del live[tid]
        else:
            e = int(rng.integers(road.num_edges))
            idx.insert_target(next_id, e)
            live[next_id] = e
            next_id += 1
        x = int(rng.integers(road.num_edges))
        got = idx.one_to_many(x)
        for tid, e in live.items():
            ref = edge_dist_oracle(road, x, e) if direction == TO_TARGETS else edge_dist_oracle(road, e, x)
            assert got.get(tid, INF) == ref
    rebuilt = BucketIndex(ch, direction)
    for tid, e in live.items():
        rebuilt.insert_target(tid, e)
    assert rebuilt.snapshot() == idx.snapshot()


def test_insert_remove_round_trip(small_city):
    road, _, ch = small_city
    idx = BucketIndex(ch, TO_TARGETS)
    idx.insert_target(1, 5)
    before = idx.snapshot()
    idx.insert_target(2, 17)
    idx.remove_target(2)
    assert idx.snapshot() == before
    assert 1 in idx.one_to_many(40)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), bound=st.integers(0, 400))
def test_sorted_bound_scan_keeps_everything_within_bound(small_city, seed, bound):
    road, _, ch = small_city
    rng = np.random.default_rng(seed)
    full = BucketIndex(ch, FROM_TARGETS)
    srt = BucketIndex(ch, FROM_TARGETS, sorted_buckets=True)
    for tid, e in enumerate(rng.integers(0, road.num_edges, size=8)):
        full.insert_target(tid, int(e))
        srt.insert_target(tid, int(e))
    x = int(rng.integers(road.num_edges))
    ref = {t: d for t, d in full.one_to_many(x).items() if d <= bound}
    got = {t: d for t, d in srt.one_to_many(x, bound).items() if d <= bound}
    assert got == ref


def test_zero_leeway_ellipse_is_shortest_path(small_city):
    road, _, ch = small_city
    rng = np.random.default_rng(9)
    for a, b in rng.integers(0, road.num_edges, size=(20, 2)):
        a, b = int(a), int(b)
        leg, src, tgt = leg_ellipse(ch, a, b, 0)
        assert leg == edge_dist_oracle(road, a, b)
        fwd = dijkstra(road, road.head[a]).dist
        bwd = dijkstra(road, road.tail[b], reverse=True).dist
        for v in src:
            assert fwd[v] + bwd[v] + road.weight[b] == leg
        for v in tgt:
            assert fwd[v] + bwd[v] + road.weight[b] == leg


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), leeway=st.integers(0, 120))
def test_pruned_leg_buckets_keep_every_feasible_detour(small_city, seed, leeway):
    road, _, ch = small_city
    rng = np.random.default_rng(seed)
    a, b, x = (int(v) for v in rng.integers(0, road.num_edges, size=3))
    leg, src, tgt = leg_ellipse(ch, a, b, leeway)
    if leg >= INF:
        return
    s_idx = BucketIndex(ch, FROM_TARGETS)
    t_idx = BucketIndex(ch, TO_TARGETS)
    s_idx.insert_target(0, a, src)
    t_idx.insert_target(0, b, tgt)
    d1, d2 = edge_dist_oracle(road, a, x), edge_dist_oracle(road, x, b)
    if d1 < INF and d2 < INF and d1 + d2 - leg <= leeway:
        assert s_idx.one_to_many(x).get(0) == d1
        assert t_idx.one_to_many(x).get(0) == d2
