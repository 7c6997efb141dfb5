"""Contraction hierarchies with bucket-based one-to-many queries.

The hierarchy is built once per road graph.  ``BucketIndex`` keeps per-vertex
entries for a dynamic set of targets (vehicle stops) so that one upward
search from a query location finds distances to all of them.
"""
from __future__ import annotations

import bisect
import hashlib
import heapq
import logging
import math
import pickle
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .netgraph import INF, RoadGraph

logger = logging.getLogger(__name__)

WITNESS_HOP_LIMIT = 16
WITNESS_SETTLE_LIMIT = 500

CACHE_MAGIC = b"RPCH"
CACHE_VERSION = 1


@dataclass
class ContractionHierarchy:
    """Shortcut-augmented graph split into upward and downward halves.

    ``up_out[v]``  : (w, weight) with rank[w] > rank[v]   (forward, upward)
    ``down_in[v]`` : (u, weight) with rank[u] > rank[v]   (edge u -> v, downward)
    ``via[(u, w)]``: middle vertex of a shortcut, or ``-(e + 1)`` for input edge e.
    """

    graph: RoadGraph
    rank: list[int]
    up_out: list[list[tuple[int, int]]]
    down_in: list[list[tuple[int, int]]]
    via: dict[tuple[int, int], int]
    num_shortcuts: int = 0

    # ------------------------------------------------------------- searches
    def up_search(self, source: int, bound: float | None = None) -> dict[int, int]:
        """Dijkstra over upward edges from ``source`` (full search space unless bounded)."""
        return _restricted_search(self.up_out, source, bound)

    def down_search(self, target: int, bound: float | None = None) -> dict[int, int]:
        """Reverse Dijkstra over downward edges into ``target``."""
        return _restricted_search(self.down_in, target, bound)

    def query(self, s: int, t: int) -> tuple[int, list[int]]:
        """Vertex-to-vertex distance and unpacked edge path; (INF, []) if unreachable."""
        if s == t:
            return 0, []
        dist, meet, fpar, bpar = self._bidirectional(s, t)
        if meet is None:
            return INF, []
        vertices = []
        v = meet
        while v != s:
            vertices.append(v)
            v = fpar[v]
        vertices.append(s)
        vertices.reverse()
        v = meet
        while v != t:
            v = bpar[v]
            vertices.append(v)
        edges = []
        for a, b in zip(vertices, vertices[1:]):
            self._unpack(a, b, edges)
        return dist, edges

    def distance(self, s: int, t: int) -> int:
        if s == t:
            return 0
        return self._bidirectional(s, t)[0]

    def edge_query(self, source_edge: int, target_edge: int) -> tuple[int, list[int]]:
        """Location distance: from the head of ``source_edge`` through all of ``target_edge``."""
        g = self.graph
        if source_edge == target_edge:
            return 0, []
        d, path = self.query(g.head[source_edge], g.tail[target_edge])
        if d >= INF:
            return INF, []
        return d + g.weight[target_edge], path + [target_edge]

    def edge_distance(self, source_edge: int, target_edge: int) -> int:
        g = self.graph
        if source_edge == target_edge:
            return 0
        d = self.distance(g.head[source_edge], g.tail[target_edge])
        return INF if d >= INF else d + g.weight[target_edge]

    def _bidirectional(self, s, t):
        fd, bd = {s: 0}, {t: 0}
        fpar, bpar = {}, {}
        fheap, bheap = [(0, s)], [(0, t)]
        fdone, bdone = set(), set()
        best, meet = INF, None
        while fheap or bheap:
            fmin = fheap[0][0] if fheap else INF
            bmin = bheap[0][0] if bheap else INF
            if min(fmin, bmin) >= best:
                break
            if fmin <= bmin:
                heap, dist, done, par, adj, other = fheap, fd, fdone, fpar, self.up_out, bd
            else:
                heap, dist, done, par, adj, other = bheap, bd, bdone, bpar, self.down_in, fd
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u in other and d + other[u] < best:
                best, meet = d + other[u], u
            for w, wt in adj[u]:
                nd = d + wt
                if nd < dist.get(w, INF):
                    dist[w] = nd
                    par[w] = u
                    heapq.heappush(heap, (nd, w))
        return best, meet, fpar, bpar

    def _unpack(self, a: int, b: int, out: list[int]) -> None:
        stack = [(a, b)]
        while stack:
            u, w = stack.pop()
            x = self.via[(u, w)]
            if x < 0:
                out.append(-x - 1)
            else:
                stack.append((x, w))
                stack.append((u, x))

    def unpack_edge(self, u: int, w: int) -> list[int]:
        out: list[int] = []
        self._unpack(u, w, out)
        return out

    # ------------------------------------------------------------ cache I/O
    def save(self, path: Path | str) -> None:
        payload = pickle.dumps(
            {
                "fingerprint": graph_fingerprint(self.graph),
                "rank": self.rank,
                "up_out": self.up_out,
                "down_in": self.down_in,
                "via": self.via,
                "num_shortcuts": self.num_shortcuts,
            },
            protocol=pickle.HIGHEST_PROTOCOL,
        )
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC + CACHE_VERSION.to_bytes(2, "little"))
            fh.write(payload)

    @classmethod
    def load(cls, path: Path | str, graph: RoadGraph) -> "ContractionHierarchy":
        with open(path, "rb") as fh:
            head = fh.read(6)
            if head[:4] != CACHE_MAGIC:
                raise ValueError(f"{path}: not a CH cache file")
            version = int.from_bytes(head[4:6], "little")
            if version != CACHE_VERSION:
                raise ValueError(f"{path}: unsupported CH cache version {version}")
            data = pickle.loads(fh.read())
        if data["fingerprint"] != graph_fingerprint(graph):
            raise ValueError(f"{path}: CH cache was built for a different graph")
        return cls(graph, data["rank"], data["up_out"], data["down_in"], data["via"], data["num_shortcuts"])


def graph_fingerprint(graph: RoadGraph) -> str:
    h = hashlib.sha256()
    h.update(repr((graph.num_vertices, graph.tail, graph.head, graph.weight)).encode())
    return h.hexdigest()


def _restricted_search(adj, source, bound=None) -> dict[int, int]:
    dist = {source: 0}
    done = {}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if bound is not None and d > bound:
            break
        done[u] = d
        for w, wt in adj[u]:
            nd = d + wt
            if nd < dist.get(w, INF):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return done


# ------------------------------------------------------------------ build


def _witness_search(out, source, skip, targets, max_dist):
    """Hop- and settle-limited Dijkstra in the remaining graph avoiding ``skip``."""
    dist = {source: 0}
    hops = {source: 0}
    heap = [(0, source)]
    settled = 0
    pending = set(targets)
    done = set()
    while heap and pending:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if d > max_dist:
            break
        done.add(u)
        pending.discard(u)
        settled += 1
        if settled > WITNESS_SETTLE_LIMIT:
            break
        h = hops[u]
        if h >= WITNESS_HOP_LIMIT:
            continue
        for w, (wt, _) in out[u].items():
            if w == skip:
                continue
            nd = d + wt
            if nd < dist.get(w, INF):
                dist[w] = nd
                hops[w] = h + 1
                heapq.heappush(heap, (nd, w))
    return dist


def _shortcuts_for(out, inc, v):
    """Shortcuts required when contracting ``v``: list of (u, w, weight)."""
    result = []
    outs = out[v]
    if not outs:
        return result
    max_out = max(wt for wt, _ in outs.values())
    for u, (wu, _) in inc[v].items():
        targets = [w for w in outs if w != u]
        if not targets:
            continue
        dist = _witness_search(out, u, v, targets, wu + max_out)
        for w in targets:
            via_d = wu + outs[w][0]
            if dist.get(w, INF) > via_d:
                result.append((u, w, via_d))
    return result


def build_ch(graph: RoadGraph) -> ContractionHierarchy:
    """Contract vertices in lazy order of (edge difference + contracted neighbours).

    Deterministic for a given graph: ties are broken by vertex index.
    """
    n = graph.num_vertices
    out: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    inc: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    for e, (u, v, w) in enumerate(zip(graph.tail, graph.head, graph.weight)):
        if u == v:
            continue
        if v not in out[u] or w < out[u][v][0]:
            out[u][v] = (w, -(e + 1))
            inc[v][u] = (w, -(e + 1))

    contracted_nb = [0] * n

    def priority(v):
        sc = _shortcuts_for(out, inc, v)
        return len(sc) - len(out[v]) - len(inc[v]) + contracted_nb[v], sc

    heap = [(priority(v)[0], v) for v in range(n)]
    heapq.heapify(heap)
    rank = [-1] * n
    up_out: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    down_in: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    via: dict[tuple[int, int], int] = {}
    next_rank = 0
    num_shortcuts = 0

    while heap:
        p, v = heapq.heappop(heap)
        if rank[v] >= 0:
            continue
        newp, shortcuts = priority(v)
        if heap and newp > heap[0][0]:
            heapq.heappush(heap, (newp, v))
            continue
        rank[v] = next_rank
        next_rank += 1
        for w, (wt, x) in out[v].items():
            up_out[v].append((w, wt))
            via[(v, w)] = x
        for u, (wt, x) in inc[v].items():
            down_in[v].append((u, wt))
            via[(u, v)] = x
        for u, w, wt in shortcuts:
            cur = out[u].get(w)
            if cur is None or wt < cur[0]:
                out[u][w] = (wt, v)
                inc[w][u] = (wt, v)
                num_shortcuts += 1
        neighbours = set(out[v]) | set(inc[v])
        for w in out[v]:
            del inc[w][v]
        for u in inc[v]:
            del out[u][v]
        out[v] = {}
        inc[v] = {}
        for nb in neighbours:
            contracted_nb[nb] += 1
    for v in range(n):
        up_out[v].sort()
        down_in[v].sort()
    logger.info("built CH: %d vertices, %d shortcuts", n, num_shortcuts)
    return ContractionHierarchy(graph, rank, up_out, down_in, via, num_shortcuts)


def ch_query(ch: ContractionHierarchy, s: int, t: int) -> tuple[int, list[int]]:
    return ch.query(s, t)


# ---------------------------------------------------------------- ellipses


def leg_ellipse(ch: ContractionHierarchy, from_edge: int, to_edge: int, leeway: float):
    """Bucket vertices for the leg ``from_edge -> to_edge`` under a detour budget.

    Returns ``(leg_dist, src, tgt)`` where ``src`` maps vertex v to
    d_up(from, v) for every v in the upward space of ``from_edge`` with
    dist(from, v) + dist(v, to) - leg_dist <= leeway, and ``tgt`` maps v to
    the downward location distance d_down(v, to) under the same test.  The
    second distance in each test is exact, obtained by a DP over the other
    search space in decreasing rank order.
    """
    g = ch.graph
    rank = ch.rank
    ell_to = g.weight[to_edge]
    up = ch.up_search(g.head[from_edge])
    down = ch.down_search(g.tail[to_edge])

    if from_edge == to_edge:
        leg = 0
    else:
        leg = min((d + down[v] for v, d in up.items() if v in down), default=INF)
        if leg < INF:
            leg += ell_to
    if leg >= INF or leeway < 0:
        return leg, {}, {}
    budget = leg + leeway

    # dist(v, tail(to)) for v in the upward space
    to_dist: dict[int, float] = {}
    for v in sorted(up, key=rank.__getitem__, reverse=True):
        best = down.get(v, math.inf)
        for w, wt in ch.up_out[v]:
            fw = to_dist.get(w)
            if fw is not None and fw + wt < best:
                best = fw + wt
        to_dist[v] = best
    src = {v: d for v, d in up.items() if d + to_dist[v] + ell_to <= budget}

    # dist(head(from), v) for v in the downward space
    from_dist: dict[int, float] = {}
    for v in sorted(down, key=rank.__getitem__, reverse=True):
        best = up.get(v, math.inf)
        for u, wt in ch.down_in[v]:
            fu = from_dist.get(u)
            if fu is not None and fu + wt < best:
                best = fu + wt
        from_dist[v] = best
    tgt = {v: d + ell_to for v, d in down.items() if from_dist[v] + d + ell_to <= budget}
    return leg, src, tgt


# ----------------------------------------------------------------- buckets

FROM_TARGETS = "from-targets"  # entries hold dist(target -> v); queries yield dist(target -> x)
TO_TARGETS = "to-targets"  # entries hold dist(v -> target); queries yield dist(x -> target)


class BucketIndex:
    """Per-vertex bucket entries ``(dist, target_id)`` for a dynamic target set.

    Sorted indices keep each bucket ordered by distance so scans can stop at
    a cost bound.  Not internally synchronised: readers and the single writer
    must be phase-separated by the caller.
    """

    def __init__(self, ch: ContractionHierarchy, direction: str, sorted_buckets: bool = False):
        if direction not in (FROM_TARGETS, TO_TARGETS):
            raise ValueError(f"unknown direction {direction!r}")
        self.ch = ch
        self.direction = direction
        self.sorted = sorted_buckets
        self.buckets: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.target_vertices: dict[int, list[int]] = {}
        self.target_edge: dict[int, int] = {}
        self.edge_targets: dict[int, set[int]] = defaultdict(set)

    def __contains__(self, target_id: int) -> bool:
        return target_id in self.target_vertices

    def __len__(self) -> int:
        return len(self.target_vertices)

    def num_entries(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def _search_space(self, edge: int) -> dict[int, int]:
        g = self.ch.graph
        if self.direction == FROM_TARGETS:
            return self.ch.up_search(g.head[edge])
        return {v: d + g.weight[edge] for v, d in self.ch.down_search(g.tail[edge]).items()}

    def insert_target(self, target_id: int, edge: int, entries: dict[int, int] | None = None) -> None:
        """Add bucket entries for ``target_id`` located at ``edge``.

        ``entries`` (vertex -> distance) overrides the full search space, e.g.
        with the pruned output of :func:`leg_ellipse`.
        """
        if target_id in self.target_vertices:
            raise KeyError(f"target {target_id} already indexed")
        if entries is None:
            entries = self._search_space(edge)
        verts = []
        for v, d in entries.items():
            bucket = self.buckets[v]
            if self.sorted:
                bisect.insort(bucket, (d, target_id))
            else:
                bucket.append((d, target_id))
            verts.append((v, d))
        self.target_vertices[target_id] = verts
        self.target_edge[target_id] = edge
        self.edge_targets[edge].add(target_id)

    def remove_target(self, target_id: int) -> None:
        verts = self.target_vertices.pop(target_id, None)
        if verts is None:
            raise KeyError(f"unknown target {target_id}")
        for v, d in verts:
            bucket = self.buckets[v]
            entry = (d, target_id)
            if self.sorted:
                del bucket[bisect.bisect_left(bucket, entry)]
            else:
                bucket.remove(entry)
            if not bucket:
                del self.buckets[v]
        edge = self.target_edge.pop(target_id)
        self.edge_targets[edge].discard(target_id)
        if not self.edge_targets[edge]:
            del self.edge_targets[edge]

    def query_space(self, edge: int) -> tuple[dict[int, int], int]:
        """Search space of a query location and the additive term for its edge."""
        g = self.ch.graph
        if self.direction == FROM_TARGETS:
            return self.ch.down_search(g.tail[edge]), g.weight[edge]
        return self.ch.up_search(g.head[edge]), 0

    def scan(self, space: dict[int, int], extra: int, edge: int, bound: float | None = None) -> dict[int, int]:
        """Scan buckets of a precomputed query space; see :meth:`one_to_many`."""
        result: dict[int, int] = {}
        buckets = self.buckets
        for v, dv in space.items():
            bucket = buckets.get(v)
            if not bucket:
                continue
            base = dv + extra
            if self.sorted and bound is not None:
                for d, tid in bucket:
                    total = base + d
                    if total > bound:
                        break
                    if total < result.get(tid, INF):
                        result[tid] = total
            else:
                for d, tid in bucket:
                    total = base + d
                    if total < result.get(tid, INF):
                        result[tid] = total
        for tid in self.edge_targets.get(edge, ()):
            result[tid] = 0
        return result

    def one_to_many(self, edge: int, cost_bound: float | None = None) -> dict[int, int]:
        """Distances between the query location ``edge`` and all reachable targets.

        ``to-targets``: dist(edge -> target); ``from-targets``: dist(target -> edge).
        With ``cost_bound`` on a sorted index, targets farther than the bound
        may be missing; none within the bound is.
        """
        space, extra = self.query_space(edge)
        return self.scan(space, extra, edge, cost_bound)

    def snapshot(self) -> dict[int, tuple]:
        return {v: tuple(sorted(b)) for v, b in self.buckets.items() if b}
