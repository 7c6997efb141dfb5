"""Dispatch performance on a large synthetic city: per-request search time and thread speedup.

    python scripts/perf.py --grid 160 --vehicles 1000 --requests 100000 --threads 1 8
"""
import argparse
import statistics
import time

from ridepool.chrouting import build_ch
from ridepool.simulation import Simulation, SimulationConfig
from ridepool.synth import grid_city, random_fleet, random_requests


class TimedSimulation(Simulation):
    """Records the wall time of every insertion search."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.search_times: list[float] = []

    def _search(self, req, now):
        t0 = time.perf_counter()
        out = super()._search(req, now)
        self.search_times.append(time.perf_counter() - t0)
        return out


def measure(ch, ped, fleet, requests, threads: int, t_batch: int = 5, seed: int = 0) -> dict:
    sim = TimedSimulation(ch, ped, fleet, requests, config=SimulationConfig(t_batch=t_batch, threads=threads, seed=seed))
    log = sim.run()
    return {
        "threads": threads,
        "searches": len(sim.search_times),
        "median_search_ms": 1000 * statistics.median(sim.search_times) if sim.search_times else 0.0,
        "find_insertion_s": log.timing["find_insertion"],
        "mode_choice_s": log.timing["mode_choice"],
        "update_s": log.timing["update"],
        "total_s": log.timing["total"],
    }


def run(grid: int, vehicles: int, requests: int, threads=(1, 8), seed: int = 0, horizon: int = 3600,
        max_walk: float = 0.0):
    road, ped = grid_city(grid, grid, seed=seed)
    t0 = time.perf_counter()
    ch = build_ch(road)
    build = time.perf_counter() - t0
    fleet = random_fleet(road, vehicles, seed, t_serv=(0, horizon + 3600))
    reqs = random_requests(road, requests, seed + 1, horizon=horizon, max_walk=max_walk)
    rows = [measure(ch, ped, fleet, reqs, n, seed=seed) for n in threads]
    return road.num_edges, build, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=160, help="grid side; 160 gives about 1e5 edges")
    ap.add_argument("--vehicles", type=int, default=1000)
    ap.add_argument("--requests", type=int, default=100_000)
    ap.add_argument("--horizon", type=int, default=3600)
    ap.add_argument("--max-walk", type=float, default=0.0)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 8])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    edges, build, rows = run(args.grid, args.vehicles, args.requests, args.threads, args.seed, args.horizon,
                             args.max_walk)
    print(f"edges {edges}  CH build {build:.1f} s")
    print("threads,searches,median_search_ms,find_insertion_s,mode_choice_s,update_s,total_s")
    for r in rows:
        print(",".join(f"{v:.3f}" if isinstance(v, float) else str(v) for v in r.values()))
    base = rows[0]["find_insertion_s"]
    for r in rows[1:]:
        print(f"find-insertion speedup {r['threads']} vs {rows[0]['threads']} threads: "
              f"{base / r['find_insertion_s']:.2f}x")


if __name__ == "__main__":
    main()
