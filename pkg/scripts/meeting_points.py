"""Compare a congested synthetic instance with and without meeting points.

    python scripts/meeting_points.py --grid 20 --vehicles 10 --requests 400 --seeds 0 1 2
"""
import argparse

import numpy as np

from ridepool.chrouting import build_ch
from ridepool.config import Config
from ridepool.demand import derive_walk_radius, reference_utility
from ridepool.metrics import compute_metrics, records_from_log
from ridepool.modechoice import default_mode_params
from ridepool.simulation import SimulationConfig, run
from ridepool.synth import grid_city, random_fleet, random_requests


def compare(grid: int, vehicles: int, requests: int, seed: int, horizon: int = 3600, ch=None, city=None):
    """(with, without) metric dicts for one seed; the walk radius comes from the default config rule."""
    road, ped = city or grid_city(grid, grid, seed=seed)
    ch = ch or build_ch(road)
    cfg = Config()
    radius = derive_walk_radius(cfg.walk_speed, cfg.modes["rp"].beta_acc,
                                reference_utility(cfg.modes, cfg.ref_trip_s, cfg.ref_wait_s),
                                cfg.walk_fraction, cfg.walk_cap_m)
    fleet = random_fleet(road, vehicles, seed, t_serv=(0, horizon + 3600))
    reqs = random_requests(road, requests, seed + 1, horizon=horizon, max_walk=radius)
    out = []
    for mp in (True, False):
        log = run(ch, ped, fleet, reqs, mode_params=default_mode_params(),
                  config=SimulationConfig(seed=seed, meeting_points=mp))
        rides, fl = records_from_log(log)
        out.append(compute_metrics(rides, fl, (0, horizon)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=20)
    ap.add_argument("--vehicles", type=int, default=10)
    ap.add_argument("--requests", type=int, default=400)
    ap.add_argument("--horizon", type=int, default=3600)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    keys = ("share_rp", "riders", "mean_wait_s", "mean_access_s", "total_drive_s", "occupancy", "effectiveness")
    print("seed,meeting_points," + ",".join(keys))
    for seed in args.seeds:
        with_mp, without = compare(args.grid, args.vehicles, args.requests, seed, args.horizon)
        for tag, m in (("yes", with_mp), ("no", without)):
            print(f"{seed},{tag}," + ",".join(m[k] for k in keys))


if __name__ == "__main__":
    main()
