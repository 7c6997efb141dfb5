"""Command line entry point: prepare-ch, resample, simulate, validate, report."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from .chrouting import ContractionHierarchy, build_ch
from .config import Config, ConfigError, load_config, load_vehicles
from .demand import RequestFormatError, load_requests, read_request_rows, resample_rows, write_request_rows
from .metrics import emit_reports, records_from_log, report
from .modechoice import NoTransit, TransitTable
from .netgraph import GraphFormatError, load_network
from .simulation import Simulation, SimulationConfig

logger = logging.getLogger("ridepool")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ridepool", description="Dynamic ride-pooling dispatch simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("prepare-ch", help="build the contraction hierarchy and cache it")
    common(p, "cache file (default: config ch_cache or <out_dir>/ch.bin)")

    p = sub.add_parser("resample", help="spread coarse request timestamps within their 15-minute intervals")
    common(p, "output requests file (default: <out_dir>/requests_resampled.csv)")

    for name, text in (("simulate", "run the full simulation"),
                       ("validate", "check inputs and sweep route invariants on a request prefix")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--threads", type=int, help="search worker threads")
        p.add_argument("--tbatch", type=int, help="batch interval in seconds (0: one request at a time)")
        p.add_argument("--no-meeting-points", action="store_true", help="door-to-door service only")
        if name == "validate":
            p.add_argument("--prefix", type=int, help="number of requests to simulate with checks")

    p = sub.add_parser("report", help="recompute metrics from an output directory")
    p.add_argument("run_dir", help="directory holding assignments.csv and fleet.csv")
    p.add_argument("--out", help="write reports here instead of run_dir")
    return ap


def _configure(args) -> Config:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "tbatch", None) is not None:
        cfg.t_batch = args.tbatch
    if getattr(args, "no_meeting_points", False):
        cfg.meeting_points = False
    if args.out and args.command in ("simulate", "validate"):
        cfg.out_dir = str(Path(args.out).resolve())
    return cfg


def _load_ch(cfg: Config, road) -> ContractionHierarchy:
    cache = cfg.path("ch_cache")
    if cache is not None and cache.exists():
        try:
            ch = ContractionHierarchy.load(cache, road)
            logger.info("loaded CH cache %s", cache)
            return ch
        except ValueError as exc:
            logger.warning("ignoring CH cache: %s", exc)
    t0 = time.perf_counter()
    ch = build_ch(road)
    logger.info("built CH in %.1f s (%d shortcuts)", time.perf_counter() - t0, ch.num_shortcuts)
    return ch


def _inputs(cfg: Config):
    road, ped = load_network(cfg.path("network_dir"))
    vehicles = load_vehicles(cfg.path("vehicles"), road, cfg.capacity)
    radius = cfg.walk_radius()
    requests = load_requests(cfg.path("requests"), road, radius, cfg.walk_speed)
    pt = TransitTable.load(cfg.path("pt_times"), road) if cfg.pt_times else NoTransit()
    return road, ped, vehicles, requests, pt


def _window(cfg: Config, requests) -> tuple[int, int]:
    times = [r.t_req for r in requests]
    start = cfg.observation_start_s if cfg.observation_start_s is not None else (min(times) if times else 0)
    end = cfg.observation_end_s if cfg.observation_end_s is not None else (max(times) if times else 0)
    return start, end


def _simulation(cfg: Config, ch, ped, vehicles, requests, pt, debug=False) -> Simulation:
    sc = SimulationConfig(t_batch=cfg.t_batch, threads=cfg.threads, seed=cfg.seed,
                          meeting_points=cfg.meeting_points, debug_checks=debug, check_indices=debug)
    return Simulation(ch, ped, vehicles, requests, cfg.cost_params(), cfg.modes, pt, sc)


def cmd_prepare_ch(cfg: Config, args) -> int:
    cfg.validate(need=("network_dir",))
    road, _ = load_network(cfg.path("network_dir"))
    dest = Path(args.out) if args.out else (cfg.path("ch_cache") or cfg.path("out_dir") / "ch.bin")
    dest.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ch = build_ch(road)
    ch.save(dest)
    print(f"{road.summary()}: {ch.num_shortcuts} shortcuts in {time.perf_counter() - t0:.1f} s -> {dest}")
    return EXIT_OK


def cmd_resample(cfg: Config, args) -> int:
    cfg.validate(need=("requests",))
    rows = read_request_rows(cfg.path("requests"))
    if not rows:
        raise RequestFormatError(f"{cfg.path('requests')}: no requests to resample")
    out = Path(args.out) if args.out else cfg.path("out_dir") / "requests_resampled.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_request_rows(out, resample_rows(rows, cfg.seed))
    print(f"resampled {len(rows)} requests -> {out}")
    return EXIT_OK


def _write_timing(path: Path, log) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in log.timing.items():
            w.writerow([f"time_{k}_s", f"{v:.6f}"])
        for k, v in log.counters.items():
            w.writerow([k, v])


def cmd_simulate(cfg: Config, args) -> int:
    cfg.validate()
    out = cfg.path("out_dir")
    out.mkdir(parents=True, exist_ok=True)
    road, ped, vehicles, requests, pt = _inputs(cfg)
    ch = _load_ch(cfg, road)
    logger.info("%d vehicles, %d requests, walk radius %.1f m", len(vehicles), len(requests), cfg.walk_radius())
    log = _simulation(cfg, ch, ped, vehicles, requests, pt).run()
    rides, fleet = records_from_log(log)
    metrics = emit_reports(rides, fleet, _window(cfg, requests), out, log.visits, road.edge_ids)
    (out / "config.toml").write_text(cfg.dumps())
    # wall-clock timings differ between runs, so they live apart from the reports
    _write_timing(out / "timing.csv", log)
    t = log.timing
    print(f"requests {metrics['requests']}  rp share {metrics['share_rp']}  mean wait {metrics['mean_wait_s']} s  "
          f"occupancy {metrics['occupancy']}")
    print(f"time: find ins. {t['find_insertion']:.2f} s  mode choice {t['mode_choice']:.2f} s  "
          f"update {t['update']:.2f} s  total {t['total']:.2f} s")
    print(f"reports written to {out}")
    return EXIT_OK


def cmd_validate(cfg: Config, args) -> int:
    cfg.validate()
    road, ped, vehicles, requests, pt = _inputs(cfg)
    ch = _load_ch(cfg, road)
    n = args.prefix if args.prefix is not None else cfg.validate_prefix
    prefix = sorted(requests, key=lambda r: (r.t_req, r.id))[:n]
    log = _simulation(cfg, ch, ped, vehicles, prefix, pt, debug=True).run()
    print(f"inputs ok: {road.summary()}, {len(vehicles)} vehicles, {len(requests)} requests")
    if log.problems:
        for msg in log.problems[:20]:
            print(f"problem: {msg}")
        print(f"{len(log.problems)} invariant violations in the first {len(prefix)} requests")
        return EXIT_FAIL
    print(f"no invariant violations in the first {len(prefix)} requests")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    for name in ("assignments.csv", "fleet.csv", "metrics.csv"):
        if not (run_dir / name).exists():
            raise ConfigError(f"report: no such file: {run_dir / name}", run_dir / name)
    metrics = report(run_dir, args.out)
    for k, v in metrics.items():
        print(f"{k},{v}")
    return EXIT_OK


COMMANDS = {"prepare-ch": cmd_prepare_ch, "resample": cmd_resample, "simulate": cmd_simulate,
            "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _configure(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphFormatError, RequestFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
