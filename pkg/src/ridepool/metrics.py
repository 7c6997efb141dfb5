"""Quality metrics from a simulation log, and their CSV reports."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .modechoice import MODES

UNDEFINED = "NA"
PERCENTILES = (0, 5, 10, 25, 50, 75, 90, 95, 99, 100)


@dataclass
class RideRecord:
    request_id: int
    mode: str
    category: str
    t_req: int
    direct_car: int
    vehicle_id: int = -1
    access: int = 0
    egress: int = 0
    wait: int = 0
    in_vehicle: int = 0
    trip_time: int = 0
    offered_wait: int = 0
    offered_trip: int = 0
    added_wait: int = 0
    added_trip: int = 0
    co_riders: float = 0.0
    co_riders_max: int = 0
    postponed: int = 0

    @property
    def is_rp(self) -> bool:
        return self.mode == "rp"


@dataclass
class FleetRecord:
    vehicle_id: int
    capacity: int
    t_serv_min: int
    t_serv_max: int
    driving: int
    idle: int
    passenger_seconds: int


def _legs(visits):
    """Consecutive executed stops of one vehicle: (duration, occupancy, index of departed stop)."""
    for h in range(len(visits) - 1):
        yield visits[h + 1].arr - visits[h].dep, visits[h].occupancy_after, h


def records_from_log(log) -> tuple[list[RideRecord], list[FleetRecord]]:
    by_vehicle: dict[int, list] = {}
    for v in log.visits:
        by_vehicle.setdefault(v.vehicle_id, []).append(v)
    exposure: dict[int, tuple[float, int]] = {}
    fleet = []
    for veh in log.vehicles:
        visits = by_vehicle.get(veh.id, [])
        driving = pax = 0
        for dt, occ, _ in _legs(visits):
            driving += dt
            pax += occ * dt
        fleet.append(FleetRecord(veh.id, veh.capacity, veh.t_serv_min, veh.t_serv_max, driving,
                                 (veh.t_serv_max - veh.t_serv_min) - driving, pax))
        board = {}
        for h, v in enumerate(visits):
            for r in v.boarding:
                board[r] = h
            for r in v.alighting:
                h0 = board.pop(r, None)
                if h0 is None:
                    continue
                tot = weighted = 0
                peak = 0
                for hh in range(h0, h):
                    dt = visits[hh + 1].arr - visits[hh].dep
                    others = visits[hh].occupancy_after - 1
                    tot += dt
                    weighted += others * dt
                    peak = max(peak, others)
                exposure[r] = (round(weighted / tot, 6) if tot > 0 else 0.0, peak)
    rides = []
    for o in log.outcomes:
        rec = RideRecord(o.request_id, o.mode, o.category, o.t_req, int(o.car_time), postponed=o.postponed)
        if o.mode == "rp":
            rec.vehicle_id = o.vehicle_id
            rec.access, rec.egress = o.access, o.egress
            rec.wait = o.actual_pickup - o.t_req - o.access
            rec.in_vehicle = o.actual_dropoff - o.actual_pickup
            rec.trip_time = rec.access + rec.wait + rec.in_vehicle + rec.egress
            rec.offered_wait = o.offered_pickup - o.t_req - o.access
            rec.offered_trip = o.offered_trip
            rec.added_wait = o.actual_pickup - o.offered_pickup
            rec.added_trip = rec.trip_time - o.offered_trip
            rec.co_riders, rec.co_riders_max = exposure.get(o.request_id, (0.0, 0))
        rides.append(rec)
    return rides, fleet


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else None


def _fmt(x) -> str:
    if x is None:
        return UNDEFINED
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6f}"


def compute_metrics(rides: list[RideRecord], fleet: list[FleetRecord], window: tuple[int, int]) -> dict[str, str]:
    """Flat metric table (formatted strings, deterministic order)."""
    decided = [r for r in rides if r.mode in MODES]
    rp = [r for r in rides if r.is_rp]
    out: dict[str, object] = {"requests": len(rides), "decided": len(decided),
                              "unservable": sum(r.mode == "unservable" for r in rides)}
    for m in MODES:
        out[f"share_{m}"] = (sum(r.mode == m for r in decided) / len(decided)) if decided else None
    out["riders"] = len(rp)
    out["mean_wait_s"] = _mean([r.wait for r in rp])
    out["mean_access_s"] = _mean([r.access for r in rp])
    out["mean_egress_s"] = _mean([r.egress for r in rp])
    out["mean_in_vehicle_s"] = _mean([r.in_vehicle for r in rp])
    out["mean_trip_s"] = _mean([r.trip_time for r in rp])
    out["mean_ride_detour"] = _mean([r.in_vehicle / r.direct_car for r in rp if r.direct_car > 0])
    out["mean_co_riders"] = _mean([r.co_riders for r in rp])
    out["mean_added_wait_s"] = _mean([r.added_wait for r in rp])
    out["mean_added_trip_s"] = _mean([r.added_trip for r in rp])
    driving = sum(f.driving for f in fleet)
    out["total_drive_s"] = driving
    out["total_idle_s"] = sum(f.idle for f in fleet)
    out["occupancy"] = (sum(f.passenger_seconds for f in fleet) / driving) if driving else None
    out["effectiveness"] = (sum(r.direct_car for r in rp) / driving) if driving and rp else None
    span = window[1] - window[0]
    out["throughput_req_per_s"] = len(rides) / span if span > 0 else None
    return {k: _fmt(v) for k, v in out.items()}


def throughput(n_requests: int, window_s: float) -> float:
    return n_requests / window_s


def distributions(rides: list[RideRecord]) -> list[tuple[str, int, str]]:
    rp = [r for r in rides if r.is_rp]
    series = {
        "wait_s": [r.wait for r in rp],
        "ride_detour": [r.in_vehicle / r.direct_car for r in rp if r.direct_car > 0],
        "added_wait_s": [r.added_wait for r in rp],
        "added_trip_s": [r.added_trip for r in rp],
    }
    rows = []
    for name, xs in series.items():
        if not xs:
            continue
        vals = np.percentile(np.asarray(xs, dtype=float), PERCENTILES)
        rows.extend((name, p, f"{v:.6f}") for p, v in zip(PERCENTILES, vals))
    return rows


def by_category(rides: list[RideRecord]) -> list[dict[str, str]]:
    cats = sorted({r.category for r in rides})
    rows = []
    for c in cats:
        group = [r for r in rides if r.category == c]
        rp = [r for r in group if r.is_rp]
        decided = [r for r in group if r.mode in MODES]
        rows.append({
            "category": c,
            "requests": _fmt(len(group)),
            "riders": _fmt(len(rp)),
            "share_rp": _fmt(len(rp) / len(decided) if decided else None),
            "mean_direct_car_s": _fmt(_mean([r.direct_car for r in group])),
            "mean_wait_s": _fmt(_mean([r.wait for r in rp])),
            "mean_in_vehicle_s": _fmt(_mean([r.in_vehicle for r in rp])),
            "mean_trip_s": _fmt(_mean([r.trip_time for r in rp])),
            "mean_ride_detour": _fmt(_mean([r.in_vehicle / r.direct_car for r in rp if r.direct_car > 0])),
        })
    return rows


# ------------------------------------------------------------------ files

CATEGORY_HEADER = ["category", "requests", "riders", "share_rp", "mean_direct_car_s", "mean_wait_s",
                   "mean_in_vehicle_s", "mean_trip_s", "mean_ride_detour"]


def _write(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cell(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def emit_reports(rides: list[RideRecord], fleet: list[FleetRecord], window: tuple[int, int],
                 outdir: Path | str, visits=None, edge_ids=None) -> dict[str, str]:
    """Write metrics.csv, assignments.csv, distributions.csv, by_category.csv, fleet.csv (and stops.csv).

    ``edge_ids`` maps internal edge indices to the ids of the network files.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    metrics = compute_metrics(rides, fleet, window)
    metrics_rows = [("window_start_s", str(window[0])), ("window_end_s", str(window[1]))]
    metrics_rows += list(metrics.items())
    _write(outdir / "metrics.csv", ["key", "value"], metrics_rows)
    ride_fields = [f.name for f in fields(RideRecord)]
    _write(outdir / "assignments.csv", ride_fields,
           [[_cell(getattr(r, k)) for k in ride_fields] for r in rides])
    _write(outdir / "distributions.csv", ["metric", "percentile", "value"], distributions(rides))
    _write(outdir / "by_category.csv", CATEGORY_HEADER,
           [[row[k] for k in CATEGORY_HEADER] for row in by_category(rides)])
    fleet_fields = [f.name for f in fields(FleetRecord)]
    _write(outdir / "fleet.csv", fleet_fields, [[getattr(f, k) for k in fleet_fields] for f in fleet])
    if visits is not None:
        seq: dict[int, int] = {}
        rows = []
        for v in visits:
            n = seq.get(v.vehicle_id, 0)
            seq[v.vehicle_id] = n + 1
            edge = edge_ids[v.edge] if edge_ids is not None else v.edge
            rows.append([v.vehicle_id, n, edge, v.arr, v.dep, " ".join(map(str, v.boarding)),
                         " ".join(map(str, v.alighting)), v.occupancy_after])
        _write(outdir / "stops.csv", ["vehicle_id", "seq", "edge", "arr_s", "dep_s", "boarding", "alighting",
                                      "occupancy_after"], rows)
    return metrics


def _read(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_records(outdir: Path | str) -> tuple[list[RideRecord], list[FleetRecord], tuple[int, int]]:
    """Inverse of :func:`emit_reports` for the inputs metrics are computed from."""
    outdir = Path(outdir)
    rides = []
    types = {f.name: f.type for f in fields(RideRecord)}
    for row in _read(outdir / "assignments.csv"):
        kw = {}
        for k, v in row.items():
            t = types[k]
            kw[k] = v if t == "str" else (float(v) if t == "float" else int(v))
        rides.append(RideRecord(**kw))
    fleet = [FleetRecord(**{k: int(v) for k, v in row.items()}) for row in _read(outdir / "fleet.csv")]
    meta = {row["key"]: row["value"] for row in _read(outdir / "metrics.csv")}
    window = (int(meta["window_start_s"]), int(meta["window_end_s"]))
    return rides, fleet, window


def report(outdir: Path | str, dest: Path | str | None = None) -> dict[str, str]:
    """Recompute every report from ``assignments.csv`` and ``fleet.csv``."""
    rides, fleet, window = load_records(outdir)
    return emit_reports(rides, fleet, window, dest or outdir)


__all__ = ["RideRecord", "FleetRecord", "asdict", "compute_metrics", "emit_reports", "records_from_log",
           "report", "load_records", "throughput", "distributions", "by_category"]
