"""Request files, departure-time resampling and walking radii."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dispatch import Request
from .netgraph import RoadGraph

logger = logging.getLogger(__name__)

REQUEST_HEADER = ["id", "origin_edge", "dest_edge", "t_req_s", "walk_speed_mps", "max_walk_m", "car_prob", "category"]
INTERVAL = 900
HALF = INTERVAL // 2


class RequestFormatError(ValueError):
    pass


def read_request_rows(path: Path | str) -> list[dict]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(REQUEST_HEADER[:4]) <= set(reader.fieldnames):
            raise RequestFormatError(f"{path}: header must contain {REQUEST_HEADER}")
        return list(reader)


def write_request_rows(path: Path | str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REQUEST_HEADER, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in REQUEST_HEADER})


def load_requests(path: Path | str, road: RoadGraph, default_walk_radius: float = 0.0,
                  default_speed: float = 1.25) -> list[Request]:
    """Parse ``requests.csv``; empty walk columns fall back to the defaults."""
    out = []
    seen = set()
    for line, row in enumerate(read_request_rows(path), start=2):
        try:
            rid = int(row["id"])
            o = road.edge_index[_key(row["origin_edge"], road)]
            d = road.edge_index[_key(row["dest_edge"], road)]
            speed = float(row.get("walk_speed_mps") or default_speed)
            radius = row.get("max_walk_m")
            radius = default_walk_radius if radius in (None, "") else float(radius)
            car = float(row.get("car_prob") or 1.0)
            req = Request(rid, o, d, int(row["t_req_s"]), radius, speed, car, row.get("category") or "")
        except KeyError as exc:
            raise RequestFormatError(f"{path}:{line}: unknown edge {exc}") from None
        except ValueError as exc:
            raise RequestFormatError(f"{path}:{line}: {exc}") from None
        if rid in seen:
            raise RequestFormatError(f"{path}:{line}: duplicate request id {rid}")
        if not 0.0 <= car <= 1.0:
            raise RequestFormatError(f"{path}:{line}: car_prob outside [0, 1]")
        seen.add(rid)
        out.append(req)
    return out


def _key(raw, road: RoadGraph):
    raw = raw.strip()
    return raw if raw in road.edge_index else int(raw)


# ------------------------------------------------------------- resampling


@dataclass
class Resampler:
    """Per-second departure weights from 15-minute request counts.

    Interval i covers ``[origin - 450 + 900 i, origin + 450 + 900 i)`` so a
    spike of coarse timestamps at ``origin + 900 i`` sits mid-interval.  The
    weight is the interval mean ``m_i = n_i / 900`` at that centre and is
    interpolated linearly towards the next centre, evaluated at second
    midpoints so the weights add up to the request count exactly.
    """

    origin: int
    counts: np.ndarray

    @classmethod
    def fit(cls, times) -> "Resampler":
        t = np.asarray(times, dtype=np.int64)
        if t.size == 0:
            raise ValueError("cannot resample an empty request set")
        origin = int(((t.min() + HALF) // INTERVAL) * INTERVAL)
        idx = (t - (origin - HALF)) // INTERVAL
        counts = np.bincount(idx, minlength=int(idx.max()) + 1).astype(float)
        return cls(origin, counts)

    @property
    def window(self) -> tuple[int, int]:
        start = self.origin - HALF
        return start, start + INTERVAL * len(self.counts)

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(second x, w(x)) over the whole window."""
        m = self.counts / INTERVAL
        ext = np.concatenate(([m[0]], m, [m[-1]]))  # constant beyond the ends
        start, end = self.window
        xs = np.arange(start, end)
        # offset from the centre of the interval to the left
        rel = xs - (self.origin - INTERVAL)
        left = rel // INTERVAL  # index into ext
        c = (rel % INTERVAL) + 0.5
        w = ext[left] + (ext[left + 1] - ext[left]) * c / INTERVAL
        return xs, w

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        xs, w = self.weights()
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        u = rng.random(n)
        k = np.searchsorted(cdf, u, side="right")
        return np.sort(xs[np.minimum(k, len(xs) - 1)])


def resample_departures(times, seed: int) -> np.ndarray:
    """New departure times; the k-th earliest original request gets the k-th earliest new time."""
    times = np.asarray(times, dtype=np.int64)
    res = Resampler.fit(times)
    new = res.sample(len(times), np.random.default_rng(seed))
    order = np.argsort(times, kind="stable")
    out = np.empty_like(times)
    out[order] = new
    return out


def resample_rows(rows: list[dict], seed: int) -> list[dict]:
    times = [int(r["t_req_s"]) for r in rows]
    new = resample_departures(times, seed)
    out = []
    for r, t in zip(rows, new):
        r = dict(r)
        r["t_req_s"] = str(int(t))
        out.append(r)
    return out


# ------------------------------------------------------------ walk radius


def derive_walk_radius(speed: float, beta_acc: float, u_ref: float, fraction: float = 0.5,
                       cap_m: float = 500.0) -> float:
    """Radius at which access walking has cost ``fraction`` of the reference utility.

    Solves ``|beta_acc| * d = fraction * |u_ref|`` for the walking duration d
    and returns ``min(speed * d, cap_m)``; without an access penalty the cap.
    """
    if speed <= 0:
        raise ValueError("walking speed must be positive")
    if fraction < 0:
        raise ValueError("fraction must be non-negative")
    if beta_acc >= 0:
        return cap_m
    d = fraction * abs(u_ref) / abs(beta_acc)
    return min(speed * d, cap_m)


def reference_utility(mode_params, ref_time: float, ref_wait: float) -> float:
    """Ride-pooling utility of the reference trip with zero access time."""
    p = mode_params["rp"]
    return p.alpha + ref_time * p.beta_t + ref_wait * p.beta_w


def summarize(times) -> dict:
    t = np.asarray(times)
    return {"n": int(t.size), "min": int(t.min()), "max": int(t.max()), "median": float(np.median(t))}


def bin_counts(times, origin: int, n_intervals: int) -> np.ndarray:
    idx = (np.asarray(times) - (origin - HALF)) // INTERVAL
    return np.bincount(idx, minlength=n_intervals)[:n_intervals]


__all__ = [
    "Resampler", "RequestFormatError", "derive_walk_radius", "load_requests", "read_request_rows",
    "resample_departures", "resample_rows", "write_request_rows", "reference_utility", "bin_counts",
    "REQUEST_HEADER",
]
