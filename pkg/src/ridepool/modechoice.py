"""Logit mode choice among walking, car, public transit and ride-pooling."""
from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .fleet import Insertion
from .netgraph import INF, AStarRouter, RoadGraph

MODES = ("walk", "car", "pt", "rp")


class NoAvailableMode(ValueError):
    pass


@dataclass
class ModeParams:
    alpha: float = 0.0
    beta_t: float = 0.0  # per second of travel
    beta_w: float = 0.0  # per second of waiting
    beta_acc: float = 0.0  # per second of access/egress
    enabled: bool = True

    def __post_init__(self):
        for v in (self.alpha, self.beta_t, self.beta_w, self.beta_acc):
            if not math.isfinite(v):
                raise ValueError("mode utility parameters must be finite")


def default_mode_params() -> dict[str, ModeParams]:
    # placeholders, to be calibrated per study area
    return {
        "walk": ModeParams(alpha=0.0, beta_t=-0.0030),
        "car": ModeParams(alpha=-0.6, beta_t=-0.0020, beta_acc=-0.0020),
        "pt": ModeParams(alpha=-0.4, beta_t=-0.0015, beta_w=-0.0020, beta_acc=-0.0030),
        "rp": ModeParams(alpha=0.0, beta_t=-0.0015, beta_w=-0.0020, beta_acc=-0.0040),
    }


@dataclass
class TravelOffer:
    mode: str
    time: float = 0.0
    wait: float = 0.0
    access: float = 0.0
    available: bool = True

    def __post_init__(self):
        if self.available and min(self.time, self.wait, self.access) < 0:
            raise ValueError(f"{self.mode} offer with negative time")


def utility(offer: TravelOffer, params: ModeParams) -> float:
    if not offer.available or not params.enabled:
        return -math.inf
    return params.alpha + offer.time * params.beta_t + offer.wait * params.beta_w + offer.access * params.beta_acc


def choice_probabilities(offers: list[TravelOffer], params: dict[str, ModeParams]) -> dict[str, float]:
    """Multinomial logit over available offers; unavailable modes get probability 0."""
    utils = np.array([utility(o, params[o.mode]) for o in offers], dtype=float)
    finite = np.isfinite(utils)
    if not finite.any():
        raise NoAvailableMode("no travel mode is available")
    z = np.where(finite, utils - utils[finite].max(), -np.inf)
    e = np.exp(z)
    probs = e / e.sum()
    return {o.mode: float(pr) for o, pr in zip(offers, probs)}


def sample_mode(probs: dict[str, float], u) -> str:
    """Invert the cumulative distribution in insertion order; ``u`` is a uniform draw or a Generator."""
    if not isinstance(u, (float, int)):
        u = float(u.random())
    modes = list(probs)
    cum = np.cumsum([probs[m] for m in modes])
    k = int(np.searchsorted(cum, u, side="right"))
    if k >= len(modes):  # u beyond the rounded total
        k = max(i for i, m in enumerate(modes) if probs[m] > 0)
    return modes[k]


# ----------------------------------------------------------------- offers


class PTProvider(Protocol):
    def offer(self, origin: int, destination: int, t_req: int) -> TravelOffer: ...


class NoTransit:
    def offer(self, origin, destination, t_req) -> TravelOffer:
        return TravelOffer("pt", available=False)


@dataclass
class TransitTable:
    """Precomputed transit journeys keyed by (origin edge, destination edge).

    The first departure at or after ``t_req`` is offered; the time until it
    departs is added to the journey's own wait.
    """

    rows: dict[tuple[int, int], list[tuple[int, int, int, int]]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path | str, road: RoadGraph) -> "TransitTable":
        table: dict[tuple[int, int], list] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"origin_edge", "dest_edge", "depart_s", "travel_s", "wait_s", "acc_s"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected header {sorted(need)}")
            for line, row in enumerate(reader, start=2):
                try:
                    o = road.edge_index[_edge_key(row["origin_edge"], road)]
                    d = road.edge_index[_edge_key(row["dest_edge"], road)]
                    rec = (int(row["depart_s"]), int(row["travel_s"]), int(row["wait_s"]), int(row["acc_s"]))
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{line}: bad transit row ({exc})") from None
                table.setdefault((o, d), []).append(rec)
        for v in table.values():
            v.sort()
        return cls(table)

    def offer(self, origin, destination, t_req) -> TravelOffer:
        rows = self.rows.get((origin, destination))
        if not rows:
            return TravelOffer("pt", available=False)
        k = bisect_left(rows, (t_req, -1, -1, -1))
        if k == len(rows):
            return TravelOffer("pt", available=False)
        dep, travel, wait, acc = rows[k]
        return TravelOffer("pt", travel, wait + dep - t_req, acc)


def _edge_key(raw: str, road: RoadGraph):
    raw = raw.strip()
    if raw in road.edge_index:
        return raw
    return int(raw)


def walking_time(ped: RoadGraph | None, road: RoadGraph, origin: int, destination: int, speed: float,
                 router: AStarRouter | None = None) -> float | None:
    """Door-to-door walking seconds between two locations, None without a footpath."""
    if origin == destination:
        return 0.0
    if ped is None:
        return None
    router = router or AStarRouter(ped)
    d = router.distance(road.head[origin], road.head[destination])
    return None if d >= INF else math.floor(d / speed + 1e-9)


def build_offers(req, ins: Insertion | None, ch, ped: RoadGraph | None, pt: PTProvider,
                 car_available: bool, car_time: int | None = None) -> list[TravelOffer]:
    road = ch.graph
    walk = walking_time(ped, road, req.origin, req.destination, req.walk_speed)
    offers = [TravelOffer("walk", walk) if walk is not None else TravelOffer("walk", available=False)]
    if car_time is None:
        car_time = ch.edge_distance(req.origin, req.destination)
    offers.append(TravelOffer("car", car_time, available=car_available and car_time < INF))
    offers.append(pt.offer(req.origin, req.destination, req.t_req))
    if ins is None:
        offers.append(TravelOffer("rp", available=False))
    else:
        offers.append(TravelOffer("rp", ins.in_vehicle, ins.wait, ins.access + ins.egress))
    return offers
