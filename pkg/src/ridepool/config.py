"""Run configuration: flat TOML keys with defaults, validation and an echo writer."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli

from .dispatch import CostParameters
from .fleet import Vehicle
from .modechoice import MODES, ModeParams, default_mode_params
from .netgraph import RoadGraph

VEHICLE_HEADER = ["id", "initial_edge", "capacity", "t_serv_min_s", "t_serv_max_s"]
PATH_KEYS = ("network_dir", "vehicles", "requests", "pt_times", "ch_cache", "out_dir")


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``path`` names the offending file if any."""

    def __init__(self, message: str, path: Path | str | None = None):
        super().__init__(message)
        self.path = path


@dataclass
class Config:
    seed: int | None = None
    network_dir: str = ""
    vehicles: str = ""
    requests: str = ""
    pt_times: str = ""
    ch_cache: str = ""
    out_dir: str = "out"
    threads: int = 1
    t_batch: int = 5
    dwell: int = 0
    detour_weight: float = 1.0
    walk_weight: float = 1.0
    alpha: float = 1.4
    beta: int = 600
    t_wait_max: int = 600
    capacity: int = 4
    meeting_points: bool = True
    walk_speed: float = 1.25
    max_walk_m: float | str = "auto"
    walk_fraction: float = 0.5
    walk_cap_m: float = 500.0
    ref_trip_s: int = 600
    ref_wait_s: int = 300
    observation_start_s: int | None = None
    observation_end_s: int | None = None
    validate_prefix: int = 200
    modes: dict[str, ModeParams] = field(default_factory=default_mode_params)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    # ------------------------------------------------------------ derived
    def path(self, key: str) -> Path | None:
        raw = getattr(self, key)
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else (self.base_dir / p)

    def cost_params(self) -> CostParameters:
        return CostParameters(self.detour_weight, self.walk_weight, self.t_wait_max, self.alpha, self.beta,
                              self.dwell)

    def walk_radius(self) -> float:
        from .demand import derive_walk_radius, reference_utility
        if not self.meeting_points:
            return 0.0
        if self.max_walk_m != "auto":
            return float(self.max_walk_m)
        u_ref = reference_utility(self.modes, self.ref_trip_s, self.ref_wait_s)
        return derive_walk_radius(self.walk_speed, self.modes["rp"].beta_acc, u_ref, self.walk_fraction,
                                  self.walk_cap_m)

    # ---------------------------------------------------------- validation
    def validate(self, need=("network_dir", "vehicles", "requests")) -> None:
        if self.seed is None:
            raise ConfigError("seed is mandatory (config key 'seed' or --seed)")
        if self.t_batch < 0:
            raise ConfigError("t_batch must be >= 0 (0 dispatches each request on arrival)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.capacity < 1:
            raise ConfigError("capacity must be >= 1")
        if self.max_walk_m != "auto" and (not isinstance(self.max_walk_m, (int, float)) or self.max_walk_m < 0):
            raise ConfigError("max_walk_m must be 'auto' or a non-negative number")
        try:
            self.cost_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for key in need:
            p = self.path(key)
            if p is None:
                raise ConfigError(f"config key '{key}' is required")
            if not p.exists():
                raise ConfigError(f"{key}: no such file or directory: {p}", p)
        if self.pt_times:
            p = self.path("pt_times")
            if not p.exists():
                raise ConfigError(f"pt_times: no such file: {p}", p)

    # --------------------------------------------------------------- echo
    def flat(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for f in fields(self):
            if f.name in ("modes", "base_dir"):
                continue
            v = getattr(self, f.name)
            if v is None or v == "":
                continue
            if f.name in PATH_KEYS:
                v = str(self.path(f.name).resolve())
            out[f.name] = v
        for m in MODES:
            mp = self.modes[m]
            for k in ("alpha", "beta_t", "beta_w", "beta_acc", "enabled"):
                out[f"mode.{m}.{k}"] = getattr(mp, k)
        return out

    def dumps(self) -> str:
        lines = ["# effective configuration (defaults merged, paths absolute)"]
        for k, v in self.flat().items():
            lines.append(f"{_toml_key(k)} = {_toml_value(v)}")
        return "\n".join(lines) + "\n"


def _toml_key(k: str) -> str:
    return f'"{k}"' if "." in k else k


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    s = str(v).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{s}"'


def _flatten(d: dict, prefix: str = "") -> dict[str, object]:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def config_from_dict(raw: dict, base_dir: Path | str | None = None) -> Config:
    """Build a config from (possibly nested) key/value pairs; unknown keys are rejected."""
    flat = _flatten(raw)
    cfg = Config(base_dir=Path(base_dir) if base_dir else Path.cwd())
    known = {f.name: f for f in fields(Config) if f.name not in ("modes", "base_dir")}
    modes = {m: dict(vars(p)) for m, p in cfg.modes.items()}
    for key, value in flat.items():
        if key.startswith("mode."):
            parts = key.split(".")
            if len(parts) != 3 or parts[1] not in MODES or parts[2] not in modes[parts[1]]:
                raise ConfigError(f"unknown config key '{key}'")
            modes[parts[1]][parts[2]] = value
            continue
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
        setattr(cfg, key, _coerce(key, value, known[key].type))
    try:
        cfg.modes = {m: ModeParams(**{k: (bool(v) if k == "enabled" else float(v)) for k, v in kw.items()})
                     for m, kw in modes.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mode parameters: {exc}") from None
    return cfg


def _coerce(key: str, value, typ: str):
    try:
        if key == "max_walk_m":
            return value if value == "auto" else float(value)
        if typ.startswith("int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if typ.startswith("float"):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if typ == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key '{key}': invalid value {value!r}") from None


def load_config(path: Path | str) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: no such file: {path}", path)
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", path) from None
    return config_from_dict(raw, path.parent)


def load_vehicles(path: Path | str, road: RoadGraph, default_capacity: int = 4) -> list[Vehicle]:
    """Parse ``vehicles.csv``; the capacity column may be omitted or left empty."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"id", "initial_edge", "t_serv_min_s", "t_serv_max_s"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: header must contain {VEHICLE_HEADER}", path)
        for line, row in enumerate(reader, start=2):
            try:
                raw = row["initial_edge"].strip()
                edge = road.edge_index[raw if raw in road.edge_index else int(raw)]
                cap = row.get("capacity")
                out.append(Vehicle(int(row["id"]), edge, int(cap) if cap not in (None, "") else default_capacity,
                                   int(row["t_serv_min_s"]), int(row["t_serv_max_s"])))
            except KeyError as exc:
                raise ConfigError(f"{path}:{line}: unknown edge {exc}", path) from None
            except ValueError as exc:
                raise ConfigError(f"{path}:{line}: {exc}", path) from None
    if len({v.id for v in out}) != len(out):
        raise ConfigError(f"{path}: duplicate vehicle ids", path)
    return out


def write_vehicles(path: Path | str, vehicles: list[Vehicle], road: RoadGraph) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VEHICLE_HEADER)
        for v in vehicles:
            w.writerow([v.id, road.edge_ids[v.initial_edge], v.capacity, v.t_serv_min, v.t_serv_max])
