"""Scenario configuration, energy bookkeeping and the simulate/optimize/sweep drivers.

Configs are JSON documents validated against :data:`CONFIG_SCHEMA`; every key
is optional and defaults to the canonical two-room experiment.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import mesh as meshmod
from .control import Bounds, ControlProblem, ControlVector, optimize, write_iteration_csv
from .fem import Assembler, Coefficients
from .flow import FlowField, fan_power, write_flow_csv, write_flow_vtk
from .thermal import (ThermalTrajectory, write_temperature_vtk, write_trajectory_csv, zone_abs_error,
                      zone_average)

log = logging.getLogger(__name__)

N_ZONES = 18


class ConfigError(ValueError):
    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_rect = {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}
_segment = {"type": "object", "required": ["side", "start", "end"], "additionalProperties": False,
            "properties": {"side": {"enum": list(meshmod.SIDES)}, "start": _num, "end": _num}}
_schedule = {"anyOf": [_num, {"type": "array", "items": _num}]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "zonalhvac scenario",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "floorplan": {"anyOf": [{"const": "canonical"}, {
            "type": "object", "required": ["width", "height"], "additionalProperties": False,
            "properties": {"width": _pos, "height": _pos,
                           "walls": {"type": "array", "items": _rect},
                           "openings": {"type": "array", "items": _rect},
                           "outlets": {"type": "array", "items": _segment, "maxItems": 2},
                           "inlet": {"anyOf": [_segment, {"type": "null"}]},
                           "heaters": {"type": "array", "items": _rect, "maxItems": 2},
                           "zones": {"type": "array", "items": _rect}}}]},
        "zone": {"anyOf": [{"type": "integer", "minimum": 0}, {"const": "whole"}]},
        "physics": {"type": "object", "additionalProperties": False, "properties": {
            "Re": _pos, "Pr": _pos, "kappa_air": _pos, "kappa_wall": _pos,
            "alpha_air": {"type": "number", "minimum": 0}, "alpha_wall": {"type": "number", "minimum": 0},
            "p_A": _pos, "T_A": _num, "T_target": _num, "rho": _pos}},
        "horizon": {"type": "object", "required": ["t_f", "dt"], "additionalProperties": False,
                    "properties": {"t_f": _pos, "dt": _pos}},
        "cost": {"type": "object", "additionalProperties": False,
                 "properties": {"lam1": {"type": "number", "minimum": 0},
                                "lam2": {"type": "number", "minimum": 0}}},
        "bounds": {"type": "object", "additionalProperties": False,
                   "properties": {"fan": _pair, "heater": _pair}},
        "mesh": {"type": "object", "additionalProperties": False,
                 "properties": {"target_h": _pos, "pattern": {"enum": ["diagonal", "crossed"]}}},
        "solver": {"type": "object", "additionalProperties": False, "properties": {
            "theta": {"type": "number", "minimum": 0, "maximum": 1},
            "flow_tol": _pos, "flow_max_iters": {"type": "integer", "minimum": 1},
            "opt_max_iters": {"type": "integer", "minimum": 0},
            "opt_tol": {"anyOf": [_pos, {"type": "null"}]}, "fd_step": _pos}},
        "controls": {"type": "object", "additionalProperties": False, "properties": {
            "u_o": _num, "u_o2": _num, "v": _schedule, "v2": _schedule}},
        "sweep": {"type": "boolean"},
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "floorplan": "canonical",
    "zone": "whole",
    "physics": {"Re": 0.05, "Pr": 1.2, "kappa_air": 1e-2, "kappa_wall": 1e-4, "alpha_air": 0.0,
                "alpha_wall": 100.0, "p_A": 101.3e3, "T_A": 23.83, "T_target": 24.83, "rho": 1.2},
    "horizon": {"t_f": 300.0, "dt": 10.0},
    "cost": {"lam1": 0.002, "lam2": 0.001},
    "bounds": {"fan": [0.1, 1.0], "heater": [0.0, 5.0]},
    "mesh": {"target_h": 0.5, "pattern": "diagonal"},
    "solver": {"theta": 1.0, "flow_tol": 1e-9, "flow_max_iters": 25, "opt_max_iters": 200,
               "opt_tol": None, "fd_step": 1e-3},
    "controls": {"u_o": 0.1, "u_o2": 0.1, "v": 0.0, "v2": 0.0},
    "sweep": False,
    "output_dir": "out",
}


@dataclass
class ScenarioConfig:
    data: dict

    # convenience accessors ---------------------------------------------------------------
    def __getitem__(self, key):
        return self.data[key]

    @property
    def n_steps(self) -> int:
        h = self.data["horizon"]
        return int(round(h["t_f"] / h["dt"]))

    @property
    def dt(self) -> float:
        return float(self.data["horizon"]["dt"])

    @property
    def t_f(self) -> float:
        return float(self.data["horizon"]["t_f"])

    @property
    def target_rel(self) -> float:
        ph = self.data["physics"]
        return ph["T_target"] - ph["T_A"]

    @property
    def theta(self) -> float:
        return float(self.data["solver"]["theta"])

    def with_overrides(self, **kw) -> ScenarioConfig:
        d = copy.deepcopy(self.data)
        for k, v in kw.items():
            if v is None:
                continue
            if k == "theta":
                d["solver"]["theta"] = float(v)
            else:
                d[k] = v
        return validate(d)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"

    # model construction --------------------------------------------------------------------
    def floorplan(self) -> meshmod.FloorPlan:
        fp = self.data["floorplan"]
        return meshmod.canonical_apartment() if fp == "canonical" else floorplan_from_dict(fp)

    def coefficients(self) -> Coefficients:
        ph = self.data["physics"]
        return Coefficients(ph["kappa_air"], ph["kappa_wall"], ph["alpha_air"], ph["alpha_wall"],
                            ph["Re"], ph["rho"])

    def bounds(self) -> Bounds:
        b = self.data["bounds"]
        return Bounds(tuple(b["fan"]), tuple(b["heater"]))

    def controls(self) -> ControlVector:
        c = self.data["controls"]
        K = self.n_steps

        def sched(name):
            v = c[name]
            arr = np.full(K, float(v)) if not isinstance(v, list) else np.asarray(v, dtype=float)
            if arr.size != K:
                raise ConfigError(f"controls.{name}", f"expected {K} values, got {arr.size}")
            return arr

        return ControlVector(float(c["u_o"]), float(c["u_o2"]), sched("v"), sched("v2"))


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        missing = None
        if exc.validator == "required":
            missing = next((r for r in exc.validator_value if r not in exc.instance), None)
        field = f"{path}.{missing}" if missing and path != "<root>" else (missing or path)
        raise ConfigError(field, exc.message) from None
    data = _merge(DEFAULTS, raw)
    h = data["horizon"]
    ratio = h["t_f"] / h["dt"]
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError("horizon.t_f", f"t_f = {h['t_f']} is not a positive multiple of dt = {h['dt']}")
    for name in ("fan", "heater"):
        lo, hi = data["bounds"][name]
        if lo > hi:
            raise ConfigError(f"bounds.{name}", "lower bound exceeds upper bound")
    cfg = ScenarioConfig(data)
    try:
        fp = cfg.floorplan()
    except meshmod.MeshError as exc:
        raise ConfigError("floorplan", str(exc)) from None
    z = data["zone"]
    if z != "whole" and z >= len(fp.zones):
        raise ConfigError("zone", f"zone index {z} outside 0..{len(fp.zones) - 1}")
    cfg.controls()
    return cfg


def loads(text: str) -> ScenarioConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return validate(raw)


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return loads(text)


def floorplan_from_dict(d: dict) -> meshmod.FloorPlan:
    R = lambda r: meshmod.Rect(*map(float, r))  # noqa: E731
    S = lambda s: meshmod.Segment(s["side"], float(s["start"]), float(s["end"]))  # noqa: E731
    return meshmod.FloorPlan(
        width=float(d["width"]), height=float(d["height"]),
        walls=tuple(R(r) for r in d.get("walls", [])),
        openings=tuple(R(r) for r in d.get("openings", [])),
        outlets=tuple(S(s) for s in d.get("outlets", [])),
        inlet=S(d["inlet"]) if d.get("inlet") else None,
        heaters=tuple(R(r) for r in d.get("heaters", [])),
        zones=tuple(R(r) for r in d.get("zones", [])))


def floorplan_to_dict(fp: meshmod.FloorPlan) -> dict:
    seg = lambda s: {"side": s.side, "start": s.start, "end": s.end}  # noqa: E731
    return {"width": fp.width, "height": fp.height,
            "walls": [r.to_list() for r in fp.walls], "openings": [r.to_list() for r in fp.openings],
            "outlets": [seg(s) for s in fp.outlets], "inlet": seg(fp.inlet) if fp.inlet else None,
            "heaters": [r.to_list() for r in fp.heaters], "zones": [r.to_list() for r in fp.zones]}


# ---- energy ----------------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    heater_energy: float      # Wh
    fan_energy: float         # Wh
    avg_abs_error_tf: float   # degC over the zone at t_f
    zone_avg_change: float    # degC, zone-average temperature change over the horizon
    energy_per_degree: float | None  # Wh/degC; None when the change is below 0.01 degC

    @property
    def total(self) -> float:
        return self.heater_energy + self.fan_energy

    def to_dict(self) -> dict:
        return {"heater_energy_Wh": self.heater_energy, "fan_energy_Wh": self.fan_energy,
                "total_Wh": self.total, "avg_abs_error_tf": self.avg_abs_error_tf,
                "zone_avg_change": self.zone_avg_change, "energy_per_degree": self.energy_per_degree}


def energy_report(asm: Assembler, flow: FlowField, traj: ThermalTrajectory, controls: ControlVector,
                  zone_elements, target_rel: float) -> EnergyReport:
    """Heater energy (rectangle rule, v in kW), fan energy from gauge pressure, zone statistics."""
    dt = traj.dt
    t_f = dt * traj.n_steps
    heater = float(np.sum(controls.v + controls.v2)) * 1000.0 * dt / 3600.0
    fan = fan_power(asm, flow) * t_f / 3600.0
    change = zone_average(asm, traj.states[-1], zone_elements) - zone_average(asm, traj.states[0], zone_elements)
    err = zone_abs_error(asm, traj.states[-1], zone_elements, target_rel)
    epd = (heater + fan) / change if change > 0.01 else None
    return EnergyReport(heater, fan, err, change, epd)


# ---- drivers ----------------------------------------------------------------------------------

class Scenario:
    """Mesh, assembled operators and control problem for one config and target zone."""

    def __init__(self, cfg: ScenarioConfig, zone=None):
        self.cfg = cfg
        self.zone = cfg["zone"] if zone is None else zone
        m = cfg["mesh"]
        self.mesh = meshmod.generate(cfg.floorplan(), m["target_h"], m["pattern"])
        self.asm = Assembler(self.mesh, cfg.coefficients())
        self.zone_elements = self.mesh.zone_elements(self.zone)
        s = cfg["solver"]
        self.problem = ControlProblem(
            self.asm, self.zone_elements, target=cfg.target_rel, dt=cfg.dt, n_steps=cfg.n_steps,
            lam1=cfg["cost"]["lam1"], lam2=cfg["cost"]["lam2"], theta=cfg.theta, bounds=cfg.bounds(),
            fd_step=s["fd_step"], flow_tol=s["flow_tol"], flow_max_iters=s["flow_max_iters"])


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _snapshots(n_steps: int) -> list[int]:
    return sorted({0, n_steps // 2, n_steps})


def run_simulate(cfg: ScenarioConfig, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sc = Scenario(cfg)
    c = cfg.controls()
    cost, flow, traj = sc.problem.evaluate(c)
    rep = energy_report(sc.asm, flow, traj, c, sc.zone_elements, cfg.target_rel)
    write_trajectory_csv(out / "trajectory.csv", sc.asm, traj, sc.zone_elements)
    write_flow_vtk(out / "flow.vtk", sc.asm, flow)
    write_flow_csv(out / "flow.csv", sc.asm, flow)
    for k in _snapshots(traj.n_steps):
        write_temperature_vtk(out / f"temperature_{k:04d}.vtk", sc.asm, traj[k])
    summary = {"zone": sc.zone, "controls": c.to_dict(), "cost": cost.to_dict(),
               "energy": rep.to_dict(), "zone_avg_tf": zone_average(sc.asm, traj.states[-1], sc.zone_elements),
               "flow": {"newton_iters": flow.newton_iters, "residual_norm": flow.residual_norm},
               "stability_warning": traj.stability_warning}
    _dump(out / "energy.json", rep.to_dict())
    _dump(out / "summary.json", summary)
    return summary


def run_optimize(cfg: ScenarioConfig, out, zone=None) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sc = Scenario(cfg, zone)
    s = cfg["solver"]
    res = optimize(sc.problem, max_iters=s["opt_max_iters"], tol=s["opt_tol"])
    rep = energy_report(sc.asm, res.flow, res.trajectory, res.controls, sc.zone_elements, cfg.target_rel)
    write_iteration_csv(out / "iterations.csv", res.history)
    write_trajectory_csv(out / "trajectory.csv", sc.asm, res.trajectory, sc.zone_elements)
    write_flow_vtk(out / "flow.vtk", sc.asm, res.flow)
    write_flow_csv(out / "flow.csv", sc.asm, res.flow)
    write_temperature_vtk(out / "temperature_final.vtk", sc.asm, res.trajectory.final)
    result = {"zone": sc.zone, "controls": res.controls.to_dict(), "cost": res.cost.to_dict(),
              "gradient_norm": res.gradient_norm, "iterations": res.iterations,
              "converged": res.converged, "message": res.message, "energy": rep.to_dict(),
              "heater1_energy_Wh": float(res.controls.v.sum()) * 1000 * cfg.dt / 3600,
              "heater2_energy_Wh": float(res.controls.v2.sum()) * 1000 * cfg.dt / 3600,
              "zone_avg_tf": zone_average(sc.asm, res.trajectory.states[-1], sc.zone_elements)}
    if sc.zone == "whole":
        # the whole-apartment run judged inside each candidate zone
        result["per_zone"] = [
            energy_report(sc.asm, res.flow, res.trajectory, res.controls, sc.mesh.zone_sets[i],
                          cfg.target_rel).to_dict() for i in range(len(sc.mesh.zone_sets))]
    _dump(out / "result.json", result)
    _dump(out / "energy.json", rep.to_dict())
    return result


def _sweep_job(args):
    data, out, zone = args
    cfg = ScenarioConfig(data)
    name = "whole" if zone == "whole" else f"zone_{zone:02d}"
    try:
        return zone, run_optimize(cfg, Path(out) / name, zone), None
    except Exception as exc:  # recorded per zone; the sweep carries on
        log.exception("zone %s failed", zone)
        return zone, None, f"{type(exc).__name__}: {exc}"


def order_stats(values) -> dict:
    a = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if a.size == 0:
        return {"n": 0, "mean": None, "median": None, "q1": None, "q3": None}
    q1, med, q3 = np.percentile(a, [25, 50, 75])
    return {"n": int(a.size), "mean": float(a.mean()), "median": float(med), "q1": float(q1), "q3": float(q3)}


SUMMARY_COLUMNS = ["zone", "converged", "avg_abs_error_tf", "zone_avg_change", "heater_energy_Wh",
                   "fan_energy_Wh", "total_Wh", "energy_per_degree", "heater1_energy_Wh",
                   "heater2_energy_Wh", "u_o", "u_o2", "error"]


def run_sweep(cfg: ScenarioConfig, out, workers: int = 1) -> dict:
    """Optimize every candidate zone plus the whole apartment and tabulate the statistics."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    n = len(cfg.floorplan().zones)
    jobs = [(cfg.to_dict(), str(out), z) for z in [*range(n), "whole"]]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows = []
    for zone, res, err in results:
        row = {"zone": zone, "error": err}
        if res is not None:
            e = res["energy"]
            row.update(converged=res["converged"], avg_abs_error_tf=e["avg_abs_error_tf"],
                       zone_avg_change=e["zone_avg_change"], heater_energy_Wh=e["heater_energy_Wh"],
                       fan_energy_Wh=e["fan_energy_Wh"], total_Wh=e["total_Wh"],
                       energy_per_degree=e["energy_per_degree"],
                       heater1_energy_Wh=res["heater1_energy_Wh"], heater2_energy_Wh=res["heater2_energy_Wh"],
                       u_o=res["controls"]["u_o"], u_o2=res["controls"]["u_o2"])
        rows.append(row)
    zoned = [r for r in rows if r["zone"] != "whole" and r["error"] is None]
    whole = next(r for r in rows if r["zone"] == "whole")
    summary = {
        "rows": rows,
        "n_zones": n,
        "n_succeeded": len(zoned),
        "zoned": {"avg_abs_error_tf": order_stats(r["avg_abs_error_tf"] for r in zoned),
                  "energy_per_degree": order_stats(r["energy_per_degree"] for r in zoned)},
        "whole": {k: whole.get(k) for k in ("avg_abs_error_tf", "energy_per_degree", "total_Wh")},
    }
    whole_res = next((res for z, res, _ in results if z == "whole"), None)
    if whole_res is not None:
        pz = whole_res["per_zone"]
        summary["whole_in_zones"] = {
            "avg_abs_error_tf": order_stats(p["avg_abs_error_tf"] for p in pz),
            "energy_per_degree": order_stats(p["energy_per_degree"] for p in pz)}
    _dump(out / "summary.json", summary)
    lines = [",".join(SUMMARY_COLUMNS)]
    for r in rows:
        lines.append(",".join(_csv_cell(r.get(c)) for c in SUMMARY_COLUMNS))
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    return summary


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    s = str(v)
    return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s


def mesh_info(cfg: ScenarioConfig) -> dict:
    m = cfg["mesh"]
    mesh = meshmod.generate(cfg.floorplan(), m["target_h"], m["pattern"])
    nT, npr, nu = meshmod.node_counts(mesh)
    return {"N_pl": mesh.n_triangles, "N_v": mesh.n_vertices, "N_edges": mesh.n_edges,
            "N_w": mesh.n_vertices + mesh.n_edges, "N_Te": nT, "N_p": npr, "N_u": nu,
            "regions": {meshmod.REGION_NAMES[k]: int(np.sum(mesh.element_region == k)) for k in meshmod.REGION_NAMES},
            "boundary_edges": {meshmod.SEGMENT_NAMES[k]: int(np.sum(mesh.boundary_edges[:, 2] == k))
                               for k in meshmod.SEGMENT_NAMES}}
