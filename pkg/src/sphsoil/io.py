"""Scenario files, particle snapshots, probe series and run manifests.

Scenario files are YAML documents with a ``schema_version`` key; the
layout is documented in the README and mirrored by
:meth:`ScenarioConfig.to_dict`. Tabular outputs are comma-separated with a
header row that carries units, and floats are written with ``repr`` so
they read back bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from sphsoil.constitutive import MaterialParams
from sphsoil.errors import InvalidArgumentError, ScenarioError
from sphsoil.momentum import XI_MAX, XI_RECOMMENDED
from sphsoil.particles import Particles
from sphsoil.scenarios import (
    SCHEMA_VERSION,
    SUPPORT_BAND,
    Formulation,
    LoadingPhase,
    OutputPlan,
    Probe,
    ScenarioConfig,
    Stabilization,
    geometry_from_dict,
)

# -- scenario files ---------------------------------------------------------------------

_SECTIONS = {
    "material": (MaterialParams, {"E", "nu", "gamma_sat", "gamma_unsat", "gamma_w", "phi"}),
    "loading": (LoadingPhase, {"method", "xi", "duration", "early_exit", "v_threshold", "hold_steps", "min_duration"}),
    "formulation": (Formulation, {"pwater", "stress_form", "kernel_correction", "continuity"}),
    "stabilization": (Stabilization, {"alpha_visc", "beta_visc", "viscosity", "artificial_stress", "eps_as", "n_as"}),
    "output": (OutputPlan, {"probe_interval", "snapshot_interval", "vtk", "figures"}),
}
_TOP_KEYS = {
    "schema_version", "name", "geometry", "spacing", "h_ratio", "lattice", "water_level", "material",
    "boundaries", "loading", "analysis_duration", "formulation", "stabilization", "time", "probes",
    "output", "deterministic", "perturbation", "seed",
}
_CHOICES = {
    "formulation.pwater": ("corrected", "conventional"),
    "formulation.stress_form": ("rho2", "rhoab"),
    "loading.method": ("gravity_damped", "k0"),
    "lattice": ("surface", "cell"),
}


def _line_index(node, prefix="", out=None):
    """Map dotted key paths to 1-based source lines from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_index(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for k, value in enumerate(node.value):
            path = f"{prefix}[{k}]"
            out[path] = value.start_mark.line + 1
            _line_index(value, path, out)
    return out


class _Reader:
    def __init__(self, lines):
        self.lines = lines

    def error(self, message, path):
        line = self.lines.get(path)
        probe = path
        while line is None and ("." in probe or "[" in probe):
            probe = probe[: max(probe.rfind("."), probe.rfind("["))]
            line = self.lines.get(probe)
        return ScenarioError(message, field=path, line=line)

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            raise self.error("expected a mapping", path)
        for key in value:
            if key not in allowed:
                raise self.error(f"unknown key {key!r}", f"{path}.{key}" if path else str(key))
        return value

    def number(self, value, path, positive=False, allow_none=False):
        if value is None and allow_none:
            return None
        if isinstance(value, str):
            # YAML 1.1 reads exponents without a sign ("15.0e6") as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"expected a number, got {value!r}", path)
        if not math.isfinite(value):
            raise self.error("must be finite", path)
        if positive and value <= 0:
            raise self.error("must be > 0", path)
        return float(value)

    def flag(self, value, path):
        if not isinstance(value, bool):
            raise self.error(f"expected true or false, got {value!r}", path)
        return value

    def integer(self, value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(f"expected an integer, got {value!r}", path)
        return value

    def section(self, data, name):
        cls, keys = _SECTIONS[name]
        raw = self.mapping(data.get(name, {}), name, keys)
        kwargs = {}
        for key, value in raw.items():
            path = f"{name}.{key}"
            if path in _CHOICES:
                if value not in _CHOICES[path]:
                    raise self.error(f"must be one of {', '.join(_CHOICES[path])}, got {value!r}", path)
                kwargs[key] = value
            elif isinstance(value, bool):
                kwargs[key] = value
            elif key in ("hold_steps",):
                kwargs[key] = self.integer(value, path)
            else:
                kwargs[key] = self.number(value, path)
        try:
            return cls(**kwargs)
        except (TypeError, InvalidArgumentError) as exc:
            raise self.error(str(exc), _guess_field(name, str(exc), raw)) from exc


def _guess_field(section, message, raw):
    for key in raw:
        if key in message:
            return f"{section}.{key}"
    if "Poisson" in message:
        return f"{section}.nu"
    return section


def parse_scenario(text: str) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from YAML text.

    Raises :class:`ScenarioError` carrying the offending key path and source
    line for syntax, schema and value errors.
    """
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from exc
    if data is None:
        raise ScenarioError("scenario file is empty")
    r = _Reader(_line_index(node))
    r.mapping(data, "", _TOP_KEYS)
    version = data.get("schema_version")
    if version is None:
        raise r.error("missing schema_version", "schema_version")
    if version != SCHEMA_VERSION:
        raise r.error(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})", "schema_version")
    for key in ("name", "geometry", "spacing", "material"):
        if key not in data:
            raise r.error("required key is missing", key)
    name = data["name"]
    if not isinstance(name, str) or not name:
        raise r.error("expected a non-empty string", "name")

    geo = r.mapping(data["geometry"], "geometry", {"type", "x0", "y0", "width", "height", "points"})
    try:
        geometry = geometry_from_dict(geo)
    except KeyError as exc:
        raise r.error(f"missing key {exc.args[0]!r}", "geometry") from exc
    except (TypeError, ValueError) as exc:
        raise r.error(str(exc), "geometry") from exc
    if geo.get("type", "rectangle") == "rectangle":
        for key in ("width", "height"):
            r.number(geo[key], f"geometry.{key}", positive=True)

    kwargs = dict(
        name=name,
        geometry=geometry,
        spacing=r.number(data["spacing"], "spacing", positive=True),
        material=r.section(data, "material"),
        water_level=r.number(data.get("water_level"), "water_level", allow_none=True),
        loading=r.section(data, "loading"),
        formulation=r.section(data, "formulation"),
        stabilization=r.section(data, "stabilization"),
        output=r.section(data, "output"),
    )
    if "h_ratio" in data:
        kwargs["h_ratio"] = r.number(data["h_ratio"], "h_ratio", positive=True)
    if "lattice" in data:
        if data["lattice"] not in _CHOICES["lattice"]:
            raise r.error(f"must be one of surface, cell, got {data['lattice']!r}", "lattice")
        kwargs["lattice"] = data["lattice"]
    if "boundaries" in data:
        b = r.mapping(data["boundaries"], "boundaries", {"left", "right", "bottom", "top"})
        allowed = ("free", "free_roller", "full_fixity")
        for side, cond in b.items():
            if cond not in allowed:
                raise r.error(f"must be one of {', '.join(allowed)}, got {cond!r}", f"boundaries.{side}")
        merged = ScenarioConfig.__dataclass_fields__["boundaries"].default_factory()
        merged.update(b)
        kwargs["boundaries"] = merged
    if "analysis_duration" in data:
        kwargs["analysis_duration"] = r.number(data["analysis_duration"], "analysis_duration")
    if "time" in data:
        t = r.mapping(data["time"], "time", {"cfl", "dt_every"})
        if "cfl" in t:
            kwargs["cfl"] = r.number(t["cfl"], "time.cfl", positive=True)
        if "dt_every" in t:
            kwargs["dt_every"] = r.integer(t["dt_every"], "time.dt_every")
    if "probes" in data:
        if not isinstance(data["probes"], list):
            raise r.error("expected a list", "probes")
        probes = []
        for k, item in enumerate(data["probes"]):
            path = f"probes[{k}]"
            item = r.mapping(item, path, {"label", "position"})
            pos = item.get("position")
            if not (isinstance(pos, list) and len(pos) == 2):
                raise r.error("position must be a list [x, y]", f"{path}.position")
            probes.append(Probe(str(item.get("label", f"P{k}")),
                                tuple(r.number(c, f"{path}.position") for c in pos)))
        kwargs["probes"] = tuple(probes)
    if "deterministic" in data:
        kwargs["deterministic"] = r.flag(data["deterministic"], "deterministic")
    if "perturbation" in data:
        kwargs["perturbation"] = r.number(data["perturbation"], "perturbation")
    if "seed" in data:
        kwargs["seed"] = r.integer(data["seed"], "seed")
    try:
        return ScenarioConfig(**kwargs)
    except InvalidArgumentError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text())


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


def save_scenario(cfg: ScenarioConfig, path):
    Path(path).write_text(dump_scenario(cfg))


@dataclass
class Issue:
    level: str  # "error" or "warning"
    field: str | None
    message: str
    line: int | None = None

    def __str__(self):
        loc = f"line {self.line}, " if self.line else ""
        where = f"{loc}field '{self.field}': " if self.field else loc
        return f"{self.level}: {where}{self.message}"


def validate_text(text: str) -> list[Issue]:
    """Schema and physics checks without running; an empty list means ok."""
    try:
        cfg = parse_scenario(text)
    except ScenarioError as exc:
        return [Issue("error", exc.field, exc.message, exc.line)]
    lines = _line_index(yaml.compose(text))
    return check_config(cfg, lines)


def check_config(cfg: ScenarioConfig, lines=None) -> list[Issue]:
    """Physics-level checks on a parsed scenario."""
    lines = lines or {}
    issues = []

    def add(level, path, message):
        issues.append(Issue(level, path, message, lines.get(path)))

    xi = cfg.loading.xi
    lo, hi = XI_RECOMMENDED
    if cfg.loading.method == "gravity_damped":
        if xi < 0 or xi > XI_MAX:
            add("error", "loading.xi", f"damping coefficient {xi} outside [0, {XI_MAX}]")
        if xi != 0 and not lo <= xi <= hi:
            add("warning", "loading.xi", f"outside recommended range {lo}–{hi}")
    xmin, xmax, ymin, ymax = cfg.geometry.bounds()
    if cfg.water_level is not None and cfg.water_level < ymin:
        add("warning", "water_level", "water level lies below the soil body")
    band = SUPPORT_BAND * cfg.h
    if band < 2.0 * cfg.h - 1e-12:
        add("error", "h_ratio", "boundary band narrower than the kernel support")
    if cfg.h_ratio < 1.0 or cfg.h_ratio > 2.0:
        add("warning", "h_ratio", f"h/spacing = {cfg.h_ratio} gives few or very many neighbours")
    for k, p in enumerate(cfg.probes):
        x, y = p.position
        if not (xmin <= x <= xmax and ymin <= y <= ymax):
            add("error", f"probes[{k}].position", f"probe {p.label} lies outside the soil box")
    if cfg.loading.method == "k0" and not _is_flat(cfg):
        add("error", "loading.method", "K0 initialisation needs a horizontal ground surface")
    return issues


def _is_flat(cfg):
    xmin, xmax, _, _ = cfg.geometry.bounds()
    xs = np.linspace(xmin, xmax, 101)
    top = np.asarray(cfg.surface_level(xs), dtype=float)
    return float(top.max() - top.min()) < 1e-9


# -- particle snapshots -----------------------------------------------------------------

SNAPSHOT_COLUMNS = (
    ("id", "-"), ("kind", "-"), ("x", "m"), ("y", "m"), ("vx", "m/s"), ("vy", "m/s"),
    ("rho", "kg/m3"), ("rho0", "kg/m3"), ("m", "kg/m"),
    ("sxx_eff", "Pa"), ("syy_eff", "Pa"), ("sxy_eff", "Pa"), ("szz_eff", "Pa"), ("pw", "Pa"),
    ("sxx", "Pa"), ("syy", "Pa"), ("sxy", "Pa"), ("szz", "Pa"),
)


def _fmt(v):
    return repr(float(v))


def snapshot_header():
    return [f"{name}[{unit}]" for name, unit in SNAPSHOT_COLUMNS]


def write_snapshot(path, particles: Particles, time: float, ids=None):
    """Write one particle snapshot; total stress is derived here from effective stress and pore pressure."""
    p = particles
    n = len(p)
    ids = np.arange(n) if ids is None else np.asarray(ids)
    total = p.total_sigma()
    szz_total = p.sigma_zz + p.pw
    with open(path, "w", newline="") as fh:
        fh.write(f"# time[s]={_fmt(time)}\n")
        w = csv.writer(fh)
        w.writerow(snapshot_header())
        for a in range(n):
            w.writerow([
                int(ids[a]), int(p.kind[a]),
                *map(_fmt, (p.x[a, 0], p.x[a, 1], p.v[a, 0], p.v[a, 1], p.rho[a], p.rho0[a], p.m[a],
                            p.sigma[a, 0, 0], p.sigma[a, 1, 1], p.sigma[a, 0, 1], p.sigma_zz[a], p.pw[a],
                            total[a, 0, 0], total[a, 1, 1], total[a, 0, 1], szz_total[a])),
            ])


def read_snapshot(path):
    """Read a snapshot back; returns ``(time, ids, particles)``."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# time[s]="):
            raise InvalidArgumentError(f"{path}: not a snapshot file")
        time = float(first.split("=", 1)[1])
        rows = list(csv.reader(fh))
    if rows[0] != snapshot_header():
        raise InvalidArgumentError(f"{path}: unexpected header")
    data = rows[1:]
    n = len(data)
    ids = np.array([int(r[0]) for r in data], dtype=np.int64)
    vals = np.array([[float(c) for c in r[2:]] for r in data], dtype=float).reshape(n, -1)
    p = Particles.empty(n)
    p.kind[:] = [int(r[1]) for r in data]
    p.x[:] = vals[:, 0:2]
    p.v[:] = vals[:, 2:4]
    p.rho[:] = vals[:, 4]
    p.rho0[:] = vals[:, 5]
    p.m[:] = vals[:, 6]
    p.sigma[:, 0, 0] = vals[:, 7]
    p.sigma[:, 1, 1] = vals[:, 8]
    p.sigma[:, 0, 1] = vals[:, 9]
    p.sigma[:, 1, 0] = vals[:, 9]
    p.sigma_zz[:] = vals[:, 10]
    p.pw[:] = vals[:, 11]
    return time, ids, p


def write_vtk(path, particles: Particles, time: float):
    """Legacy ASCII VTK polydata with one vertex per particle."""
    p = particles
    n = len(p)
    total = p.total_sigma()
    lines = [
        "# vtk DataFile Version 3.0",
        f"sphsoil particles t={_fmt(time)}",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {n} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in p.x]
    lines.append(f"VERTICES {n} {2 * n}")
    lines += [f"1 {a}" for a in range(n)]
    lines.append(f"POINT_DATA {n}")
    lines += ["SCALARS kind int 1", "LOOKUP_TABLE default"] + [str(int(k)) for k in p.kind]
    for name, arr in (("rho", p.rho), ("pw", p.pw), ("syy_eff", p.sigma[:, 1, 1]),
                      ("sxx_eff", p.sigma[:, 0, 0]), ("sxy_eff", p.sigma[:, 0, 1]), ("syy", total[:, 1, 1])):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_fmt(v) for v in arr]
    lines.append("VECTORS velocity double")
    lines += [f"{_fmt(vx)} {_fmt(vy)} 0.0" for vx, vy in p.v]
    Path(path).write_text("\n".join(lines) + "\n")


# -- probe series -----------------------------------------------------------------------

PROBE_FIELDS = ("sxx_eff", "syy_eff", "sxy_eff", "szz_eff", "pw", "sxx", "syy", "sxy", "szz", "vx", "vy")
PROBE_UNITS = {"vx": "m/s", "vy": "m/s"}


@dataclass
class ProbeSeries:
    label: str
    position: tuple
    t: list = field(default_factory=list)
    values: dict = field(default_factory=lambda: {k: [] for k in PROBE_FIELDS})

    def append(self, t, record):
        self.t.append(float(t))
        for k in PROBE_FIELDS:
            self.values[k].append(float(record[k]))

    def array(self, key):
        return np.asarray(self.t if key == "t" else self.values[key], dtype=float)

    def final(self, key):
        return self.values[key][-1] if self.t else math.nan


def probe_header():
    return ["label", "x[m]", "y[m]", "t[s]"] + [f"{k}[{PROBE_UNITS.get(k, 'Pa')}]" for k in PROBE_FIELDS]


def write_probes(path, series: list[ProbeSeries]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(probe_header())
        for s in series:
            for k, t in enumerate(s.t):
                w.writerow([s.label, _fmt(s.position[0]), _fmt(s.position[1]), _fmt(t)]
                           + [_fmt(s.values[f][k]) for f in PROBE_FIELDS])


def read_probes(path) -> list[ProbeSeries]:
    out: dict[str, ProbeSeries] = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != probe_header():
        raise InvalidArgumentError(f"{path}: not a probe file")
    for r in rows[1:]:
        label = r[0]
        if label not in out:
            out[label] = ProbeSeries(label, (float(r[1]), float(r[2])))
        out[label].append(float(r[3]), dict(zip(PROBE_FIELDS, map(float, r[4:]))))
    return list(out.values())


# -- manifest ---------------------------------------------------------------------------


def write_manifest(path, manifest: dict):
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=False, default=_json_default) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
