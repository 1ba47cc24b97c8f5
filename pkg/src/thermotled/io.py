"""Config parsing, snapshot and CSV output, and isotherm volumes.

Config files are sectioned ``key = value`` text read with :mod:`configparser`.
Sections and keys (SI units, temperatures in degC)::

    [mesh]          file | box, divisions, kind, origin
    [material]      mu, kappa, eta_a, fiber
    [thermal]       density, specific_heat, conductivity | conductivity_tensor,
                    perfusion_rate, blood_specific_heat, arterial_temperature,
                    metabolic_rate, reference_temperature, initial_temperature
    [expansion]     kind, alpha, reference_temperature, axes
    [viscoelastic]  prony
    [sources]       <name> = power=Q (center=x,y,z diameter=D | elements=SET) [start=s] [end=s]
    [bcs]           fixed, prescribed, ramp_time, body_force, force, fixed_temperature
    [sim]           dt, duration, coupling, expansion, temperature_dependent, damping,
                    hourglass_stiffness, allow_unstable_dt, workers, kernels
    [output]        snapshot_interval, probes, fields, ablation_thresholds

Property tables are written ``3600@37, 4300@90`` (value@temperature); a bare
number is a constant. Tensor conductivity entries are nine numbers then
``@T``, entries separated by ``;``. Prony terms are ``phi:tau`` pairs.
Node sets may be written ``a-b`` for the set difference.
Prescribed displacements are ``SET:component:value`` with component ``x``,
``y`` or ``z``; fixed temperatures are ``SET:value``; forces ``SET:fx,fy,fz``
(per node) separated by ``;``. Node ids in ``probes`` are 1-based as in mesh
files.
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bioheat import FixedTemperature, HeatSourceSet, RegionalSource
from .engine import ConfigError, Problem, SimulationConfig, Snapshot
from .materials import (
    EXPANSION_KINDS,
    ExpansionSpec,
    HyperelasticParams,
    MaterialError,
    MaterialModel,
    PronySeries,
    PropertyTable,
    ThermalProps,
)
from .mechanics import MechBCs, Prescribed
from .mesh import Mesh, MeshError, box_mesh, read_mesh

__all__ = [
    "MeshSpec",
    "SourceSpec",
    "BCSpec",
    "ConfigBundle",
    "parse_config",
    "read_config",
    "serialize_config",
    "apply_overrides",
    "load_problem_mesh",
    "build_problem",
    "sphere_elements",
    "write_snapshot",
    "read_snapshot",
    "snapshot_name",
    "SnapshotWriter",
    "ProbeWriter",
    "AblationReport",
    "AblationWriter",
    "ablation_volume",
    "tet_clip_volume",
    "PROBE_HEADER",
    "ABLATION_HEADER",
]

PROBE_HEADER = ("time", "node_id", "T", "ux", "uy", "uz")
ABLATION_HEADER = ("time", "threshold", "volume_m3", "elements_above")
COMPONENTS = {"x": 0, "y": 1, "z": 2}
VTK_CELL_TYPES = {"T4": 10, "H8": 12}


# ----------------------------------------------------------------------------
# config bundle


@dataclass(frozen=True)
class MeshSpec:
    file: str | None = None
    box: tuple[float, float, float] | None = None
    divisions: tuple[int, int, int] = (1, 1, 1)
    kind: str = "H8"
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SourceSpec:
    name: str
    power: float
    start: float = 0.0
    end: float = math.inf
    elements: str | None = None
    center: tuple[float, float, float] | None = None
    diameter: float | None = None


@dataclass(frozen=True)
class BCSpec:
    fixed: tuple[str, ...] = ()
    prescribed: tuple[tuple[str, int, float], ...] = ()
    ramp_time: float | None = None
    body_force: tuple[float, float, float] | None = None
    forces: tuple[tuple[str, tuple[float, float, float]], ...] = ()
    fixed_temperature: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class ConfigBundle:
    sim: SimulationConfig
    material: MaterialModel
    bcs: BCSpec
    sources: tuple[SourceSpec, ...]
    mesh: MeshSpec
    initial_temperature: float = 37.0
    base_dir: str = field(default=".", compare=False)

    @property
    def mesh_path(self) -> Path | None:
        if self.mesh.file is None:
            return None
        p = Path(self.mesh.file)
        return p if p.is_absolute() else Path(self.base_dir) / p


KNOWN_KEYS = {
    "mesh": {"file", "box", "divisions", "kind", "origin"},
    "material": {"mu", "kappa", "eta_a", "fiber"},
    "thermal": {
        "density", "specific_heat", "conductivity", "conductivity_tensor", "perfusion_rate",
        "blood_specific_heat", "arterial_temperature", "metabolic_rate",
        "reference_temperature", "initial_temperature",
    },
    "expansion": {"kind", "alpha", "reference_temperature", "axes"},
    "viscoelastic": {"prony"},
    "sources": None,  # free-form names
    "bcs": {"fixed", "prescribed", "ramp_time", "body_force", "force", "fixed_temperature"},
    "sim": {
        "dt", "duration", "coupling", "expansion", "temperature_dependent", "damping",
        "hourglass_stiffness", "allow_unstable_dt", "workers", "kernels",
    },
    "output": {"snapshot_interval", "probes", "fields", "ablation_thresholds"},
}
SOURCE_KEYS = {"power", "start", "end", "elements", "center", "diameter"}


class _Section:
    """Typed access to one config section."""

    def __init__(self, name: str, items: dict[str, str]):
        self.name = name
        self.items = items

    def has(self, key):
        return key in self.items

    def raw(self, key, default=None, required=False):
        if key not in self.items:
            if required:
                raise ConfigError(f"missing required key {self.name}.{key}")
            return default
        return self.items[key].strip()

    def float(self, key, default=None, required=False, positive=False, nonneg=False):
        text = self.raw(key, None, required)
        if text is None:
            return default
        try:
            v = float(text)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected a number, got {text!r}") from None
        if positive and not v > 0:
            raise ConfigError(f"{self.name}.{key} must be positive, got {text}")
        if nonneg and not v >= 0:
            raise ConfigError(f"{self.name}.{key} must be nonnegative, got {text}")
        return v

    def int(self, key, default=None):
        text = self.raw(key)
        if text is None:
            return default
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: expected an integer, got {text!r}") from None

    def bool(self, key, default=False):
        text = self.raw(key)
        if text is None:
            return default
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.name}.{key}: expected a boolean, got {text!r}")

    def floats(self, key, n=None, default=None):
        text = self.raw(key)
        if text is None:
            return default
        vals = _floats(text, f"{self.name}.{key}")
        if n is not None and len(vals) != n:
            raise ConfigError(f"{self.name}.{key}: expected {n} values, got {len(vals)}")
        return vals

    def names(self, key):
        text = self.raw(key)
        if not text:
            return ()
        return tuple(s.strip() for s in text.split(",") if s.strip())


def _floats(text: str, where: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from None


def _entries(text: str) -> list[str]:
    sep = ";" if ";" in text else ","
    return [e.strip() for e in text.split(sep) if e.strip()]


def _table(text: str, where: str, tensor: bool = False) -> PropertyTable:
    entries = [e.strip() for e in text.split(";") if e.strip()] if tensor else _entries(text)
    temps, vals = [], []
    for entry in entries:
        v, at, t = entry.rpartition("@") if "@" in entry else (entry, "", "")
        nums = _floats(v, where)
        if t:
            tt = _floats(t, where)
            if len(tt) != 1:
                raise ConfigError(f"{where}: bad temperature in {entry!r}")
            temps.append(tt[0])
        else:
            temps.append(None)
        want = 9 if tensor else 1
        if len(nums) != want:
            raise ConfigError(f"{where}: expected {want} value(s) per entry, got {entry!r}")
        vals.append(np.reshape(nums, (3, 3)) if tensor else nums[0])
    if not vals:
        raise ConfigError(f"{where}: empty property table")
    if len(vals) == 1 and temps[0] is None:
        return PropertyTable.constant(vals[0])
    if any(t is None for t in temps):
        raise ConfigError(f"{where}: every table entry needs @temperature")
    try:
        return PropertyTable(np.array(temps), np.array(vals))
    except MaterialError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    return cp


def _split_override(item: str) -> tuple[str, str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, value = item.split("=", 1)
    key = key.strip()
    if "." not in key:
        raise ConfigError(f"override key {key!r} must be section.key")
    section, name = key.split(".", 1)
    return section.strip(), name.strip(), value.strip()


def apply_overrides(cp: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    for item in overrides:
        section, name, value = _split_override(item)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value)


def parse_config(text: str, overrides: Sequence[str] = (), base_dir=".") -> ConfigBundle:
    """Parse and validate config text; ``overrides`` are ``section.key=value`` strings.

    Raises :class:`ConfigError` naming the offending key.
    """
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None
    apply_overrides(cp, overrides)
    for sec in cp.sections():
        if sec not in KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{sec}]")
        allowed = KNOWN_KEYS[sec]
        if allowed is not None:
            for key in cp[sec]:
                if key not in allowed:
                    raise ConfigError(f"unknown config key {sec}.{key}")
    S = {name: _Section(name, dict(cp[name]) if cp.has_section(name) else {}) for name in KNOWN_KEYS}
    try:
        return _build_bundle(S, str(base_dir))
    except (MaterialError, MeshError) as exc:
        raise ConfigError(str(exc)) from None


def read_config(path, overrides: Sequence[str] = ()) -> ConfigBundle:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides, base_dir=str(path.parent))


def _build_bundle(S: dict[str, _Section], base_dir: str) -> ConfigBundle:
    # mesh
    m = S["mesh"]
    if m.has("file") == m.has("box"):
        raise ConfigError("mesh needs exactly one of mesh.file or mesh.box")
    kind = (m.raw("kind") or "H8").upper()
    if kind not in ("T4", "H8"):
        raise ConfigError(f"mesh.kind must be T4 or H8, got {kind!r}")
    divisions = m.floats("divisions", 3, (1, 1, 1))
    if any(d < 1 or d != int(d) for d in divisions):
        raise ConfigError("mesh.divisions must be positive integers")
    box = m.floats("box", 3)
    if box is not None and any(not b > 0 for b in box):
        raise ConfigError("mesh.box sizes must be positive")
    mesh = MeshSpec(m.raw("file"), box, tuple(int(d) for d in divisions), kind, m.floats("origin", 3, (0.0, 0.0, 0.0)))

    # material
    mat = S["material"]
    hyper = HyperelasticParams(
        mat.float("mu", required=True, positive=True),
        mat.float("kappa", required=True, positive=True),
        mat.float("eta_a", 0.0, nonneg=True),
    )
    fiber = mat.floats("fiber", 3)
    th = S["thermal"]
    if th.has("conductivity") == th.has("conductivity_tensor"):
        raise ConfigError("thermal needs exactly one of thermal.conductivity or thermal.conductivity_tensor")
    if th.has("conductivity"):
        cond = _table(th.raw("conductivity"), "thermal.conductivity")
    else:
        cond = _table(th.raw("conductivity_tensor"), "thermal.conductivity_tensor", tensor=True)
    props = ThermalProps(
        density=th.float("density", required=True, positive=True),
        specific_heat=_table(th.raw("specific_heat", required=True), "thermal.specific_heat"),
        conductivity=cond,
        perfusion_rate=th.float("perfusion_rate", 0.0, nonneg=True),
        blood_specific_heat=th.float("blood_specific_heat", 0.0, nonneg=True),
        arterial_temperature=th.float("arterial_temperature", 37.0),
        metabolic_rate=th.float("metabolic_rate", 0.0),
        reference_temperature=th.float("reference_temperature", 37.0),
    )
    ex = S["expansion"]
    ex_kind = ex.raw("kind") or "isotropic"
    if ex_kind not in EXPANSION_KINDS:
        raise ConfigError(f"expansion.kind must be one of {', '.join(EXPANSION_KINDS)}")
    alphas = ex.floats("alpha", None, (0.0,) * EXPANSION_KINDS[ex_kind])
    expansion = ExpansionSpec(ex_kind, alphas, ex.float("reference_temperature", 37.0))
    axes = None
    if ex.has("axes"):
        parts = [_floats(p, "expansion.axes") for p in ex.raw("axes").split(";") if p.strip()]
        if any(len(p) != 3 for p in parts) or not 1 <= len(parts) <= 2:
            raise ConfigError("expansion.axes must be one or two 3-vectors separated by ';'")
        axes = tuple(parts)
    visc = S["viscoelastic"]
    terms = []
    for entry in _entries(visc.raw("prony") or ""):
        pair = entry.split(":")
        if len(pair) != 2:
            raise ConfigError(f"viscoelastic.prony: expected phi:tau, got {entry!r}")
        terms.append(tuple(_floats(" ".join(pair), "viscoelastic.prony")))
    material = MaterialModel(hyper, props, PronySeries(tuple(terms)), expansion, fiber, axes)

    # sources
    sources = []
    for name, text in S["sources"].items.items():
        sources.append(_parse_source(name, text))

    # bcs
    b = S["bcs"]
    prescribed = []
    for entry in _entries(b.raw("prescribed") or ""):
        parts = entry.split(":")
        if len(parts) != 3 or parts[1].strip().lower() not in COMPONENTS:
            raise ConfigError(f"bcs.prescribed: expected SET:x|y|z:value, got {entry!r}")
        prescribed.append(
            (parts[0].strip(), COMPONENTS[parts[1].strip().lower()], _floats(parts[2], "bcs.prescribed")[0])
        )
    forces = []
    for entry in [e for e in (b.raw("force") or "").split(";") if e.strip()]:
        parts = entry.split(":")
        vec = _floats(parts[1], "bcs.force") if len(parts) == 2 else ()
        if len(vec) != 3:
            raise ConfigError(f"bcs.force: expected SET:fx,fy,fz, got {entry.strip()!r}")
        forces.append((parts[0].strip(), vec))
    fixed_T = []
    for entry in _entries(b.raw("fixed_temperature") or ""):
        parts = entry.split(":")
        if len(parts) != 2:
            raise ConfigError(f"bcs.fixed_temperature: expected SET:value, got {entry!r}")
        fixed_T.append((parts[0].strip(), _floats(parts[1], "bcs.fixed_temperature")[0]))
    ramp = b.float("ramp_time", None, nonneg=True)
    bcs = BCSpec(b.names("fixed"), tuple(prescribed), ramp, b.floats("body_force", 3), tuple(forces), tuple(fixed_T))

    # sim and output
    s, o = S["sim"], S["output"]
    sim = SimulationConfig(
        dt=s.float("dt", required=True),
        duration=s.float("duration", required=True),
        coupling=s.raw("coupling") or "coupled",
        expansion=s.bool("expansion", False),
        temperature_dependent=s.bool("temperature_dependent", False),
        damping=s.float("damping", 0.0),
        hourglass_stiffness=s.float("hourglass_stiffness", 0.1),
        snapshot_interval=o.float("snapshot_interval", 0.0),
        probe_nodes=tuple(int(v) for v in o.floats("probes", None, ())),
        fields=o.names("fields") or ("temperature", "displacement"),
        ablation_thresholds=o.floats("ablation_thresholds", None, (60.0,)),
        allow_unstable_dt=s.bool("allow_unstable_dt", False),
        workers=s.int("workers", 1),
        kernels=s.raw("kernels"),
    )
    if any(p < 1 for p in sim.probe_nodes):
        raise ConfigError("output.probes are 1-based node ids")
    return ConfigBundle(sim, material, bcs, tuple(sources), mesh, th.float("initial_temperature", 37.0), base_dir)


def _parse_source(name: str, text: str) -> SourceSpec:
    kv = {}
    for tok in text.split():
        if "=" not in tok:
            raise ConfigError(f"sources.{name}: expected key=value tokens, got {tok!r}")
        k, v = tok.split("=", 1)
        if k not in SOURCE_KEYS:
            raise ConfigError(f"unknown config key sources.{name}.{k}")
        kv[k] = v
    where = f"sources.{name}"
    if "power" not in kv:
        raise ConfigError(f"missing required key {where}.power")
    power = _floats(kv["power"], where)[0]
    if power < 0:
        raise ConfigError(f"{where}.power must be nonnegative")
    start = _floats(kv.get("start", "0"), where)[0]
    end = _floats(kv.get("end", "inf"), where)[0]
    if not start < end:
        raise ConfigError(f"{where}: start must be before end")
    if ("elements" in kv) == ("center" in kv):
        raise ConfigError(f"{where}: give exactly one of elements=SET or center=x,y,z")
    if "center" in kv:
        center = _floats(kv["center"], where)
        if len(center) != 3 or "diameter" not in kv:
            raise ConfigError(f"{where}: sphere needs center=x,y,z and diameter=D")
        d = _floats(kv["diameter"], where)[0]
        if not d > 0:
            raise ConfigError(f"{where}.diameter must be positive")
        return SourceSpec(name, power, start, end, None, center, d)
    return SourceSpec(name, power, start, end, kv["elements"], None, None)


# ----------------------------------------------------------------------------
# serialization


def _num(v) -> str:
    return repr(float(v))


def _vec(v) -> str:
    return ",".join(_num(x) for x in v)


def _table_text(table: PropertyTable) -> str:
    if table.is_tensor:
        return "; ".join(
            " ".join(_num(x) for x in np.ravel(v)) + f" @ {_num(t)}"
            for t, v in zip(table.temperatures, table.values)
        )
    return ", ".join(f"{_num(v)}@{_num(t)}" for t, v in zip(table.temperatures, table.values))


def serialize_config(bundle: ConfigBundle) -> str:
    """Config text that parses back to an equal bundle."""
    sec: dict[str, list[tuple[str, str]]] = {}
    ms = bundle.mesh
    if ms.file is not None:
        sec["mesh"] = [("file", ms.file)]
    else:
        sec["mesh"] = [("box", _vec(ms.box)), ("divisions", ",".join(str(d) for d in ms.divisions))]
    sec["mesh"] += [("kind", ms.kind), ("origin", _vec(ms.origin))]
    mat = bundle.material
    hp = mat.hyperelastic
    sec["material"] = [("mu", _num(hp.mu)), ("kappa", _num(hp.kappa)), ("eta_a", _num(hp.eta_a))]
    if mat.fiber is not None:
        sec["material"].append(("fiber", _vec(mat.fiber)))
    p = mat.thermal
    cond_key = "conductivity_tensor" if p.conductivity.is_tensor else "conductivity"
    sec["thermal"] = [
        ("density", _num(p.density)),
        ("specific_heat", _table_text(p.specific_heat)),
        (cond_key, _table_text(p.conductivity)),
        ("perfusion_rate", _num(p.perfusion_rate)),
        ("blood_specific_heat", _num(p.blood_specific_heat)),
        ("arterial_temperature", _num(p.arterial_temperature)),
        ("metabolic_rate", _num(p.metabolic_rate)),
        ("reference_temperature", _num(p.reference_temperature)),
        ("initial_temperature", _num(bundle.initial_temperature)),
    ]
    ex = mat.expansion
    sec["expansion"] = [
        ("kind", ex.kind),
        ("alpha", _vec(ex.alphas)),
        ("reference_temperature", _num(ex.reference_temperature)),
    ]
    if mat.axes is not None:
        sec["expansion"].append(("axes", "; ".join(_vec(a) for a in mat.axes)))
    sec["viscoelastic"] = [("prony", ", ".join(f"{_num(a)}:{_num(b)}" for a, b in mat.prony.terms))]
    sec["sources"] = []
    for s in bundle.sources:
        toks = [f"power={_num(s.power)}", f"start={_num(s.start)}", f"end={_num(s.end)}"]
        if s.elements is not None:
            toks.append(f"elements={s.elements}")
        else:
            toks += [f"center={_vec(s.center)}", f"diameter={_num(s.diameter)}"]
        sec["sources"].append((s.name, " ".join(toks)))
    b = bundle.bcs
    inv = {v: k for k, v in COMPONENTS.items()}
    sec["bcs"] = [
        ("fixed", ", ".join(b.fixed)),
        ("prescribed", ", ".join(f"{n}:{inv[c]}:{_num(v)}" for n, c, v in b.prescribed)),
        ("fixed_temperature", ", ".join(f"{n}:{_num(v)}" for n, v in b.fixed_temperature)),
        ("force", "; ".join(f"{n}:{_vec(v)}" for n, v in b.forces)),
    ]
    if b.ramp_time is not None:
        sec["bcs"].append(("ramp_time", _num(b.ramp_time)))
    if b.body_force is not None:
        sec["bcs"].append(("body_force", _vec(b.body_force)))
    c = bundle.sim
    sec["sim"] = [
        ("dt", _num(c.dt)),
        ("duration", _num(c.duration)),
        ("coupling", c.coupling),
        ("expansion", str(c.expansion).lower()),
        ("temperature_dependent", str(c.temperature_dependent).lower()),
        ("damping", _num(c.damping)),
        ("hourglass_stiffness", _num(c.hourglass_stiffness)),
        ("allow_unstable_dt", str(c.allow_unstable_dt).lower()),
        ("workers", str(c.workers)),
    ]
    if c.kernels is not None:
        sec["sim"].append(("kernels", c.kernels))
    sec["output"] = [
        ("snapshot_interval", _num(c.snapshot_interval)),
        ("probes", ", ".join(str(n) for n in c.probe_nodes)),
        ("fields", ", ".join(c.fields)),
        ("ablation_thresholds", _vec(c.ablation_thresholds)),
    ]
    lines = []
    for name, items in sec.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in items]
        lines.append("")
    return "\n".join(lines)


# ----------------------------------------------------------------------------
# problem assembly


def load_problem_mesh(bundle: ConfigBundle) -> Mesh:
    ms = bundle.mesh
    if ms.file is not None:
        try:
            return read_mesh(bundle.mesh_path)
        except OSError as exc:
            raise ConfigError(f"cannot read mesh {bundle.mesh_path}: {exc.strerror}") from None
    return box_mesh(ms.box, ms.divisions, ms.kind, ms.origin)


def sphere_elements(mesh: Mesh, center, radius: float) -> np.ndarray:
    """Elements whose centroid lies inside the sphere."""
    d = np.linalg.norm(mesh.centroids() - np.asarray(center, dtype=float), axis=1)
    return np.nonzero(d <= radius)[0]


def _node_set(mesh: Mesh, name: str, where: str) -> np.ndarray:
    """Resolve a node set; ``a-b`` is the set difference when no set has that exact name."""
    if name in mesh.node_sets or name == "all" or "-" not in name:
        try:
            return mesh.node_set(name)
        except KeyError:
            raise ConfigError(f"{where}: unknown node set {name!r}") from None
    first, *rest = name.split("-")
    out = _node_set(mesh, first.strip(), where)
    for other in rest:
        out = np.setdiff1d(out, _node_set(mesh, other.strip(), where))
    return out


def build_problem(bundle: ConfigBundle, mesh: Mesh) -> Problem:
    """Resolve set names and spheres against ``mesh``."""
    b = bundle.bcs
    fixed = [_node_set(mesh, n, "bcs.fixed") for n in b.fixed]
    fixed_nodes = np.unique(np.concatenate(fixed)) if fixed else np.zeros(0, dtype=np.int64)
    prescribed = [
        Prescribed(_node_set(mesh, n, "bcs.prescribed"), c, v, b.ramp_time) for n, c, v in b.prescribed
    ]
    ext = None
    if b.forces:
        ext = np.zeros((mesh.n_nodes, 3))
        for n, vec in b.forces:
            ext[_node_set(mesh, n, "bcs.force")] += vec
    try:
        bcs = MechBCs(fixed_nodes, prescribed, ext, b.body_force)
    except ValueError as exc:
        raise ConfigError(f"bcs: {exc}") from None
    fixed_T = [
        FixedTemperature(_node_set(mesh, n, "bcs.fixed_temperature"), v) for n, v in b.fixed_temperature
    ]
    regional = []
    for s in bundle.sources:
        if s.elements is not None:
            try:
                elems = mesh.element_set(s.elements)
            except KeyError:
                raise ConfigError(f"sources.{s.name}: unknown element set {s.elements!r}") from None
        else:
            elems = sphere_elements(mesh, s.center, 0.5 * s.diameter)
            if not len(elems):
                raise ConfigError(f"sources.{s.name}: sphere contains no element centroid")
        regional.append(RegionalSource(elems, s.power, s.start, s.end, s.name))
    for p in bundle.sim.probe_nodes:
        if p > mesh.n_nodes:
            raise ConfigError(f"output.probes: node {p} is out of range (mesh has {mesh.n_nodes})")
    return Problem(mesh, bundle.material, bcs, HeatSourceSet(regional), fixed_T, bundle.initial_temperature)


# ----------------------------------------------------------------------------
# snapshots


def _fmt(values) -> str:
    return " ".join("%.8e" % v for v in values)


def snapshot_name(step: int, width: int = 6) -> str:
    return f"snapshot_{step:0{width}d}.vtk"


def write_snapshot(snapshot: Snapshot, mesh: Mesh, path) -> Path:
    """Write a legacy ASCII unstructured-grid file (9 significant digits).

    Points are reference coordinates; ``displacement`` is point data so a
    viewer can warp by vector.
    """
    path = Path(path)
    npe = mesh.nodes_per_element
    lines = [
        "# vtk DataFile Version 3.0",
        f"thermotled step {snapshot.step} time {snapshot.time!r}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [_fmt(x) for x in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (npe + 1)}")
    lines += [f"{npe} " + " ".join(str(i) for i in conn) for conn in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_CELL_TYPES[mesh.kind])] * mesh.n_elements
    lines += [f"POINT_DATA {mesh.n_nodes}", "SCALARS temperature double 1", "LOOKUP_TABLE default"]
    lines += ["%.8e" % v for v in snapshot.temperature]
    lines.append("VECTORS displacement double")
    lines += [_fmt(u) for u in snapshot.displacement]
    cell = [(n, getattr(snapshot, n)) for n in ("det_f", "max_principal_stress")]
    cell = [(n, v) for n, v in cell if v is not None]
    if cell:
        lines.append(f"CELL_DATA {mesh.n_elements}")
        for name, values in cell:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += ["%.8e" % v for v in values]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc.strerror}") from exc
    return path


def read_snapshot(path) -> dict:
    """Parse a file written by :func:`write_snapshot`.

    Returns a dict with ``step``, ``time``, ``points``, ``cells``,
    ``cell_types`` and one array per data field.
    """
    lines = Path(path).read_text().splitlines()
    title = lines[1].split()
    out: dict = {"step": int(title[2]), "time": float(title[4])}
    i, count = 4, 0

    def block(n):
        nonlocal i
        rows = lines[i : i + n]
        i += n
        return rows

    while i < len(lines):
        head = lines[i].split()
        i += 1
        if not head:
            continue
        key = head[0]
        if key == "POINTS":
            out["points"] = np.array([r.split() for r in block(int(head[1]))], dtype=float)
        elif key == "CELLS":
            rows = [r.split() for r in block(int(head[1]))]
            out["cells"] = np.array([r[1:] for r in rows], dtype=np.int64)
        elif key == "CELL_TYPES":
            out["cell_types"] = np.array(block(int(head[1])), dtype=int)
        elif key in ("POINT_DATA", "CELL_DATA"):
            count = int(head[1])
        elif key == "SCALARS":
            i += 1  # LOOKUP_TABLE
            out[head[1]] = np.array(block(count), dtype=float)
        elif key == "VECTORS":
            out[head[1]] = np.array([r.split() for r in block(count)], dtype=float)
    return out


class SnapshotWriter:
    """Sink writing one VTK file per snapshot into ``out_dir``."""

    def __init__(self, out_dir, mesh: Mesh, n_steps: int):
        self.out_dir = Path(out_dir)
        self.mesh = mesh
        self.width = max(6, len(str(n_steps)))
        self.paths: list[Path] = []

    def __call__(self, snap: Snapshot) -> None:
        self.paths.append(write_snapshot(snap, self.mesh, self.out_dir / snapshot_name(snap.step, self.width)))


class ProbeWriter:
    """Sink appending probe rows ``time,node_id,T,ux,uy,uz`` (1-based node ids)."""

    def __init__(self, path, nodes: Sequence[int]):
        self.path = Path(path)
        self.nodes = [int(n) for n in nodes]
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(PROBE_HEADER)

    def __call__(self, snap: Snapshot) -> None:
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            for n in self.nodes:
                u = snap.displacement[n - 1]
                w.writerow(
                    ["%.9g" % snap.time, n, "%.9g" % snap.temperature[n - 1]] + ["%.9g" % x for x in u]
                )


# ----------------------------------------------------------------------------
# isotherm volumes


@dataclass(frozen=True)
class AblationReport:
    threshold: float
    volume: float
    elements_above: int


def _tet_volume(a, b, c, d):
    return np.abs(np.einsum("...i,...i->...", np.cross(b - a, c - a), d - a)) / 6.0


def tet_clip_volume(x, f) -> np.ndarray:
    """Volume of ``{f >= 0}`` inside tetrahedra, ``f`` linear.

    ``x`` is ``(M, 4, 3)`` vertex coordinates, ``f`` ``(M, 4)`` vertex values.
    The region is the tet itself, a corner tet, a triangular prism or the
    complement of a corner tet, depending on how many vertices are above.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    above = f >= 0.0
    k = above.sum(axis=1)
    full = _tet_volume(x[:, 0], x[:, 1], x[:, 2], x[:, 3])
    out = np.where(k == 4, full, 0.0)
    # order vertices so the above ones come first
    order = np.argsort(~above, axis=1, kind="stable")
    xs = np.take_along_axis(x, order[:, :, None], axis=1)
    fs = np.take_along_axis(f, order, axis=1)

    def cut(i, j, sel):
        # point on edge i-j where f vanishes; f[i] >= 0 > f[j]
        t = fs[sel, i] / (fs[sel, i] - fs[sel, j])
        return xs[sel, i] + t[:, None] * (xs[sel, j] - xs[sel, i]), t

    sel = k == 1
    if sel.any():
        _, t1 = cut(0, 1, sel)
        _, t2 = cut(0, 2, sel)
        _, t3 = cut(0, 3, sel)
        out[sel] = full[sel] * t1 * t2 * t3
    sel = k == 3
    if sel.any():
        # complement: corner tet at the single vertex below
        s = [fs[sel, 3] / (fs[sel, 3] - fs[sel, i]) for i in range(3)]
        out[sel] = full[sel] * (1.0 - s[0] * s[1] * s[2])
    sel = k == 2
    if sel.any():
        a, b = xs[sel, 0], xs[sel, 1]
        p_ac, _ = cut(0, 2, sel)
        p_ad, _ = cut(0, 3, sel)
        p_bc, _ = cut(1, 2, sel)
        p_bd, _ = cut(1, 3, sel)
        # prism (a, p_ac, p_ad) -> (b, p_bc, p_bd)
        out[sel] = (
            _tet_volume(a, p_ac, p_ad, p_bd)
            + _tet_volume(a, p_ac, p_bc, p_bd)
            + _tet_volume(a, b, p_bc, p_bd)
        )
    return out


def ablation_volume(temperature, mesh: Mesh, threshold: float, displacement=None) -> AblationReport:
    """Volume where the piecewise-linear temperature is at or above ``threshold``.

    H8 elements are split into six tetrahedra first. With ``displacement``
    the volume is measured on the deformed nodes. ``elements_above`` counts
    elements whose mean nodal temperature reaches the threshold.
    """
    T = np.asarray(temperature, dtype=float)
    x = mesh.nodes if displacement is None else mesh.nodes + np.asarray(displacement)
    tets = mesh.as_tetrahedra()
    vol = tet_clip_volume(x[tets], T[tets] - threshold)
    above = int(np.count_nonzero(T[mesh.elements].mean(axis=1) >= threshold))
    return AblationReport(float(threshold), float(vol.sum()), above)


class AblationWriter:
    """Sink appending ``time,threshold,volume_m3,elements_above`` rows."""

    def __init__(self, path, mesh: Mesh, thresholds: Sequence[float], deformed: bool = True):
        self.path = Path(path)
        self.mesh = mesh
        self.thresholds = [float(t) for t in thresholds]
        self.deformed = deformed
        with open(self.path, "w", newline="") as fh:
            csv.writer(fh).writerow(ABLATION_HEADER)

    def __call__(self, snap: Snapshot) -> None:
        disp = snap.displacement if self.deformed else None
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            for th in self.thresholds:
                r = ablation_volume(snap.temperature, self.mesh, th, disp)
                w.writerow(["%.9g" % snap.time, "%.9g" % th, "%.9g" % r.volume, r.elements_above])
