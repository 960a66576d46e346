"""Scenario files: parsing, validation, source construction and hashing.

A scenario is a YAML document.  Paths are relative to the scenario file.

.. code-block:: yaml

    name: standard_lab
    geometry: ../geometry/cryostat_noshield.geo
    seed: 20230401
    workers: 1
    threshold_keV: 1.0
    binning: {lo_keV: 0, hi_keV: 3000, width_keV: 10}
    components: ../components.csv        # needed by bulk_decay sources
    radioassay: ../radioassay.csv
    sources:
      - label: gamma
        type: surface_flux               # species, surface, spectrum, flux, flux_sigma, direction_law
        two_step: {surface: S2, n1: 1000000, n2: 10000000, mode: marginal, position_law: projected}
      - label: muons
        type: muon_hemisphere            # hemisphere_radius_cm, plane_side_cm, flux_per_cm2_min, energy_keV
        n_gen: 1000000
      - type: bulk_decay                 # component + isotopes (list or "all"), or volume + isotope + activity
        component: A
        isotopes: all
        n_gen: 1000000
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import core_data
from .core_data import ActivityEntry, ComponentSpec, DataError, NuclideLibrary, parse_activity
from .geometry import GeometryError, load_geometry
from .sources import BulkDecay, MuonHemisphere, SourceError, SurfaceFlux, load_spectrum
from .transport import DEFAULT_THRESHOLD

SCENARIO_DIR = core_data.DATA_DIR / "scenarios"
SOURCE_TYPES = ("surface_flux", "muon_hemisphere", "bulk_decay")
_RUNTIME_KEYS = ("workers", "output")


class ScenarioError(ValueError):
    pass


def bundled_scenario(name):
    p = SCENARIO_DIR / f"{name}.yaml"
    if not p.exists():
        raise ScenarioError(f"no bundled scenario {name!r}")
    return p


def resolve_scenario_path(arg):
    p = Path(arg)
    if p.exists():
        return p
    return bundled_scenario(arg)


@dataclass
class PlannedSource:
    label: str
    kind: str
    spec: object
    n_gen: int
    two_step: dict | None = None
    component: str | None = None
    isotope: str | None = None


@dataclass
class Scenario:
    path: Path
    raw: dict
    name: str
    seed: int
    workers: int
    threshold: float
    edges: np.ndarray
    geometry_path: Path
    options: dict = field(default_factory=dict)

    @property
    def base(self):
        return self.path.parent

    def ref(self, key, default=None):
        v = self.raw.get(key, default)
        if v is None:
            return None
        return (self.base / v).resolve()

    @property
    def data_dir(self):
        return self.ref("data_dir") or core_data.DATA_DIR

    def output_dir(self, override=None):
        if override:
            return Path(override)
        out = self.raw.get("output")
        return (self.base / out).resolve() if out else Path.cwd() / f"{self.name}_out"


def load_scenario(path):
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")
    for key in ("name", "geometry", "sources"):
        if key not in raw:
            raise ScenarioError(f"{path}: missing required field {key!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ScenarioError(f"{path}: seed must be an integer in [0, 2^64)")
    b = raw.get("binning", {}) or {}
    lo, hi, w = float(b.get("lo_keV", 0.0)), float(b.get("hi_keV", 3000.0)), float(b.get("width_keV", 10.0))
    if not (hi > lo and w > 0):
        raise ScenarioError(f"{path}: invalid binning")
    edges = np.arange(lo, hi + 0.5 * w, w)
    if not isinstance(raw["sources"], list) or not raw["sources"]:
        raise ScenarioError(f"{path}: sources must be a non-empty list")
    return Scenario(path=path, raw=raw, name=str(raw["name"]), seed=int(seed), workers=int(raw.get("workers", 1)),
                    threshold=float(raw.get("threshold_keV", DEFAULT_THRESHOLD)), edges=edges,
                    geometry_path=(path.parent / raw["geometry"]).resolve(),
                    options=dict(raw.get("options", {}) or {}))


# ------------------------------------------------------------- components

def _mass_of(comp, model, library):
    if comp.mass is not None:
        return comp.mass
    if not comp.estimate:
        raise ScenarioError(f"component {comp.id}: missing mass")
    v = model.volume(comp.volume)
    return model.mass(comp.volume, library.density(v.material))


def _isotope_list(entry, table, assay):
    iso = entry.get("isotopes", "all")
    if iso == "all":
        return [e.isotope for e in table.for_component(assay)]
    if isinstance(iso, str):
        return [iso]
    return list(iso)


def build_sources(sc, model, library, nuclides=None, events=None):
    """Expand the scenario's source list into PlannedSource objects."""
    nuclides = nuclides or NuclideLibrary(sc.data_dir / "nuclides")
    comps = table = None
    out = []
    for k, entry in enumerate(sc.raw["sources"]):
        if not isinstance(entry, dict) or entry.get("type") not in SOURCE_TYPES:
            raise ScenarioError(f"source #{k + 1}: type must be one of {', '.join(SOURCE_TYPES)}")
        t = entry["type"]
        n_gen = int(entry.get("n_gen", 0))
        label = entry.get("label")
        ts = None
        if t == "surface_flux":
            surf = entry.get("surface", "S1")
            if surf not in model.surfaces:
                raise ScenarioError(f"source {label}: surface {surf!r} not defined in geometry")
            spectrum = load_spectrum(sc.base / entry["spectrum"])
            spec = SurfaceFlux(model.surfaces[surf], spectrum, float(entry["flux"]), float(entry.get("flux_sigma", 0.0)),
                               entry.get("species", "gamma"), entry.get("direction_law", "cosine"))
            if "two_step" in entry:
                ts = dict(entry["two_step"])
                if ts.get("surface", "S2") not in model.surfaces:
                    raise ScenarioError(f"source {label}: two-step surface {ts.get('surface', 'S2')!r} not defined")
                ts.setdefault("surface", "S2")
                ts.setdefault("mode", "marginal")
                ts.setdefault("position_law", "projected")
                ts["n1"] = int(ts["n1"])
                ts["n2"] = int(ts["n2"])
                if events is not None:
                    ts["n1"] = max(1, int(round(ts["n1"] * events / max(ts["n2"], 1))))
                    ts["n2"] = int(events)
                n_gen = ts["n2"]
            out.append(PlannedSource(label or spec.species, t, spec, int(events) if events and not ts else n_gen, ts))
        elif t == "muon_hemisphere":
            spec = MuonHemisphere(float(entry.get("hemisphere_radius_cm", 100.0)), float(entry.get("plane_side_cm", 120.0)),
                                  float(entry.get("flux_per_cm2_min", 1.0)), float(entry.get("flux_sigma", 0.0)),
                                  float(entry.get("energy_keV", 4.0e6)), tuple(entry.get("center_cm", (0.0, 0.0, 0.0))))
            out.append(PlannedSource(label or "muons", t, spec, int(events) if events else n_gen))
        else:
            n = int(events) if events else n_gen
            if "volume" not in entry:
                if comps is None:
                    comps = core_data.load_components(sc.ref("components", None) or core_data.DATA_DIR / "components.csv")
                    table = core_data.load_radioassay(sc.ref("radioassay", None) or core_data.DATA_DIR / "radioassay.csv",
                                                      nuclides)
                cid = entry["component"]
                if cid not in comps:
                    raise ScenarioError(f"unknown component {cid!r}")
                comp = comps[cid]
                if comp.volume not in model.index:
                    raise ScenarioError(f"component {cid}: volume {comp.volume!r} not in geometry")
                mass = _mass_of(comp, model, library)
                for iso in _isotope_list(entry, table, comp.assay):
                    act = table.lookup(comp.assay, iso)
                    spec = BulkDecay(comp, nuclides.get(iso), act, comp.volume, mass)
                    out.append(PlannedSource(f"{cid}:{act.isotope}", t, spec, n, component=cid, isotope=act.isotope))
            else:
                vol = entry["volume"]
                if vol not in model.index or vol == "world":
                    raise ScenarioError(f"source {label}: volume {vol!r} not in geometry")
                kind, v, s = parse_activity(str(entry["activity"]))
                iso = core_data.display_name(core_data.file_stem(entry["isotope"]))
                cid = entry.get("component", label or vol)
                act = ActivityEntry(cid, iso, kind, v, s)
                comp = ComponentSpec(cid, entry.get("description", vol), entry.get("mass_kg"), vol, cid,
                                     entry.get("mass_kg") is None)
                mass = _mass_of(comp, model, library)
                out.append(PlannedSource(label or f"{cid}:{iso}", t, BulkDecay(comp, nuclides.get(iso), act, vol, mass),
                                         n, component=cid, isotope=iso))
    labels = [p.label for p in out]
    dup = sorted({x for x in labels if labels.count(x) > 1})
    if dup:
        raise ScenarioError(f"duplicate source labels: {', '.join(dup)}")
    for p in out:
        if p.n_gen <= 0 and not (p.two_step and p.two_step["n2"] == 0):
            raise ScenarioError(f"source {p.label}: N_gen must be positive")
    return out


# ------------------------------------------------------------- validation

def validate_scenario(path):
    """Diagnostics for a scenario file; an empty list means it is clean."""
    diags = []
    try:
        sc = load_scenario(path)
    except (ScenarioError, OSError) as exc:
        return [str(exc)]
    if not sc.geometry_path.exists():
        return [f"geometry file not found: {sc.geometry_path}"]
    try:
        model = load_geometry(sc.geometry_path)
    except GeometryError as exc:
        return [f"geometry: {exc}"]
    diags += [f"geometry: {d}" for d in model.validate()]
    try:
        library = core_data.load_library(sc.data_dir)
    except (DataError, OSError) as exc:
        return diags + [f"data: {exc}"]
    diags += [f"data: {d}" for d in library.check_complete(model.materials)]
    for key in ("components", "radioassay"):
        ref = sc.ref(key)
        if ref is not None and not ref.exists():
            diags.append(f"{key} file not found: {ref}")
    if diags:
        return diags
    try:
        planned = build_sources(sc, model, library)
    except (ScenarioError, SourceError, DataError, KeyError, OSError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        return [f"sources: {msg}"]
    for p in planned:
        if isinstance(p.spec, MuonHemisphere):
            diags += [f"source {p.label}: {e}" for e in p.spec.check(model)]
        try:
            norm = p.spec.normalization(max(p.n_gen, 1))
        except ValueError as exc:
            diags.append(f"source {p.label}: normalization incomplete: {exc}")
            continue
        if norm.kind == "flux" and not norm.flux > 0:
            diags.append(f"source {p.label}: zero flux, normalization undefined")
    return diags


# ------------------------------------------------------------------ hash

def _normalized_files(sc):
    files = {"geometry": _norm_geometry(sc.geometry_path.read_text(encoding="utf-8"))}
    d = Path(sc.data_dir)
    for name in ("materials.txt", "attenuation.txt", "stopping_muon.txt", "stopping_electron.txt",
                 "stopping_alpha.txt", "neutron.txt"):
        p = d / name
        if p.exists():
            files[name] = core_data.normalize_table_text(p.read_text(encoding="utf-8"))
    nucl = d / "nuclides"
    if nucl.exists():
        for p in sorted(nucl.glob("*.txt")):
            files[f"nuclides/{p.name}"] = core_data.normalize_table_text(p.read_text(encoding="utf-8"))
    for key, default in (("components", core_data.DATA_DIR / "components.csv"),
                         ("radioassay", core_data.DATA_DIR / "radioassay.csv")):
        p = sc.ref(key) or default
        if p.exists():
            files[key] = core_data.normalize_csv_text(p.read_text(encoding="utf-8"))
    for s in sc.raw["sources"]:
        if isinstance(s, dict) and "spectrum" in s:
            p = sc.base / s["spectrum"]
            if p.exists():
                files[f"spectrum:{s['spectrum']}"] = core_data.normalize_table_text(p.read_text(encoding="utf-8"))
    return files


def _norm_geometry(text):
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].split()
        if line:
            out.append(" ".join(core_data._canon_token(t) for t in line))
    return "\n".join(out)


def scenario_hash(sc):
    """SHA-256 over the semantic scenario content and every referenced data file."""
    raw = copy.deepcopy(sc.raw)
    for k in _RUNTIME_KEYS:
        raw.pop(k, None)
    payload = {"scenario": raw, "files": _normalized_files(sc)}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
