"""Static physics and measurement data.

Materials with photon, charged-particle and neutron tables, isotope decay
schemes with chain expansion, radioassay activities and component masses.
Everything loaded here is immutable after construction.
"""

from __future__ import annotations

import csv
import io
import math
import re
from functools import lru_cache
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from . import rng as _rng
from .particles import SPECIES, Particle

DATA_DIR = Path(__file__).resolve().parent / "data"
NUCLIDE_DIR = DATA_DIR / "nuclides"
VACUUM = "vacuum"


class DataError(ValueError):
    """Malformed or inconsistent data file."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


def fmt(x):
    """Canonical number rendering used by every serializer."""
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _read_text(path):
    return Path(path).read_text(encoding="utf-8")


def tokenize_table(text, path=None):
    """Split a whitespace/comma table into (header, [(line, tokens)])."""
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = [t for t in re.split(r"[,\s]+", line) if t]
        if header is None:
            header = tokens
        else:
            rows.append((lineno, tokens))
    return header, rows


def _float(tok, path, line, what="number"):
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"cannot parse {what} {tok!r}", path, line) from None
    if not math.isfinite(v):
        raise DataError(f"non-finite {what} {tok!r}", path, line)
    return v


def normalize_table_text(text):
    """Comment-free, whitespace-normalized rendering with canonical numbers."""
    header, rows = tokenize_table(text)
    out = [" ".join(header or [])]
    for _, toks in rows:
        out.append(" ".join(_canon_token(t) for t in toks))
    return "\n".join(out) + "\n"


def _canon_token(tok):
    try:
        return fmt(float(tok))
    except ValueError:
        return tok


# ---------------------------------------------------------------- materials

@dataclass(frozen=True)
class Material:
    name: str
    density: float
    note: str = ""


@dataclass(frozen=True)
class AttenuationTable:
    material: str
    energy: np.ndarray
    mu_rho: np.ndarray
    photo_fraction: np.ndarray

    def coefficient(self, energy):
        return attenuation_coefficient(self, energy)


@dataclass(frozen=True)
class StoppingTable:
    """Charged-particle table; stopping power stored as MeV cm2/g, range as g/cm2."""

    species: str
    material: str
    energy: np.ndarray
    dedx: np.ndarray | None
    csda: np.ndarray | None
    density: float

    def dedx_per_cm(self, energy):
        """Linear stopping power in keV/cm."""
        return 1000.0 * self.density * _loglog(self.energy, self.dedx, energy)

    def range_cm(self, energy):
        return _loglog(self.energy, self.csda, energy) / self.density


@dataclass(frozen=True)
class NeutronTable:
    material: str
    mass_number: float
    energy: np.ndarray
    sigma: np.ndarray

    def macroscopic(self, energy):
        return float(np.interp(np.log(energy), np.log(self.energy), self.sigma))


def _loglog(x, y, q):
    q = np.asarray(q, dtype=float)
    if np.any(q < x[0]) or np.any(q > x[-1]):
        raise ValueError(f"energy {q} keV outside table range [{x[0]}, {x[-1]}] keV")
    return np.exp(np.interp(np.log(q), np.log(x), np.log(y)))


def attenuation_coefficient(table, energy):
    """Mass attenuation coefficient (cm2/g) by log-log interpolation; no extrapolation."""
    r = _loglog(table.energy, table.mu_rho, energy)
    return float(r) if np.ndim(r) == 0 else r


def load_materials(path):
    """Read the materials list into an ordered ``{name: Material}`` mapping."""
    header, rows = tokenize_table(_read_text(path), path)
    mats = {}
    for line, toks in rows:
        if len(toks) < 2:
            raise DataError("expected 'name density [note]'", path, line)
        name = toks[0]
        if name in mats or name == VACUUM:
            raise DataError(f"duplicate material name {name!r}", path, line)
        rho = _float(toks[1], path, line, "density")
        if rho <= 0:
            raise DataError(f"density of {name!r} must be positive", path, line)
        mats[name] = Material(name, rho, " ".join(toks[2:]))
    if not mats:
        raise DataError("no materials defined", path)
    return mats


def _grouped(path, ncols, key_cols=1):
    """Rows grouped by material, validated for column count and monotone energy."""
    header, rows = tokenize_table(_read_text(path), path)
    groups = {}
    for line, toks in rows:
        if len(toks) != ncols:
            raise DataError(f"expected {ncols} columns, got {len(toks)}", path, line)
        vals = [_float(t, path, line) for t in toks[key_cols:]]
        lines, data, keys = groups.setdefault(toks[0], ([], [], toks[1:key_cols]))
        if keys != toks[1:key_cols]:
            raise DataError(f"inconsistent key columns for {toks[0]!r}", path, line)
        if data and vals[0] <= data[-1][0]:
            raise DataError("non-monotone grid", path, line)
        lines.append(line)
        data.append(vals)
    if not groups:
        raise DataError("no table rows", path)
    return {k: (lines, np.array(d, dtype=float), keys) for k, (lines, d, keys) in groups.items()}


def _positive(arr, path, lines, what):
    bad = np.nonzero(~(arr > 0))[0]
    if bad.size:
        raise DataError(f"{what} must be positive", path, lines[bad[0]])


def load_attenuation(path):
    out = {}
    for mat, (lines, a, _) in _grouped(path, 4).items():
        _positive(a[:, 0], path, lines, "energy")
        _positive(a[:, 1], path, lines, "mu/rho")
        bad = np.nonzero((a[:, 2] < 0) | (a[:, 2] > 1))[0]
        if bad.size:
            raise DataError("photoelectric fraction outside [0, 1]", path, lines[bad[0]])
        if len(a) < 10 or a[0, 0] > 10.0 or a[-1, 0] < 1.0e4:
            raise DataError(f"attenuation grid for {mat!r} must have >= 10 rows spanning 10 keV to 10 MeV", path)
        out[mat] = AttenuationTable(mat, a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy())
    return out


def load_stopping(path, species, materials):
    ncols = {"muon": 3, "electron": 4, "alpha": 3}[species]
    out = {}
    for mat, (lines, a, _) in _grouped(path, ncols).items():
        if mat not in materials:
            raise DataError(f"table for unknown material {mat!r}", path, lines[0])
        for j in range(a.shape[1]):
            _positive(a[:, j], path, lines, "table value")
        dedx = a[:, 1].copy() if species in ("muon", "electron") else None
        csda = a[:, -1].copy() if species in ("electron", "alpha") else None
        out[mat] = StoppingTable(species, mat, a[:, 0].copy(), dedx, csda, materials[mat].density)
    return out


def load_neutron(path, materials):
    out = {}
    for mat, (lines, a, keys) in _grouped(path, 4, key_cols=2).items():
        if mat not in materials:
            raise DataError(f"table for unknown material {mat!r}", path, lines[0])
        mass = _float(keys[0], path, lines[0], "mass number")
        if mass < 1:
            raise DataError("mass number must be >= 1", path, lines[0])
        _positive(a[:, 0], path, lines, "energy")
        bad = np.nonzero(a[:, 1] < 0)[0]
        if bad.size:
            raise DataError("cross-section must be non-negative", path, lines[bad[0]])
        out[mat] = NeutronTable(mat, mass, a[:, 0].copy(), a[:, 1].copy())
    return out


@dataclass(frozen=True)
class MaterialLibrary:
    materials: dict
    attenuation: dict
    muon: dict
    electron: dict
    alpha: dict
    neutron: dict

    def density(self, name):
        if name == VACUUM:
            return 0.0
        return self.material(name).density

    def material(self, name):
        try:
            return self.materials[name]
        except KeyError:
            raise KeyError(f"unknown material {name!r}") from None

    def attenuation_coefficient(self, name, energy):
        return attenuation_coefficient(self.attenuation[name], energy)

    def check_complete(self, names):
        """Names of missing tables for the given materials (empty when complete)."""
        missing = []
        for n in names:
            if n == VACUUM:
                continue
            if n not in self.materials:
                missing.append(f"material {n!r} not defined")
                continue
            for kind in ("attenuation", "muon", "electron", "alpha", "neutron"):
                if n not in getattr(self, kind):
                    missing.append(f"no {kind} table for {n!r}")
        return missing


def load_library(directory=DATA_DIR):
    d = Path(directory)
    mats = load_materials(d / "materials.txt")
    att = load_attenuation(d / "attenuation.txt")
    for m in att:
        if m not in mats:
            raise DataError(f"table for unknown material {m!r}", d / "attenuation.txt")
    return MaterialLibrary(
        materials=mats,
        attenuation=att,
        muon=load_stopping(d / "stopping_muon.txt", "muon", mats),
        electron=load_stopping(d / "stopping_electron.txt", "electron", mats),
        alpha=load_stopping(d / "stopping_alpha.txt", "alpha", mats),
        neutron=load_neutron(d / "neutron.txt", mats),
    )


def serialize_materials(mats):
    lines = ["name density_g_cm3 note"]
    lines += [" ".join(filter(None, [m.name, fmt(m.density), m.note])) for m in mats.values()]
    return "\n".join(lines) + "\n"


def serialize_attenuation(tables):
    lines = ["material energy_keV mu_rho_cm2_g photo_fraction"]
    for t in tables.values():
        lines += [f"{t.material} {fmt(e)} {fmt(m)} {fmt(p)}"
                  for e, m, p in zip(t.energy, t.mu_rho, t.photo_fraction)]
    return "\n".join(lines) + "\n"


def serialize_stopping(tables, species):
    head = {"muon": "material energy_keV dedx_MeV_cm2_g",
            "electron": "material energy_keV dedx_MeV_cm2_g csda_g_cm2",
            "alpha": "material energy_keV csda_g_cm2"}[species]
    lines = [head]
    for t in tables.values():
        cols = [t.energy] + [c for c in (t.dedx, t.csda) if c is not None]
        for row in zip(*cols):
            lines.append(" ".join([t.material] + [fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def serialize_neutron(tables):
    lines = ["material mass_number energy_keV sigma_per_cm"]
    for t in tables.values():
        lines += [f"{t.material} {fmt(t.mass_number)} {fmt(e)} {fmt(s)}" for e, s in zip(t.energy, t.sigma)]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ decay schemes

@dataclass(frozen=True)
class DecayScheme:
    """Emission lines of one isotope; intensities are per decay."""

    name: str
    gammas: tuple = ()   # ((energy keV, intensity), ...)
    betas: tuple = ()    # ((endpoint keV, intensity), ...)
    alphas: tuple = ()   # ((energy keV, intensity), ...)

    def to_text(self):
        lines = ["kind energy_keV intensity"]
        for kind, rows in (("gamma", self.gammas), ("beta", self.betas), ("alpha", self.alphas)):
            lines += [f"{kind} {fmt(e)} {fmt(i)}" for e, i in rows]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DecayChain:
    """Members in secular equilibrium, each with its branching weight per parent decay."""

    name: str
    members: tuple  # ((DecayScheme, weight), ...)
    is_chain: bool = True

    def to_text(self):
        if not self.is_chain:
            return self.members[0][0].to_text()
        lines = ["kind name branching"]
        lines += [f"member {s.name} {fmt(w)}" for s, w in self.members]
        return "\n".join(lines) + "\n"

    def gamma_lines(self):
        """All gamma lines with chain-level intensity (member weight x line intensity)."""
        out = []
        for s, w in self.members:
            out += [(e, w * i) for e, i in s.gammas]
        return out


def file_stem(name):
    return name.strip().replace(" ", "_")


def display_name(stem):
    return stem.replace("_chain", " chain")


def parse_decay_scheme(text, name, path=None):
    header, rows = tokenize_table(text, path)
    if header is None:
        return DecayScheme(name)
    lines = {"gamma": [], "beta": [], "alpha": []}
    for line, toks in rows:
        if len(toks) != 3 or toks[0] not in lines:
            raise DataError("expected 'gamma|beta|alpha energy intensity'", path, line)
        e = _float(toks[1], path, line, "energy")
        i = _float(toks[2], path, line, "intensity")
        if e <= 0:
            raise DataError("emission energy must be positive", path, line)
        if not 0.0 <= i <= 1.0:
            raise DataError("intensity outside [0, 1]", path, line)
        lines[toks[0]].append((e, i))
    charged = sum(i for _, i in lines["beta"] + lines["alpha"])
    if charged > 1.0 + 1e-6:
        raise DataError(f"beta+alpha intensities of {name} sum to {charged:.4f} > 1", path)
    return DecayScheme(name, tuple(lines["gamma"]), tuple(lines["beta"]), tuple(lines["alpha"]))


class NuclideLibrary:
    """Lazy loader of isotope and chain files from a directory."""

    def __init__(self, directory=NUCLIDE_DIR):
        self.directory = Path(directory)
        self._cache = {}

    def names(self):
        return sorted(display_name(p.stem) for p in self.directory.glob("*.txt"))

    def __contains__(self, name):
        return (self.directory / f"{file_stem(name)}.txt").exists()

    def path(self, name):
        return self.directory / f"{file_stem(name)}.txt"

    def scheme(self, name):
        return self.get(name)

    def get(self, name):
        """DecayChain for an isotope (single member) or a chain file."""
        key = display_name(file_stem(name))
        if key in self._cache:
            return self._cache[key]
        path = self.path(name)
        if not path.exists():
            raise KeyError(f"unknown isotope {name!r}")
        text = _read_text(path)
        header, rows = tokenize_table(text, path)
        if header and header[:2] == ["kind", "name"]:
            members = []
            for line, toks in rows:
                if len(toks) != 3 or toks[0] != "member":
                    raise DataError("expected 'member isotope branching'", path, line)
                w = _float(toks[2], path, line, "branching")
                if not 0.0 < w <= 1.0:
                    raise DataError("branching outside (0, 1]", path, line)
                sub = self.get(toks[1])
                if sub.is_chain:
                    raise DataError("nested chains are not supported", path, line)
                members.append((sub.members[0][0], w))
            chain = DecayChain(key, tuple(members), True)
        else:
            chain = DecayChain(key, ((parse_decay_scheme(text, key, path), 1.0),), False)
        self._cache[key] = chain
        return chain


# Emitter arrays used inside compiled kernels.  Per member: gamma lines in
# [g_off[m], g_off[m+1]) and charged lines in [c_off[m], c_off[m+1]); a
# member's betas and alphas together form one categorical draw.
BETA_TABLE_POINTS = 257


def _beta_inverse_cdf(q, npts=BETA_TABLE_POINTS):
    """Kinetic energies at equally spaced CDF levels for the allowed shape p E (Q-T)^2."""
    t = np.linspace(0.0, q, 4097)
    me = 511.0
    e = t + me
    p = np.sqrt(np.maximum(e * e - me * me, 0.0))
    pdf = p * e * (q - t) ** 2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(t))])
    cdf /= cdf[-1]
    levels = np.linspace(0.0, 1.0, npts)
    return np.interp(levels, cdf, t)


@lru_cache(maxsize=256)
def compile_emitter(chain):
    """Flatten a chain into arrays for the compiled emission kernel."""
    m_w, g_off, g_e, g_i, c_off, c_kind, c_e, c_i, c_inv = [], [0], [], [], [0], [], [], [], []
    for scheme, w in chain.members:
        m_w.append(w)
        for e, i in scheme.gammas:
            g_e.append(e)
            g_i.append(i)
        g_off.append(len(g_e))
        for e, i in scheme.betas:
            c_kind.append(0)
            c_e.append(e)
            c_i.append(i)
            c_inv.append(_beta_inverse_cdf(e))
        for e, i in scheme.alphas:
            c_kind.append(1)
            c_e.append(e)
            c_i.append(i)
            c_inv.append(np.full(BETA_TABLE_POINTS, e))
        c_off.append(len(c_e))
    f = lambda a: np.array(a, dtype=np.float64)
    n = lambda a: np.array(a, dtype=np.int64)
    inv = np.array(c_inv, dtype=np.float64).reshape(len(c_inv), BETA_TABLE_POINTS)
    return (f(m_w), n(g_off), f(g_e), f(g_i), n(c_off), n(c_kind), f(c_e), f(c_i), inv)


def empty_emitter():
    return compile_emitter(DecayChain("none", (), True))


@njit(cache=True, inline="always", _nrt=False)
def isotropic(st, out, k):
    cz = 2.0 * _rng.uniform(st) - 1.0
    phi = 2.0 * math.pi * _rng.uniform(st)
    sz = math.sqrt(max(0.0, 1.0 - cz * cz))
    out[k, 0] = sz * math.cos(phi)
    out[k, 1] = sz * math.sin(phi)
    out[k, 2] = cz


@njit(cache=True, _nrt=False)
def emit(m_w, g_off, g_e, g_i, c_off, c_kind, c_e, c_i, c_inv, st, sp, en, dirs, start):
    """Append one decay's emissions from index ``start``; returns the new count."""
    n = start
    cap = sp.shape[0]
    npts = c_inv.shape[1]
    for m in range(m_w.shape[0]):
        if m_w[m] < 1.0 and _rng.uniform(st) >= m_w[m]:
            continue
        for g in range(g_off[m], g_off[m + 1]):
            if _rng.uniform(st) < g_i[g] and n < cap:
                sp[n] = 0
                en[n] = g_e[g]
                isotropic(st, dirs, n)
                n += 1
        if c_off[m + 1] > c_off[m]:
            u = _rng.uniform(st)
            acc = 0.0
            for c in range(c_off[m], c_off[m + 1]):
                acc += c_i[c]
                if u < acc:
                    if c_kind[c] == 1:
                        e = c_e[c]
                        spc = 4
                    else:
                        x = _rng.uniform(st) * (npts - 1)
                        j = min(int(x), npts - 2)
                        f = x - j
                        e = c_inv[c, j] * (1.0 - f) + c_inv[c, j + 1] * f
                        spc = 3
                    if e > 0.0 and n < cap:
                        sp[n] = spc
                        en[n] = e
                        isotropic(st, dirs, n)
                        n += 1
                    break
    return n


MAX_EMISSIONS = 512


def decay_emissions(scheme, stream):
    """Particles emitted by one decay (chain members emitted together), at the origin.

    ``scheme`` is a DecayScheme or DecayChain; ``stream`` a counter-based stream
    from :func:`qubitrad.rng.make_stream` which is advanced in place.
    """
    chain = scheme if isinstance(scheme, DecayChain) else DecayChain(scheme.name, ((scheme, 1.0),), False)
    em = compile_emitter(chain)
    sp = np.zeros(MAX_EMISSIONS, dtype=np.int64)
    en = np.zeros(MAX_EMISSIONS)
    dirs = np.zeros((MAX_EMISSIONS, 3))
    n = emit(*em, stream, sp, en, dirs, 0)
    return [Particle(SPECIES[sp[i]], float(en[i]), np.zeros(3), dirs[i]) for i in range(n)]


# --------------------------------------------------------------- radioassay

_MEASURED = re.compile(r"^\(?\s*([-+0-9.eE]+)\s*(?:±|\+/-|\+-)\s*([-+0-9.eE]+)\s*\)?$")
_LIMIT = re.compile(r"^<\s*([-+0-9.eE]+)$")
COMPONENT_ID = re.compile(r"^[A-P]\*?$")


@dataclass(frozen=True)
class ActivityEntry:
    """Bulk activity in mBq/kg: measured (value, sigma) or 90% C.L. upper limit."""

    component: str
    isotope: str
    kind: str
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("measured", "limit"):
            raise ValueError(f"unknown activity kind {self.kind!r}")
        if not self.value > 0:
            raise ValueError("activity value must be positive")
        if self.sigma < 0:
            raise ValueError("activity sigma must be non-negative")

    @property
    def is_limit(self):
        return self.kind == "limit"

    @property
    def upper90(self):
        return self.value if self.is_limit else None

    def render(self):
        if self.is_limit:
            return f"<{fmt(self.value)}"
        return f"{fmt(self.value)} ± {fmt(self.sigma)}"


def parse_activity(text):
    """'v ± s' -> ('measured', v, s); '<u' -> ('limit', u, 0)."""
    t = text.strip()
    m = _MEASURED.match(t)
    if m:
        return "measured", float(m.group(1)), float(m.group(2))
    m = _LIMIT.match(t)
    if m:
        return "limit", float(m.group(1)), 0.0
    raise ValueError(f"malformed activity {text!r}")


@dataclass(frozen=True)
class RadioassayTable:
    entries: tuple

    def lookup(self, component, isotope):
        iso = display_name(file_stem(isotope))
        for e in self.entries:
            if e.component == component and e.isotope == iso:
                return e
        raise KeyError(f"no activity for component {component!r}, isotope {isotope!r}")

    def for_component(self, component):
        return [e for e in self.entries if e.component == component]

    def components(self):
        return sorted({e.component for e in self.entries})

    def to_csv(self):
        lines = ["component,isotope,activity"]
        lines += [f"{e.component},{e.isotope},{e.render()}" for e in self.entries]
        return "\n".join(lines) + "\n"


def _csv_rows(text):
    body = [ln for ln in text.splitlines()]
    for lineno, row in enumerate(csv.reader(io.StringIO("\n".join(body))), 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        yield lineno, [c.strip() for c in row]


def load_radioassay(path, isotopes=None, component_pattern=COMPONENT_ID):
    """Parse the component activity CSV (mBq/kg)."""
    lib = isotopes if isotopes is not None else NuclideLibrary()
    entries = []
    seen = set()
    header = None
    for line, row in _csv_rows(_read_text(path)):
        if header is None:
            header = [c.lower() for c in row]
            if header[:1] != ["component"] or len(header) != 3:
                raise DataError("header must be 'component,isotope,activity'", path, line)
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 columns, got {len(row)}", path, line)
        comp, iso, act = row
        if not component_pattern.match(comp):
            raise DataError(f"unknown component id {comp!r}", path, line)
        iso = display_name(file_stem(iso))
        if iso not in lib:
            raise DataError(f"unknown isotope name {iso!r}", path, line)
        try:
            kind, v, s = parse_activity(act)
            entry = ActivityEntry(comp, iso, kind, v, s)
        except ValueError as exc:
            raise DataError(f"malformed numeric activity: {exc}", path, line) from None
        if (comp, iso) in seen:
            raise DataError(f"duplicate entry {comp}/{iso}", path, line)
        seen.add((comp, iso))
        entries.append(entry)
    return RadioassayTable(tuple(entries))


def normalize_radioassay_text(text):
    out = []
    for _, row in _csv_rows(text):
        if len(row) == 3 and row[0].lower() != "component":
            try:
                kind, v, s = parse_activity(row[2])
                row = [row[0], display_name(file_stem(row[1])),
                       f"<{fmt(v)}" if kind == "limit" else f"{fmt(v)} ± {fmt(s)}"]
            except ValueError:
                pass
        out.append(",".join(row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------- components

@dataclass(frozen=True)
class ComponentSpec:
    """A mounted component: mass (kg, None when taken from geometry) and its placed volume."""

    id: str
    description: str
    mass: float | None
    volume: str
    assay: str
    estimate: bool = False

    def __post_init__(self):
        if self.mass is not None and not self.mass > 0:
            raise ValueError(f"component {self.id}: mass must be positive")


def load_components(path):
    comps = {}
    header = None
    for line, row in _csv_rows(_read_text(path)):
        if header is None:
            header = [c.lower() for c in row]
            want = ["id", "description", "mass_kg", "volume", "assay", "estimate"]
            if header != want:
                raise DataError(f"header must be {','.join(want)}", path, line)
            continue
        if len(row) != 6:
            raise DataError(f"expected 6 columns, got {len(row)}", path, line)
        cid, desc, mass, vol, assay, est = row
        if cid in comps:
            raise DataError(f"duplicate component {cid!r}", path, line)
        m = None
        if mass:
            m = _float(mass, path, line, "mass")
            if m <= 0:
                raise DataError(f"component {cid}: mass must be positive", path, line)
        if est not in ("yes", "no"):
            raise DataError("estimate column must be yes or no", path, line)
        comps[cid] = ComponentSpec(cid, desc, m, vol, assay or cid, est == "yes")
    if not comps:
        raise DataError("no components defined", path)
    return comps


def serialize_components(comps):
    lines = ["id,description,mass_kg,volume,assay,estimate"]
    for c in comps.values():
        mass = "" if c.mass is None else fmt(c.mass)
        lines.append(f"{c.id},{c.description},{mass},{c.volume},{c.assay},{'yes' if c.estimate else 'no'}")
    return "\n".join(lines) + "\n"


def normalize_csv_text(text):
    return "\n".join(",".join(_canon_token(c) for c in row) for _, row in _csv_rows(text)) + "\n"
