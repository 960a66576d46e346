"""Primary-particle generators and their normalization quantities.

Four source classes:

* :class:`SurfaceFlux` - particles entering a closed cylinder, energy from a
  histogram, direction cosine-weighted about the inward normal (default) or
  uniform over the inward hemisphere (``direction_law="isotropic"``).
* :class:`MuonHemisphere` - zenith angle with pdf proportional to
  cos^2(theta) sin(theta), emission point uniform on a square plane tangent to a
  hemisphere, direction along the inward plane normal, fixed energy.
* :class:`BulkDecay` - decay vertex uniform in a placed volume (daughters
  excluded), emissions from the isotope or chain decay scheme.
* :class:`RecordedReplay` - photons regenerated on an inner surface from
  recorded energy and polar-angle histograms.

Every source compiles to a :class:`Src` record consumed by the compiled
sampler :func:`sample_primaries`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from . import core_data
from . import rng as _rng
from .analysis import NormalizationSpec
from .core_data import MAX_EMISSIONS, compile_emitter, emit, empty_emitter
from .geometry import SurfaceDef, rotate, sample_in_volume, sample_surface
from .particles import GAMMA, MUON, SPECIES, Particle, species_code

SURFACE, MUON_PLANE, BULK, REPLAY = 0, 1, 2, 3
COSINE, ISOTROPIC = 0, 1
PROJECTED, UNIFORM = 0, 1
MUON_ENERGY_KEV = 4.0e6


class SourceError(ValueError):
    pass


# ---------------------------------------------------------------- spectra

@dataclass(frozen=True)
class EnergyHistogram:
    """Bin edges (keV, increasing) and non-negative per-bin weights (flux per bin for spectra)."""

    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "weights", w)
        if e.ndim != 1 or len(e) < 2 or len(w) != len(e) - 1:
            raise SourceError("histogram needs >= 1 bin and len(edges) == len(weights) + 1")
        if np.any(np.diff(e) <= 0):
            raise SourceError("histogram edges must be strictly increasing")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise SourceError("histogram weights must be finite and non-negative")
        if not w.sum() > 0:
            raise SourceError("histogram total must be positive")

    @property
    def total(self):
        return float(self.weights.sum())

    def cdf(self):
        c = np.concatenate([[0.0], np.cumsum(self.weights)])
        return c / c[-1]

    def to_text(self, comment=None):
        rows = [f"# {comment}"] if comment else []
        rows += ["upper_edge_keV flux_per_cm2_s", f"{core_data.fmt(self.edges[0])} 0"]
        rows += [f"{core_data.fmt(e)} {core_data.fmt(w)}" for e, w in zip(self.edges[1:], self.weights)]
        return "\n".join(rows) + "\n"


def parse_spectrum(text, path=None):
    """Two-column spectrum: first row is the lower edge (flux 0), then (upper edge, flux in bin)."""
    header, rows = core_data.tokenize_table(text, path)
    vals = []
    for line, toks in rows:
        if len(toks) != 2:
            raise core_data.DataError("expected 'upper_edge flux'", path, line)
        vals.append((core_data._float(toks[0], path, line), core_data._float(toks[1], path, line)))
    if len(vals) < 2:
        raise core_data.DataError("spectrum needs a lower edge and at least one bin", path)
    a = np.array(vals)
    try:
        return EnergyHistogram(a[:, 0], a[1:, 1])
    except SourceError as exc:
        raise core_data.DataError(str(exc), path) from None


def load_spectrum(path):
    return parse_spectrum(Path(path).read_text(encoding="utf-8"), path)


# ------------------------------------------------------------ source specs

@dataclass(frozen=True)
class SurfaceFlux:
    surface: SurfaceDef
    spectrum: EnergyHistogram
    flux: float                 # particles / cm2 / s through the surface
    flux_sigma: float = 0.0
    species: str = "gamma"
    direction_law: str = "cosine"

    def __post_init__(self):
        species_code(self.species)
        if self.direction_law not in ("cosine", "isotropic"):
            raise SourceError(f"unknown direction law {self.direction_law!r}")
        if self.flux < 0 or self.flux_sigma < 0:
            raise SourceError("flux and its sigma must be non-negative")

    def normalization(self, n_gen):
        return NormalizationSpec.from_flux(n_gen, self.surface.area, self.flux, self.flux_sigma)


@dataclass(frozen=True)
class MuonHemisphere:
    hemisphere_radius: float    # cm
    plane_side: float           # cm
    flux: float                 # muons / cm2 / min
    flux_sigma: float = 0.0
    energy: float = MUON_ENERGY_KEV
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.plane_side > 0 or not self.hemisphere_radius > 0:
            raise SourceError("hemisphere radius and plane side must be positive")
        if self.flux < 0 or not self.energy > 0:
            raise SourceError("muon flux must be non-negative and energy positive")

    def check(self, model):
        """Configuration errors for a geometry (empty when fine)."""
        errs = []
        r = model.bounding_radius(self.center)
        if self.hemisphere_radius < r:
            errs.append(f"muon hemisphere radius {self.hemisphere_radius:g} cm does not enclose the "
                        f"geometry (bounding radius {r:.1f} cm)")
        geo = model.geo
        corners = np.array([[x, y, z] for x in (geo.act_lo[0], geo.act_hi[0])
                            for y in (geo.act_lo[1], geo.act_hi[1]) for z in (geo.act_lo[2], geo.act_hi[2])])
        shadow = float(np.max(np.linalg.norm(corners - np.asarray(self.center), axis=1)))
        if self.plane_side / 2.0 < shadow:
            errs.append(f"muon plane side {self.plane_side:g} cm is smaller than the active volume "
                        f"shadow ({2 * shadow:.2f} cm)")
        return errs

    def normalization(self, n_gen):
        return NormalizationSpec.from_flux(n_gen, self.plane_side ** 2, self.flux / 60.0,
                                           self.flux_sigma / 60.0)


@dataclass(frozen=True)
class BulkDecay:
    component: core_data.ComponentSpec
    chain: core_data.DecayChain
    activity: core_data.ActivityEntry
    volume: str
    mass: float                 # kg used for normalization

    def __post_init__(self):
        if not self.mass > 0:
            raise SourceError(f"component {self.component.id}: mass must be positive")

    def normalization(self, n_gen):
        return NormalizationSpec.from_activity(n_gen, self.mass, self.activity)


@dataclass(frozen=True)
class RecordedReplay:
    surface: SurfaceDef
    energy_edges: np.ndarray
    energy_counts: np.ndarray
    theta_edges: np.ndarray
    theta_counts: np.ndarray
    flux2: float                # photons / cm2 / s at the surface; normalization only
    flux2_sigma: float = 0.0
    flux_syst_rel: float = 0.0
    joint_counts: np.ndarray | None = None
    mode: str = "marginal"
    position_law: str = "projected"
    species: str = "gamma"

    def __post_init__(self):
        if np.sum(self.energy_counts) <= 0 or np.sum(self.theta_counts) <= 0:
            raise SourceError("empty histogram: recorded replay needs non-empty energy and angle histograms")
        if self.mode not in ("marginal", "joint"):
            raise SourceError(f"unknown replay mode {self.mode!r}")
        if self.mode == "joint" and (self.joint_counts is None or np.sum(self.joint_counts) <= 0):
            raise SourceError("empty histogram: joint replay needs a non-empty 2-D histogram")
        if self.position_law not in ("projected", "uniform"):
            raise SourceError(f"unknown position law {self.position_law!r}")
        th = np.asarray(self.theta_edges)
        if th[0] < 0 or th[-1] > math.pi + 1e-12:
            raise SourceError("polar-angle edges must lie in [0, pi]")

    def normalization(self, n_gen):
        return NormalizationSpec.from_flux(n_gen, self.surface.area, self.flux2,
                                           self.flux2 * self.flux_syst_rel, self.flux2_sigma)


# ---------------------------------------------------------- compiled form

class Src(NamedTuple):
    kind: int
    species: int
    surf: np.ndarray        # [R, hz, cx, cy, cz]
    e_edges: np.ndarray
    e_cdf: np.ndarray
    dir_law: int
    mu_r: float
    mu_side: float
    mu_energy: float
    center: np.ndarray
    vol: int
    m_w: np.ndarray
    g_off: np.ndarray
    g_e: np.ndarray
    g_i: np.ndarray
    c_off: np.ndarray
    c_kind: np.ndarray
    c_e: np.ndarray
    c_i: np.ndarray
    c_inv: np.ndarray
    t_edges: np.ndarray
    t_cdf: np.ndarray
    joint_cdf: np.ndarray
    pos_law: int


def _cdf(counts):
    c = np.concatenate([[0.0], np.cumsum(np.asarray(counts, dtype=np.float64))])
    return c / c[-1] if c[-1] > 0 else c


def compile_source(spec, model=None):
    z1 = np.zeros(1)
    em = empty_emitter()
    base = dict(kind=0, species=GAMMA, surf=np.zeros(5), e_edges=np.array([0.0, 1.0]), e_cdf=np.array([0.0, 1.0]),
                dir_law=COSINE, mu_r=0.0, mu_side=0.0, mu_energy=0.0, center=np.zeros(3), vol=0,
                m_w=em[0], g_off=em[1], g_e=em[2], g_i=em[3], c_off=em[4], c_kind=em[5], c_e=em[6],
                c_i=em[7], c_inv=em[8], t_edges=np.array([0.0, math.pi]), t_cdf=np.array([0.0, 1.0]),
                joint_cdf=z1, pos_law=PROJECTED)
    if isinstance(spec, SurfaceFlux):
        base.update(kind=SURFACE, species=species_code(spec.species), surf=spec.surface.as_array(),
                    e_edges=spec.spectrum.edges.copy(), e_cdf=spec.spectrum.cdf(),
                    dir_law=COSINE if spec.direction_law == "cosine" else ISOTROPIC)
    elif isinstance(spec, MuonHemisphere):
        base.update(kind=MUON_PLANE, species=MUON, mu_r=float(spec.hemisphere_radius),
                    mu_side=float(spec.plane_side), mu_energy=float(spec.energy),
                    center=np.asarray(spec.center, dtype=np.float64))
    elif isinstance(spec, BulkDecay):
        if model is None:
            raise SourceError("bulk decay sources need the geometry model")
        if spec.volume not in model.index or spec.volume == "world":
            raise SourceError(f"component volume {spec.volume!r} not in geometry")
        em = compile_emitter(spec.chain)
        base.update(kind=BULK, vol=model.index[spec.volume], m_w=em[0], g_off=em[1], g_e=em[2], g_i=em[3],
                    c_off=em[4], c_kind=em[5], c_e=em[6], c_i=em[7], c_inv=em[8])
    elif isinstance(spec, RecordedReplay):
        joint = z1
        if spec.mode == "joint":
            joint = _cdf(np.asarray(spec.joint_counts, dtype=np.float64).ravel())
        base.update(kind=REPLAY, species=species_code(spec.species), surf=spec.surface.as_array(),
                    e_edges=np.asarray(spec.energy_edges, dtype=np.float64), e_cdf=_cdf(spec.energy_counts),
                    t_edges=np.asarray(spec.theta_edges, dtype=np.float64), t_cdf=_cdf(spec.theta_counts),
                    joint_cdf=joint, pos_law=PROJECTED if spec.position_law == "projected" else UNIFORM)
    else:
        raise SourceError(f"unknown source spec {type(spec).__name__}")
    return Src(**base)


# ----------------------------------------------------------------- kernels

@njit(cache=True, _nrt=False)
def _bin_from_cdf(cdf, u):
    """Index i with cdf[i] <= u < cdf[i+1], skipping empty bins."""
    i = np.searchsorted(cdf, u, side="right") - 1
    n = cdf.shape[0] - 2
    if i < 0:
        i = 0
    if i > n:
        i = n
    while i < n and cdf[i + 1] <= cdf[i]:
        i += 1
    while i > 0 and cdf[i + 1] <= cdf[i]:
        i -= 1
    return i


@njit(cache=True, _nrt=False)
def sample_histogram(edges, cdf, st):
    i = _bin_from_cdf(cdf, _rng.uniform(st))
    return edges[i] + (edges[i + 1] - edges[i]) * _rng.uniform(st)


@njit(cache=True, _nrt=False)
def _projected_entry(s, st, ct, phi, pos):
    """Entry point on a closed cylinder for a given direction, chosen per projected area."""
    r = s[0]
    hz = s[1]
    stt = math.sqrt(max(0.0, 1.0 - ct * ct))
    a_lat = 4.0 * r * hz * stt
    a_cap = math.pi * r * r * abs(ct)
    cp = math.cos(phi)
    sp = math.sin(phi)
    if _rng.uniform(st) * (a_lat + a_cap) < a_lat:
        b = (2.0 * _rng.uniform(st) - 1.0) * r
        back = math.sqrt(max(0.0, r * r - b * b))
        pos[0] = -back * cp - b * sp
        pos[1] = -back * sp + b * cp
        pos[2] = (2.0 * _rng.uniform(st) - 1.0) * hz
    else:
        rr = r * math.sqrt(_rng.uniform(st))
        ph = 2.0 * math.pi * _rng.uniform(st)
        pos[0] = rr * math.cos(ph)
        pos[1] = rr * math.sin(ph)
        pos[2] = -hz if ct > 0.0 else hz
    pos[0] += s[2]
    pos[1] += s[3]
    pos[2] += s[4]


@njit(cache=True, _nrt=False)
def _replay_angles(src, st):
    if src.joint_cdf.shape[0] > 1:
        nt = src.t_edges.shape[0] - 1
        k = _bin_from_cdf(src.joint_cdf, _rng.uniform(st))
        ie = k // nt
        it = k - ie * nt
        e = src.e_edges[ie] + (src.e_edges[ie + 1] - src.e_edges[ie]) * _rng.uniform(st)
        th = src.t_edges[it] + (src.t_edges[it + 1] - src.t_edges[it]) * _rng.uniform(st)
    else:
        e = sample_histogram(src.e_edges, src.e_cdf, st)
        th = sample_histogram(src.t_edges, src.t_cdf, st)
    return e, th


@njit(cache=True, _nrt=False)
def sample_primaries(src, geo, st, sp, en, pos, dirs):
    """Fill primaries for one event; returns their number."""
    if src.kind == SURFACE:
        # the inward normal is written to dirs[0] and rotated in place
        sample_surface(src.surf, st, pos[0], dirs[0])
        if src.dir_law == COSINE:
            ct = math.sqrt(_rng.uniform(st))
        else:
            ct = _rng.uniform(st)
        rotate(dirs[0], ct, 2.0 * math.pi * _rng.uniform(st))
        sp[0] = src.species
        en[0] = sample_histogram(src.e_edges, src.e_cdf, st)
        return 1
    if src.kind == MUON_PLANE:
        ct = _rng.uniform(st) ** (1.0 / 3.0)
        stt = math.sqrt(max(0.0, 1.0 - ct * ct))
        phi = 2.0 * math.pi * _rng.uniform(st)
        cp = math.cos(phi)
        s_ = math.sin(phi)
        nx = stt * cp
        ny = stt * s_
        nz = ct
        a = (_rng.uniform(st) - 0.5) * src.mu_side
        b = (_rng.uniform(st) - 0.5) * src.mu_side
        # plane basis: e1 = d n / d theta, e2 = horizontal
        pos[0, 0] = src.center[0] + src.mu_r * nx + a * ct * cp - b * s_
        pos[0, 1] = src.center[1] + src.mu_r * ny + a * ct * s_ + b * cp
        pos[0, 2] = src.center[2] + src.mu_r * nz - a * stt
        dirs[0, 0] = -nx
        dirs[0, 1] = -ny
        dirs[0, 2] = -nz
        sp[0] = MUON
        en[0] = src.mu_energy
        return 1
    if src.kind == BULK:
        if not sample_in_volume(geo, src.vol, st, pos[0]):
            return 0
        n = emit(src.m_w, src.g_off, src.g_e, src.g_i, src.c_off, src.c_kind, src.c_e, src.c_i, src.c_inv,
                 st, sp, en, dirs, 0)
        for k in range(1, n):
            for j in range(3):
                pos[k, j] = pos[0, j]
        return n
    # recorded replay
    e, th = _replay_angles(src, st)
    ct = math.cos(th)
    stt = math.sin(th)
    p = pos[0]
    phi = 0.0
    if src.pos_law == PROJECTED:
        phi = 2.0 * math.pi * _rng.uniform(st)
        _projected_entry(src.surf, st, ct, phi, p)
    else:
        normal = dirs[0]
        for _ in range(1000000):
            sample_surface(src.surf, st, p, normal)
            phi = 2.0 * math.pi * _rng.uniform(st)
            if stt * math.cos(phi) * normal[0] + stt * math.sin(phi) * normal[1] + ct * normal[2] > 0.0:
                break
    sp[0] = src.species
    en[0] = e
    dirs[0, 0] = stt * math.cos(phi)
    dirs[0, 1] = stt * math.sin(phi)
    dirs[0, 2] = ct
    return 1


@njit(cache=True)
def sample_many(src, geo, seed, source, start, n):
    """Primaries of events [start, start+n): (event, species, energy, position, direction)."""
    cap = max(16, n)
    ev = np.empty(cap, dtype=np.int64)
    spo = np.empty(cap, dtype=np.int64)
    eno = np.empty(cap)
    po = np.empty((cap, 3))
    do = np.empty((cap, 3))
    sp = np.empty(MAX_EMISSIONS, dtype=np.int64)
    en = np.empty(MAX_EMISSIONS)
    pos = np.empty((MAX_EMISSIONS, 3))
    dirs = np.empty((MAX_EMISSIONS, 3))
    st = np.zeros(2, dtype=np.uint64)
    m = 0
    for e in range(start, start + n):
        _rng.seed_stream(st, seed, source, e)
        k = sample_primaries(src, geo, st, sp, en, pos, dirs)
        if m + k > cap:
            cap = 2 * (m + k)
            ev = _grow_i(ev, cap)
            spo = _grow_i(spo, cap)
            eno = _grow_f(eno, cap)
            po = _grow_f2(po, cap)
            do = _grow_f2(do, cap)
        for j in range(k):
            ev[m] = e
            spo[m] = sp[j]
            eno[m] = en[j]
            po[m] = pos[j]
            do[m] = dirs[j]
            m += 1
    return ev[:m].copy(), spo[:m].copy(), eno[:m].copy(), po[:m].copy(), do[:m].copy()


@njit(cache=True)
def _grow_i(a, n):
    b = np.empty(n, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_f(a, n):
    b = np.empty(n)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_f2(a, n):
    b = np.empty((n, a.shape[1]))
    b[: a.shape[0]] = a
    return b


# ------------------------------------------------------------- public API

@dataclass
class PrimaryBatch:
    event: np.ndarray
    species: np.ndarray
    energy: np.ndarray
    position: np.ndarray
    direction: np.ndarray

    def particles(self):
        return [Particle(SPECIES[s], float(e), p, d)
                for s, e, p, d in zip(self.species, self.energy, self.position, self.direction)]


def _dummy_geo():
    from .geometry import Geo
    z = np.zeros(1, dtype=np.int64)
    return Geo(np.full(1, -1, dtype=np.int64), np.zeros((1, 3)), np.zeros((1, 3)), z, z,
               np.zeros(2, dtype=np.int64), np.zeros(0, dtype=np.int64), 0, np.zeros(3), np.zeros(3),
               np.full(1, np.inf))


def sample_batch(spec, n, seed=0, source=0, model=None, start=0):
    """Primaries of ``n`` consecutive events, each drawn from its own counter-based stream."""
    src = compile_source(spec, model)
    geo = model.geo if model is not None else _dummy_geo()
    out = sample_many(src, geo, np.uint64(seed), np.uint64(source), start, n)
    return PrimaryBatch(*out)


def _one(spec, stream, model=None):
    src = compile_source(spec, model)
    geo = model.geo if model is not None else _dummy_geo()
    sp = np.empty(MAX_EMISSIONS, dtype=np.int64)
    en = np.empty(MAX_EMISSIONS)
    pos = np.empty((MAX_EMISSIONS, 3))
    dirs = np.empty((MAX_EMISSIONS, 3))
    k = sample_primaries(src, geo, stream, sp, en, pos, dirs)
    return [Particle(SPECIES[sp[i]], float(en[i]), pos[i].copy(), dirs[i].copy()) for i in range(k)]


def sample_surface_flux(spec, stream):
    return _one(spec, stream)[0]


def sample_muon(spec, stream):
    return _one(spec, stream)[0]


def sample_bulk_decay(spec, model, stream):
    return _one(spec, stream, model)


def sample_recorded(spec, stream):
    return _one(spec, stream)[0]
