"""Particle stepping with simplified physics, chip tallies and surface crossings.

Physics per species:

* photons: exponential free path with the total attenuation coefficient; at an
  interaction, absorption (full local deposit) with the tabulated absorption
  fraction, otherwise Compton scattering with Klein-Nishina sampling and local
  deposit of the recoil energy.  Below the photon cutoff the residual energy
  is deposited locally.
* muons: straight line, mean continuous loss dE/dx * rho per cm, no straggling.
* electrons and alphas: if the CSDA range is shorter than the distance to the
  active volume the whole energy is deposited on the spot; otherwise straight
  line with continuous loss from the range table.
* neutrons: elastic scattering only, isotropic in the centre of mass, recoil
  energy deposited locally, residual deposited below the neutron cutoff.

No secondary particles are transported.  Every deposit is attributed to the
volume where it happens; the tally uses the active volume.

Surface crossings (two-step scheme): with ``s2mode=1`` every inward crossing
of a photon through the recording cylinder is stored as (energy, polar angle
of the direction with respect to +z); with ``s2mode=2`` particles are
terminated when they leave the cylinder.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from . import rng as _rng
from .analysis import DEFAULT_EDGES
from .core_data import MAX_EMISSIONS, VACUUM
from .geometry import (CYLINDER, EPS_PUSH, distance_to_active, intervals, locate_from, rotate,
                       step_next)
from .particles import ALPHA, ELECTRON, GAMMA, MUON, NEUTRON, SPECIES, species_code
from .sources import compile_source, sample_primaries

ME = 511.0
DEFAULT_THRESHOLD = 1.0
CHUNK = 8192
EVENT_RECORD_CAP = 256


class Phys(NamedTuple):
    density: np.ndarray
    att_off: np.ndarray
    att_le: np.ndarray
    att_lm: np.ndarray
    att_pe: np.ndarray
    mu_off: np.ndarray
    mu_le: np.ndarray
    mu_ld: np.ndarray
    el_off: np.ndarray
    el_le: np.ndarray
    el_lr: np.ndarray
    al_off: np.ndarray
    al_le: np.ndarray
    al_lr: np.ndarray
    n_off: np.ndarray
    n_le: np.ndarray
    n_sig: np.ndarray
    n_a: np.ndarray
    photon_cut: float
    neutron_cut: float
    max_steps: int
    transparent: int


def _flatten(tables, names, cols):
    off = [0]
    data = [[] for _ in cols]
    for n in names:
        t = tables.get(n)
        if t is not None:
            for k, c in enumerate(cols):
                data[k].extend(c(t))
        off.append(len(data[0]))
    return [np.array(off, dtype=np.int64)] + [np.array(d, dtype=np.float64) for d in data]


def build_physics(library, materials, photon_cutoff=10.0, neutron_cutoff=1.0, max_steps=100000,
                  transparent_muons=False):
    """Pack the tables of the listed materials (index order kept) for the kernels."""
    missing = library.check_complete(materials)
    if missing:
        raise ValueError("; ".join(missing))
    density = np.array([library.density(m) for m in materials], dtype=np.float64)
    att = _flatten(library.attenuation, materials,
                   [lambda t: np.log(t.energy), lambda t: np.log(t.mu_rho), lambda t: t.photo_fraction])
    mu = _flatten(library.muon, materials, [lambda t: np.log(t.energy), lambda t: np.log(t.dedx)])
    el = _flatten(library.electron, materials, [lambda t: np.log(t.energy), lambda t: np.log(t.csda)])
    al = _flatten(library.alpha, materials, [lambda t: np.log(t.energy), lambda t: np.log(t.csda)])
    nt = _flatten(library.neutron, materials, [lambda t: np.log(t.energy), lambda t: t.sigma])
    n_a = np.array([library.neutron[m].mass_number if m != VACUUM else 1.0 for m in materials])
    return Phys(density, *att, *mu, *el, *al, *nt, n_a, float(photon_cutoff), float(neutron_cutoff),
                int(max_steps), int(bool(transparent_muons)))


# ------------------------------------------------------------------ kernels

@njit(cache=True, inline="always", _nrt=False)
def _interp(off, xs, ys, m, x, extrapolate):
    i0 = off[m]
    i1 = off[m + 1]
    if i1 - i0 == 1:
        return ys[i0]
    if x <= xs[i0]:
        if not extrapolate:
            return ys[i0]
        j = i0
    elif x >= xs[i1 - 1]:
        if not extrapolate:
            return ys[i1 - 1]
        j = i1 - 2
    else:
        lo = i0
        hi = i1 - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if xs[mid] <= x:
                lo = mid
            else:
                hi = mid
        j = lo
    f = (x - xs[j]) / (xs[j + 1] - xs[j])
    return ys[j] + f * (ys[j + 1] - ys[j])


@njit(cache=True, inline="always", _nrt=False)
def _s2_check(s2, s2mode, species, e, p, d, seg, rec, nrec):
    """Record inward photon crossings (mode 1); distance to an outward crossing (mode 2) or -1."""
    if s2mode == 0:
        return -1.0
    n, t0, t1, _, _ = intervals(CYLINDER, s2, p[0] - s2[2], p[1] - s2[3], p[2] - s2[4], d[0], d[1], d[2])
    if n == 0:
        return -1.0
    if s2mode == 1:
        if species == GAMMA and t0 > 0.0 and t0 <= seg:
            k = nrec[0]
            if k < rec.shape[0]:
                rec[k, 0] = e
                rec[k, 1] = math.acos(min(1.0, max(-1.0, d[2])))
            nrec[0] = k + 1
        return -1.0
    if t1 > 0.0 and t1 <= seg:
        return t1
    return -1.0


@njit(cache=True, _nrt=False)
def _klein_nishina(e, st):
    """Scattered-photon energy fraction and cosine of the scattering angle."""
    k = e / ME
    eps0 = 1.0 / (1.0 + 2.0 * k)
    eps0sq = eps0 * eps0
    a1 = -math.log(eps0)
    a2 = a1 + 0.5 * (1.0 - eps0sq)
    while True:
        if a1 > a2 * _rng.uniform(st):
            eps = math.exp(-a1 * _rng.uniform(st))
            epssq = eps * eps
        else:
            epssq = eps0sq + (1.0 - eps0sq) * _rng.uniform(st)
            eps = math.sqrt(epssq)
        onecost = (1.0 - eps) / (eps * k)
        sint2 = onecost * (2.0 - onecost)
        g = 1.0 - eps * sint2 / (1.0 + epssq)
        if g >= _rng.uniform(st):
            return eps, 1.0 - onecost


@njit(cache=True, _nrt=False)
def elastic_transfer(e, a, mucm):
    """Energy given to a nucleus of mass number a and the lab cosine, for CM cosine mucm."""
    t = e * 2.0 * a / ((a + 1.0) * (a + 1.0)) * (1.0 - mucm)
    den = math.sqrt(a * a + 2.0 * a * mucm + 1.0)
    cl = (1.0 + a * mucm) / den if den > 1e-12 else 0.0
    return t, min(1.0, max(-1.0, cl))


@njit(cache=True, inline="always", _nrt=False)
def _advance(geo, vol, nxt, p, d, t):
    for k in range(3):
        p[k] += (t + EPS_PUSH) * d[k]
    return locate_from(geo, nxt if nxt >= 0 else vol, p)


@njit(cache=True, _nrt=False)
def transport_particle(species, e, p, d, vol, geo, phys, st, edep, path, s2, s2mode, rec, nrec):
    """Follow one particle to absorption or escape; returns the escaping kinetic energy.

    ``vol`` is the volume containing the start point, or -1 to locate it.
    """
    if vol < 0:
        vol = locate_from(geo, 0, p)
    steps = 0
    pre = 0.0   # length already pushed into the current volume at the last boundary
    while True:
        steps += 1
        if steps > phys.max_steps:
            edep[vol] += e
            return 0.0
        m = geo.mat[vol]
        rho = phys.density[m]
        r = np.inf
        if (species == ELECTRON or species == ALPHA) and rho > 0.0:
            if species == ELECTRON:
                r = math.exp(_interp(phys.el_off, phys.el_le, phys.el_lr, m, math.log(e), True)) / rho
            else:
                r = math.exp(_interp(phys.al_off, phys.al_le, phys.al_lr, m, math.log(e), True)) / rho
            if r < distance_to_active(geo, p):
                # cannot reach the active volume: score the residual range here
                edep[vol] += e
                path[vol] += r
                return 0.0
        dg, nxt = step_next(geo, vol, p, d)

        if species == GAMMA or species == NEUTRON:
            le = math.log(e)
            if species == GAMMA:
                mu = math.exp(_interp(phys.att_off, phys.att_le, phys.att_lm, m, le, False)) * rho if rho > 0.0 else 0.0
            else:
                mu = _interp(phys.n_off, phys.n_le, phys.n_sig, m, le, False) if rho > 0.0 else 0.0
            s = -math.log(_rng.uniform(st)) / mu if mu > 0.0 else np.inf
            seg = min(s, dg)
            kill = _s2_check(s2, s2mode, species, e, p, d, seg, rec, nrec)
            if kill >= 0.0:
                path[vol] += kill
                return e
            if seg == np.inf:
                return e
            path[vol] += seg
            if s < dg:
                for k in range(3):
                    p[k] += s * d[k]
                if species == GAMMA:
                    pe = _interp(phys.att_off, phys.att_le, phys.att_pe, m, le, False)
                    if _rng.uniform(st) < pe:
                        edep[vol] += e
                        return 0.0
                    eps, cost = _klein_nishina(e, st)
                    rotate(d, cost, 2.0 * math.pi * _rng.uniform(st))
                    e2 = e * eps
                    edep[vol] += e - e2
                    e = e2
                    if e < phys.photon_cut:
                        edep[vol] += e
                        return 0.0
                else:
                    t, cl = elastic_transfer(e, phys.n_a[m], 2.0 * _rng.uniform(st) - 1.0)
                    rotate(d, cl, 2.0 * math.pi * _rng.uniform(st))
                    edep[vol] += t
                    e -= t
                    if e < phys.neutron_cut:
                        edep[vol] += e
                        return 0.0
            else:
                vol = _advance(geo, vol, nxt, p, d, dg)
            continue

        # charged species: straight line
        kill = _s2_check(s2, s2mode, species, e, p, d, dg, rec, nrec)
        if kill >= 0.0:
            dg = kill
        seg = dg + pre
        if species == MUON:
            if rho > 0.0 and (phys.transparent == 0 or vol == geo.active):
                dedx = 1000.0 * rho * math.exp(_interp(phys.mu_off, phys.mu_le, phys.mu_ld, m, math.log(e), False))
                loss = dedx * seg
                if loss >= e:
                    edep[vol] += e
                    path[vol] += e / dedx
                    return 0.0
                edep[vol] += loss
                if phys.transparent == 0:
                    e -= loss
        elif rho > 0.0:
            if species == ELECTRON:
                off, le_, lr_ = phys.el_off, phys.el_le, phys.el_lr
            else:
                off, le_, lr_ = phys.al_off, phys.al_le, phys.al_lr
            if r <= seg:
                edep[vol] += e
                path[vol] += r
                return 0.0
            e2 = math.exp(_interp(off, lr_, le_, m, math.log((r - seg) * rho), True))
            if e2 < e:
                edep[vol] += e - e2
                e = e2
        if kill >= 0.0:
            path[vol] += seg
            return e
        if dg == np.inf:
            return e
        path[vol] += seg
        vol = _advance(geo, vol, nxt, p, d, dg)
        pre = EPS_PUSH


@njit(cache=True, _nrt=False)
def transport_primaries(n, sp, en, pos, dirs, vol, geo, phys, st, edep, path, s2, s2mode, rec, nrec):
    """Transport primaries 0..n-1; their position and direction rows are overwritten."""
    esc = 0.0
    for j in range(n):
        esc += transport_particle(sp[j], en[j], pos[j], dirs[j], vol, geo, phys, st, edep, path, s2, s2mode,
                                  rec, nrec)
    return esc


@njit(cache=True, nogil=True)
def run_chunk(src, geo, phys, s2, s2mode, seed, source, start, n):
    """Events [start, start+n): chip deposits (> 0) with event index, and crossing records."""
    nv = geo.kind.shape[0]
    edep = np.zeros(nv)
    path = np.zeros(nv)
    sp = np.empty(MAX_EMISSIONS, dtype=np.int64)
    en = np.empty(MAX_EMISSIONS)
    pos = np.empty((MAX_EMISSIONS, 3))
    dirs = np.empty((MAX_EMISSIONS, 3))
    st = np.zeros(2, dtype=np.uint64)
    ev_rec = np.empty((EVENT_RECORD_CAP, 2))
    nrec = np.zeros(1, dtype=np.int64)
    hit_i = np.empty(256, dtype=np.int64)
    hit_e = np.empty(256)
    nh = 0
    rec = np.empty((1024, 2))
    nr = 0
    overflow = 0
    vol0 = src.vol if src.kind == 2 else -1
    for ev in range(start, start + n):
        _rng.seed_stream(st, seed, source, ev)
        k = sample_primaries(src, geo, st, sp, en, pos, dirs)
        edep[:] = 0.0
        nrec[0] = 0
        transport_primaries(k, sp, en, pos, dirs, vol0, geo, phys, st, edep, path, s2, s2mode, ev_rec, nrec)
        dep = edep[geo.active]
        if dep > 0.0:
            if nh == hit_i.shape[0]:
                hi2 = np.empty(2 * nh, dtype=np.int64)
                he2 = np.empty(2 * nh)
                hi2[:nh] = hit_i
                he2[:nh] = hit_e
                hit_i = hi2
                hit_e = he2
            hit_i[nh] = ev
            hit_e[nh] = dep
            nh += 1
        c = nrec[0]
        if c > EVENT_RECORD_CAP:
            overflow += c - EVENT_RECORD_CAP
            c = EVENT_RECORD_CAP
        if nr + c > rec.shape[0]:
            r2 = np.empty((2 * (nr + c), 2))
            r2[:nr] = rec[:nr]
            rec = r2
        for j in range(c):
            rec[nr, 0] = ev_rec[j, 0]
            rec[nr, 1] = ev_rec[j, 1]
            nr += 1
    return hit_i[:nh].copy(), hit_e[:nh].copy(), rec[:nr].copy(), overflow


# ------------------------------------------------------------- python API

@dataclass
class CrossingRecord:
    energy: float
    theta: float
    species: str = "gamma"


@dataclass
class EventResult:
    event: int
    deposit: float
    deposits: dict
    path_lengths: dict
    crossings: list
    escaped: float
    primary_energy: float

    @property
    def total_deposit(self):
        return float(sum(self.deposits.values()))


@dataclass
class Tally:
    """Integer histogram of per-event chip deposits above threshold (last bin is overflow)."""

    edges: np.ndarray
    counts: np.ndarray
    n_hits: int
    n_gen: int
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.n_gen < self.n_hits:
            raise ValueError("N_gen must be at least the number of depositing events")

    @classmethod
    def empty(cls, n_gen=0, edges=DEFAULT_EDGES, threshold=DEFAULT_THRESHOLD):
        edges = np.asarray(edges, dtype=float)
        return cls(edges, np.zeros(len(edges), dtype=np.int64), 0, int(n_gen), threshold)

    @classmethod
    def from_deposits(cls, deposits, n_gen, edges=DEFAULT_EDGES, threshold=DEFAULT_THRESHOLD):
        edges = np.asarray(edges, dtype=float)
        dep = np.asarray(deposits, dtype=float)
        dep = dep[dep > threshold]
        idx = np.searchsorted(edges, dep, side="right") - 1
        idx = np.clip(idx, 0, len(edges) - 1)
        counts = np.bincount(idx, minlength=len(edges)).astype(np.int64)
        return cls(edges, counts, int(dep.size), int(n_gen), threshold)

    def merge(self, other):
        if not np.array_equal(self.edges, other.edges) or self.threshold != other.threshold:
            raise ValueError("incompatible tallies")
        return Tally(self.edges, self.counts + other.counts, self.n_hits + other.n_hits,
                     self.n_gen + other.n_gen, self.threshold)


@dataclass
class RunOutput:
    tally: Tally
    hit_events: np.ndarray
    hit_deposits: np.ndarray
    crossings: np.ndarray        # (n, 2): energy keV, theta rad
    n_gen: int
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


def _s2_array(surface):
    return np.zeros(5) if surface is None else surface.as_array()


def run_events(src, geo, phys, n, seed, source, workers=1, surface=None, s2mode=0, threshold=DEFAULT_THRESHOLD,
               edges=DEFAULT_EDGES, chunk=CHUNK):
    """Run ``n`` events in fixed-size chunks on a worker pool; output is worker-count independent."""
    import time

    t0 = time.perf_counter()
    s2 = _s2_array(surface)
    starts = list(range(0, int(n), chunk))
    seed_u = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    source_u = np.uint64(source)

    def job(a):
        return run_chunk(src, geo, phys, s2, s2mode, seed_u, source_u, a, min(chunk, int(n) - a))

    if workers <= 1 or len(starts) <= 1:
        parts = [job(a) for a in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    if parts:
        hit_i = np.concatenate([p[0] for p in parts])
        hit_e = np.concatenate([p[1] for p in parts])
        rec = np.concatenate([p[2] for p in parts])
        overflow = sum(p[3] for p in parts)
    else:
        hit_i, hit_e, rec, overflow = np.zeros(0, np.int64), np.zeros(0), np.zeros((0, 2)), 0
    if overflow:
        raise RuntimeError(f"{overflow} crossing records dropped: more than {EVENT_RECORD_CAP} in one event")
    tally = Tally.from_deposits(hit_e, int(n), edges, threshold)
    return RunOutput(tally, hit_i, hit_e, rec, int(n), time.perf_counter() - t0)


def run_source(spec, model, phys, n, seed, label, workers=1, surface=None, s2mode=0,
               threshold=DEFAULT_THRESHOLD, edges=DEFAULT_EDGES, chunk=CHUNK):
    src = compile_source(spec, model)
    return run_events(src, model.geo, phys, n, seed, _rng.source_id(label), workers, surface, s2mode,
                      threshold, edges, chunk)


def transport_event(primaries, model, phys, stream, surface=None, record=False, event=0):
    """Transport a list of Particles; returns the per-event result."""
    n = len(primaries)
    sp = np.array([species_code(p.species) for p in primaries], dtype=np.int64)
    en = np.array([p.energy for p in primaries], dtype=np.float64)
    pos = np.array([p.position for p in primaries], dtype=np.float64).reshape(n, 3)
    dirs = np.array([p.direction for p in primaries], dtype=np.float64).reshape(n, 3)
    nv = model.geo.kind.shape[0]
    edep = np.zeros(nv)
    path = np.zeros(nv)
    rec = np.empty((EVENT_RECORD_CAP, 2))
    nrec = np.zeros(1, dtype=np.int64)
    s2mode = 1 if (surface is not None and record) else (2 if surface is not None else 0)
    esc = transport_primaries(n, sp, en, pos, dirs, -1, model.geo, phys, stream, edep, path,
                              _s2_array(surface), s2mode, rec, nrec)
    names = model.names
    c = min(int(nrec[0]), EVENT_RECORD_CAP)
    return EventResult(
        event=event,
        deposit=float(edep[model.geo.active]),
        deposits={names[i]: float(edep[i]) for i in range(nv) if edep[i] != 0.0},
        path_lengths={names[i]: float(path[i]) for i in range(nv) if path[i] != 0.0},
        crossings=[CrossingRecord(float(rec[i, 0]), float(rec[i, 1])) for i in range(c)],
        escaped=float(esc),
        primary_energy=float(en.sum()),
    )


def record_crossings(primaries, model, phys, stream, surface):
    """Inward crossings of ``surface`` by photons of one event."""
    return transport_event(primaries, model, phys, stream, surface=surface, record=True).crossings
