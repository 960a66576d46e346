"""Nested solids with materials: point location, ray distances and samplers.

Volumes form a tree rooted at an infinite vacuum world (index 0).  Placements
are translations only.  The file format uses millimetres; everything in
memory is in centimetres.

Geometry file rows (``#`` comments allowed)::

    volume <name> box <hx> <hy> <hz> <material> <parent> <x> <y> <z> [active]
    volume <name> cylinder <r> <hz> <material> <parent> <x> <y> <z> [active]
    volume <name> shell <r_in> <r_out> <hz> <material> <parent> <x> <y> <z> [active]
    volume <name> disk <r> <hz> <material> <parent> <x> <y> <z> [active]
    surface <name> <r> <hz> <x> <y> <z>

Dimensions are half-extents; offsets are relative to the parent's centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from . import rng as _rng
from .core_data import VACUUM

WORLD, BOX, CYLINDER, SHELL, DISK = -1, 0, 1, 2, 3
SOLIDS = {"box": (BOX, 3), "cylinder": (CYLINDER, 2), "shell": (SHELL, 3), "disk": (DISK, 2)}
EPS_PUSH = 1.0e-7
_TOL = 1.0e-9
_INF = np.inf
MM = 0.1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Solid:
    kind: str
    dims: tuple  # cm

    def __post_init__(self):
        if self.kind not in SOLIDS:
            raise GeometryError(f"unknown solid {self.kind!r}")
        if len(self.dims) != SOLIDS[self.kind][1]:
            raise GeometryError(f"{self.kind} takes {SOLIDS[self.kind][1]} dimensions")
        if any(not d > 0 for d in self.dims):
            raise GeometryError("solid dimensions must be positive")
        if self.kind == "shell" and not self.dims[0] < self.dims[1]:
            raise GeometryError("shell inner radius must be smaller than outer radius")

    @property
    def volume(self):
        d = self.dims
        if self.kind == "box":
            return 8.0 * d[0] * d[1] * d[2]
        if self.kind == "shell":
            return math.pi * (d[1] ** 2 - d[0] ** 2) * 2.0 * d[2]
        return math.pi * d[0] ** 2 * 2.0 * d[1]

    def half_extents(self):
        d = self.dims
        if self.kind == "box":
            return np.array(d, dtype=float)
        if self.kind == "shell":
            return np.array([d[1], d[1], d[2]])
        return np.array([d[0], d[0], d[1]])


@dataclass(frozen=True)
class PlacedVolume:
    name: str
    solid: Solid
    material: str
    translation: tuple  # relative to parent, cm
    parent: str
    is_active: bool = False


@dataclass(frozen=True)
class SurfaceDef:
    """Closed cylinder used as a generation or recording surface."""

    name: str
    radius: float
    half_height: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.radius > 0 and self.half_height > 0):
            raise GeometryError(f"surface {self.name}: dimensions must be positive")

    @property
    def lateral_area(self):
        return 2.0 * math.pi * self.radius * 2.0 * self.half_height

    @property
    def cap_area(self):
        return math.pi * self.radius ** 2

    @property
    def area(self):
        return self.lateral_area + 2.0 * self.cap_area

    def as_array(self):
        return np.array([self.radius, self.half_height, *self.center], dtype=np.float64)


class Geo(NamedTuple):
    kind: np.ndarray     # int64 (n,)
    prm: np.ndarray      # float64 (n, 3)
    pos: np.ndarray      # float64 (n, 3) absolute centres
    parent: np.ndarray   # int64 (n,)
    mat: np.ndarray      # int64 (n,) index into GeometryModel.materials
    cstart: np.ndarray   # int64 (n+1,) children of v are cidx[cstart[v]:cstart[v+1]]
    cidx: np.ndarray     # int64
    active: int
    act_lo: np.ndarray   # active volume bounding box
    act_hi: np.ndarray
    brad: np.ndarray     # float64 (n,) bounding-sphere radius about the centre (inf for the world)


# ------------------------------------------------------------------ kernels

@njit(cache=True, inline="always", _nrt=False)
def _slab(p, d, h):
    if d == 0.0:
        if abs(p) <= h:
            return -_INF, _INF
        return _INF, -_INF
    a = (-h - p) / d
    b = (h - p) / d
    if a < b:
        return a, b
    return b, a


@njit(cache=True, inline="always", _nrt=False)
def _circle(px, py, dx, dy, r):
    a = dx * dx + dy * dy
    c = px * px + py * py - r * r
    if a == 0.0:
        if c <= 0.0:
            return -_INF, _INF
        return _INF, -_INF
    b = px * dx + py * dy
    disc = b * b - a * c
    if disc < 0.0:
        return _INF, -_INF
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    if b >= 0.0:
        q = -(b + sq)
    else:
        q = -(b - sq)
    if q == 0.0:
        return 0.0, 0.0
    t1 = q / a
    t2 = c / q
    if t1 < t2:
        return t1, t2
    return t2, t1


@njit(cache=True, _nrt=False)
def intervals(kind, prm, px, py, pz, dx, dy, dz):
    """Parameter intervals where the ray p + t d lies inside the solid (at most two)."""
    if kind == BOX:
        a0, a1 = _slab(px, dx, prm[0])
        b0, b1 = _slab(py, dy, prm[1])
        c0, c1 = _slab(pz, dz, prm[2])
        t0 = max(a0, max(b0, c0))
        t1 = min(a1, min(b1, c1))
        if t0 < t1:
            return 1, t0, t1, 0.0, 0.0
        return 0, 0.0, 0.0, 0.0, 0.0
    if kind == CYLINDER or kind == DISK:
        a0, a1 = _circle(px, py, dx, dy, prm[0])
        c0, c1 = _slab(pz, dz, prm[1])
        t0 = max(a0, c0)
        t1 = min(a1, c1)
        if t0 < t1:
            return 1, t0, t1, 0.0, 0.0
        return 0, 0.0, 0.0, 0.0, 0.0
    if kind == SHELL:
        a0, a1 = _circle(px, py, dx, dy, prm[1])
        c0, c1 = _slab(pz, dz, prm[2])
        o0 = max(a0, c0)
        o1 = min(a1, c1)
        if not o0 < o1:
            return 0, 0.0, 0.0, 0.0, 0.0
        i0, i1 = _circle(px, py, dx, dy, prm[0])
        if not i0 < i1 or i1 <= o0 or i0 >= o1:
            return 1, o0, o1, 0.0, 0.0
        n = 0
        s0 = 0.0
        s1 = 0.0
        u0 = 0.0
        u1 = 0.0
        if o0 < i0:
            s0, s1 = o0, i0
            n = 1
        if i1 < o1:
            if n == 0:
                s0, s1 = i1, o1
            else:
                u0, u1 = i1, o1
            n += 1
        return n, s0, s1, u0, u1
    return 1, -_INF, _INF, 0.0, 0.0


@njit(cache=True, inline="always", _nrt=False)
def solid_contains(kind, prm, x, y, z):
    if kind == BOX:
        return abs(x) <= prm[0] and abs(y) <= prm[1] and abs(z) <= prm[2]
    if kind == CYLINDER or kind == DISK:
        return abs(z) <= prm[1] and x * x + y * y <= prm[0] * prm[0]
    if kind == SHELL:
        r2 = x * x + y * y
        return abs(z) <= prm[2] and r2 <= prm[1] * prm[1] and r2 >= prm[0] * prm[0]
    return True


@njit(cache=True, inline="always", _nrt=False)
def contains(geo, v, p):
    return solid_contains(geo.kind[v], geo.prm[v], p[0] - geo.pos[v, 0], p[1] - geo.pos[v, 1],
                          p[2] - geo.pos[v, 2])


@njit(cache=True, inline="always", _nrt=False)
def locate_from(geo, v, p):
    """Deepest volume containing p, starting the search at volume v."""
    while v != 0 and not contains(geo, v, p):
        v = geo.parent[v]
    while True:
        found = False
        for j in range(geo.cstart[v], geo.cstart[v + 1]):
            c = geo.cidx[j]
            if contains(geo, c, p):
                v = c
                found = True
                break
        if not found:
            return v


@njit(cache=True, inline="always", _nrt=False)
def exit_distance(geo, v, p, d):
    if geo.kind[v] == WORLD:
        return _INF
    c = geo.pos[v]
    n, a0, a1, b0, b1 = intervals(geo.kind[v], geo.prm[v], p[0] - c[0], p[1] - c[1], p[2] - c[2],
                                  d[0], d[1], d[2])
    if n >= 1 and a1 > 0.0 and a0 <= _TOL:
        return a1
    if n == 2 and b1 > 0.0 and b0 <= _TOL:
        return b1
    return 0.0


@njit(cache=True, inline="always", _nrt=False)
def entry_distance(geo, v, p, d):
    c = geo.pos[v]
    px = p[0] - c[0]
    py = p[1] - c[1]
    pz = p[2] - c[2]
    # bounding-sphere rejection before the exact intervals
    r = geo.brad[v]
    b = px * d[0] + py * d[1] + pz * d[2]
    q = px * px + py * py + pz * pz - r * r
    if q > 0.0 and (b >= 0.0 or b * b < q):
        return _INF
    n, a0, a1, b0, b1 = intervals(geo.kind[v], geo.prm[v], px, py, pz, d[0], d[1], d[2])
    best = _INF
    if n >= 1 and a1 > 0.0:
        best = max(a0, 0.0)
    if n == 2 and b1 > 0.0:
        best = min(best, max(b0, 0.0))
    return best


@njit(cache=True, inline="always", _nrt=False)
def step_next(geo, v, p, d):
    """Distance to the next boundary from inside volume v and the child entered there (-1 for an exit)."""
    t = exit_distance(geo, v, p, d)
    nxt = -1
    for j in range(geo.cstart[v], geo.cstart[v + 1]):
        c = geo.cidx[j]
        tc = entry_distance(geo, c, p, d)
        if tc < t:
            t = tc
            nxt = c
    return t, nxt


@njit(cache=True, _nrt=False)
def step_distance(geo, v, p, d):
    """Distance to the next boundary (own exit or a child entry) from inside volume v."""
    return step_next(geo, v, p, d)[0]


@njit(cache=True, inline="always", _nrt=False)
def distance_to_active(geo, p):
    """Distance from p to the active volume's bounding box (a lower bound to the solid)."""
    s = 0.0
    for k in range(3):
        if p[k] < geo.act_lo[k]:
            s += (geo.act_lo[k] - p[k]) ** 2
        elif p[k] > geo.act_hi[k]:
            s += (p[k] - geo.act_hi[k]) ** 2
    return math.sqrt(s)


@njit(cache=True, _nrt=False)
def sample_solid(kind, prm, st, out):
    """Uniform point in a solid (local coordinates)."""
    if kind == BOX:
        out[0] = (2.0 * _rng.uniform(st) - 1.0) * prm[0]
        out[1] = (2.0 * _rng.uniform(st) - 1.0) * prm[1]
        out[2] = (2.0 * _rng.uniform(st) - 1.0) * prm[2]
        return
    if kind == SHELL:
        rin = prm[0]
        rout = prm[1]
        hz = prm[2]
    else:
        rin = 0.0
        rout = prm[0]
        hz = prm[1]
    r = math.sqrt(rin * rin + (rout * rout - rin * rin) * _rng.uniform(st))
    phi = 2.0 * math.pi * _rng.uniform(st)
    out[0] = r * math.cos(phi)
    out[1] = r * math.sin(phi)
    out[2] = (2.0 * _rng.uniform(st) - 1.0) * hz


@njit(cache=True, _nrt=False)
def sample_in_volume(geo, v, st, out):
    """Uniform point in volume v excluding its daughters; returns False if rejection fails."""
    for _ in range(100000):
        sample_solid(geo.kind[v], geo.prm[v], st, out)
        for k in range(3):
            out[k] += geo.pos[v, k]
        inside_child = False
        for j in range(geo.cstart[v], geo.cstart[v + 1]):
            if contains(geo, geo.cidx[j], out):
                inside_child = True
                break
        if not inside_child:
            return True
    return False


@njit(cache=True, _nrt=False)
def sample_surface(s, st, point, normal):
    """Uniform point on a closed cylinder surface ``s = [R, hz, cx, cy, cz]`` with inward normal."""
    r = s[0]
    hz = s[1]
    lat = 4.0 * math.pi * r * hz
    cap = math.pi * r * r
    u = _rng.uniform(st) * (lat + 2.0 * cap)
    phi = 2.0 * math.pi * _rng.uniform(st)
    if u < lat:
        c = math.cos(phi)
        sn = math.sin(phi)
        point[0] = r * c
        point[1] = r * sn
        point[2] = (2.0 * _rng.uniform(st) - 1.0) * hz
        normal[0] = -c
        normal[1] = -sn
        normal[2] = 0.0
    else:
        rr = r * math.sqrt(_rng.uniform(st))
        point[0] = rr * math.cos(phi)
        point[1] = rr * math.sin(phi)
        normal[0] = 0.0
        normal[1] = 0.0
        if u < lat + cap:
            point[2] = hz
            normal[2] = -1.0
        else:
            point[2] = -hz
            normal[2] = 1.0
    point[0] += s[2]
    point[1] += s[3]
    point[2] += s[4]


# ------------------------------------------------------------------- model

class GeometryModel:
    """Validated tree of placed volumes plus named surfaces."""

    def __init__(self, volumes, surfaces=(), source=None):
        self.source = source
        self.volumes = list(volumes)
        self.surfaces = {s.name: s for s in surfaces}
        names = [v.name for v in self.volumes]
        if len(set(names)) != len(names) or "world" in names:
            raise GeometryError("volume names must be unique and 'world' is reserved")
        self.index = {"world": 0}
        for i, v in enumerate(self.volumes, 1):
            self.index[v.name] = i
        active = [v.name for v in self.volumes if v.is_active]
        if len(active) != 1:
            raise GeometryError(f"exactly one active volume required, found {len(active)}")
        self.active = active[0]
        self.materials = [VACUUM]
        for v in self.volumes:
            if v.material not in self.materials:
                self.materials.append(v.material)
        self.geo = self._compile()

    @property
    def names(self):
        return ["world"] + [v.name for v in self.volumes]

    def volume(self, name):
        if name == "world":
            raise KeyError("the world is not a placed volume")
        return self.volumes[self.index[name] - 1]

    def _compile(self):
        n = len(self.volumes) + 1
        kind = np.full(n, WORLD, dtype=np.int64)
        prm = np.zeros((n, 3))
        pos = np.zeros((n, 3))
        parent = np.zeros(n, dtype=np.int64)
        mat = np.zeros(n, dtype=np.int64)
        children = [[] for _ in range(n)]
        for i, v in enumerate(self.volumes, 1):
            if v.parent not in self.index or self.index[v.parent] >= i:
                raise GeometryError(f"volume {v.name}: parent {v.parent!r} must be declared before it")
            p = self.index[v.parent]
            kind[i] = SOLIDS[v.solid.kind][0]
            prm[i, :len(v.solid.dims)] = v.solid.dims
            pos[i] = pos[p] + np.asarray(v.translation, dtype=float)
            parent[i] = p
            mat[i] = self.materials.index(v.material)
            children[p].append(i)
        cstart = np.zeros(n + 1, dtype=np.int64)
        cidx = []
        for i in range(n):
            cidx.extend(children[i])
            cstart[i + 1] = len(cidx)
        a = self.index[self.active]
        he = self.volume(self.active).solid.half_extents()
        brad = np.full(n, np.inf)
        for i, v in enumerate(self.volumes, 1):
            brad[i] = float(np.linalg.norm(v.solid.half_extents()))
        return Geo(kind, prm, pos, parent, mat, cstart, np.array(cidx, dtype=np.int64), int(a),
                   pos[a] - he, pos[a] + he, brad)

    # queries -------------------------------------------------------------
    def position(self, name):
        return self.geo.pos[self.index[name]].copy()

    def locate(self, point):
        p = np.asarray(point, dtype=float).reshape(3)
        return self.names[locate_from(self.geo, 0, p)]

    def distance_to_boundary(self, point, direction):
        """(length, next volume name) along a unit direction; (inf, None) when the ray escapes."""
        p = np.asarray(point, dtype=float).reshape(3)
        d = np.asarray(direction, dtype=float).reshape(3)
        norm = float(np.linalg.norm(d))
        if norm == 0.0 or not math.isfinite(norm):
            raise ValueError("degenerate direction")
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("direction must be unit-norm")
        v = locate_from(self.geo, 0, p)
        t = step_distance(self.geo, v, p, d)
        if not math.isfinite(t):
            return math.inf, None
        q = p + (t + EPS_PUSH) * d
        return float(t), self.names[locate_from(self.geo, v, q)]

    def mass(self, name, density):
        """Mass in kg of a volume's own material (daughters excluded)."""
        i = self.index[name]
        vol = self.volume(name).solid.volume
        for j in range(self.geo.cstart[i], self.geo.cstart[i + 1]):
            vol -= self.volumes[self.geo.cidx[j] - 1].solid.volume
        return density * vol / 1000.0

    def bounding_radius(self, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=float)
        r = 0.0
        for i, v in enumerate(self.volumes, 1):
            he = v.solid.half_extents()
            lo = self.geo.pos[i] - he - c
            hi = self.geo.pos[i] + he - c
            far = np.maximum(np.abs(lo), np.abs(hi))
            r = max(r, float(np.linalg.norm(far)))
        return r

    def sample_point_in_volume(self, name, stream):
        out = np.empty(3)
        if not sample_in_volume(self.geo, self.index[name], stream, out):
            raise GeometryError(f"volume {name} has no sampleable material outside its daughters")
        return out

    def sample_on_surface(self, surface, stream):
        s = self.surfaces[surface] if isinstance(surface, str) else surface
        return sample_on_surface(s, stream)

    # validation ----------------------------------------------------------
    def validate(self, n_samples=4000, seed=12345):
        """Sampling checks of containment and sibling overlap; returns diagnostics."""
        diags = []
        geo = self.geo
        for i, v in enumerate(self.volumes, 1):
            st = _rng.make_stream(seed, i)
            p = geo.parent[i]
            pts = _sample_solid_points(geo.kind[i], geo.prm[i], st, n_samples) + geo.pos[i]
            if p != 0:
                out = ~_contains_many(geo, p, pts)
                if out.any():
                    diags.append(f"containment: {v.name} extends outside parent {v.parent} "
                                 f"({int(out.sum())}/{n_samples} samples)")
            for j in range(geo.cstart[p], geo.cstart[p + 1]):
                s = geo.cidx[j]
                if s <= i:
                    continue
                inside = _contains_many(geo, s, pts)
                # shared faces are allowed: require interior overlap
                if inside.any():
                    shrunk = pts[inside]
                    strict = _strictly_inside_many(geo, s, shrunk, 1e-6) & _strictly_inside_many(geo, i, shrunk, 1e-6)
                    if strict.any():
                        diags.append(f"overlap: {v.name} / {self.volumes[s - 1].name}")
        for s in self.surfaces.values():
            if not (s.radius > 0 and s.half_height > 0):
                diags.append(f"surface {s.name}: non-positive dimensions")
        return diags


@njit(cache=True)
def _sample_solid_points(kind, prm, st, n):
    out = np.empty((n, 3))
    tmp = np.empty(3)
    for i in range(n):
        sample_solid(kind, prm, st, tmp)
        out[i] = tmp
    return out


@njit(cache=True)
def _contains_many(geo, v, pts):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    for i in range(pts.shape[0]):
        out[i] = contains(geo, v, pts[i])
    return out


@njit(cache=True)
def _strictly_inside_many(geo, v, pts, margin):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    prm = geo.prm[v].copy()
    k = geo.kind[v]
    if k == BOX:
        prm -= margin
    elif k == SHELL:
        prm[0] += margin
        prm[1] -= margin
        prm[2] -= margin
    else:
        prm[0] -= margin
        prm[1] -= margin
    for i in range(pts.shape[0]):
        out[i] = solid_contains(k, prm, pts[i, 0] - geo.pos[v, 0], pts[i, 1] - geo.pos[v, 1],
                                pts[i, 2] - geo.pos[v, 2])
    return out


def sample_on_surface(surface, stream):
    """(point, inward normal) uniform per unit area on a closed cylinder."""
    point = np.empty(3)
    normal = np.empty(3)
    sample_surface(surface.as_array(), stream, point, normal)
    return point, normal


def sample_point_in_volume(model, name, stream):
    return model.sample_point_in_volume(name, stream)


def locate(model, point):
    return model.locate(point)


def distance_to_boundary(model, point, direction):
    return model.distance_to_boundary(point, direction)


# ---------------------------------------------------------------- file I/O

def parse_geometry(text, source=None):
    volumes = []
    surfaces = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        where = f"{source or '<geometry>'}:{lineno}"
        try:
            if toks[0] == "volume":
                name, solid = toks[1], toks[2]
                if solid not in SOLIDS:
                    raise GeometryError(f"unknown solid {solid!r}")
                nd = SOLIDS[solid][1]
                rest = toks[3:]
                active = False
                if rest and rest[-1] == "active":
                    active = True
                    rest = rest[:-1]
                if len(rest) != nd + 5:
                    raise GeometryError(f"volume {name}: expected {nd} dimensions, material, parent, x y z")
                dims = tuple(float(x) * MM for x in rest[:nd])
                material, parent = rest[nd], rest[nd + 1]
                offset = tuple(float(x) * MM for x in rest[nd + 2:])
                volumes.append(PlacedVolume(name, Solid(solid, dims), material, offset, parent, active))
            elif toks[0] == "surface":
                if len(toks) != 7:
                    raise GeometryError("surface: expected name r hz x y z")
                vals = [float(x) * MM for x in toks[2:]]
                surfaces.append(SurfaceDef(toks[1], vals[0], vals[1], tuple(vals[2:])))
            else:
                raise GeometryError(f"unknown record {toks[0]!r}")
        except (GeometryError, ValueError, IndexError) as exc:
            raise GeometryError(f"{where}: {exc}") from None
    if not volumes:
        raise GeometryError(f"{source or '<geometry>'}: no volumes defined")
    return GeometryModel(volumes, surfaces, source=source)


def load_geometry(path):
    path = Path(path)
    return parse_geometry(path.read_text(encoding="utf-8"), source=str(path))


def serialize_geometry(model):
    lines = []
    for v in model.volumes:
        dims = " ".join(_mm(d) for d in v.solid.dims)
        off = " ".join(_mm(x) for x in v.translation)
        tail = " active" if v.is_active else ""
        lines.append(f"volume {v.name} {v.solid.kind} {dims} {v.material} {v.parent} {off}{tail}")
    for s in model.surfaces.values():
        lines.append(f"surface {s.name} {_mm(s.radius)} {_mm(s.half_height)} " + " ".join(_mm(x) for x in s.center))
    return "\n".join(lines) + "\n"


def _mm(x):
    v = round(x / MM, 9)
    return str(int(v)) if v == int(v) else repr(v)


@njit(cache=True, _nrt=False)
def rotate(d, cost, phi):
    """Rotate unit vector d in place to polar angle acos(cost) about its old value, azimuth phi."""
    sint = math.sqrt(max(0.0, 1.0 - cost * cost))
    cp = math.cos(phi)
    sp = math.sin(phi)
    dx, dy, dz = d[0], d[1], d[2]
    perp = 1.0 - dz * dz
    if perp < 1e-16:
        s = 1.0 if dz > 0.0 else -1.0
        d[0] = sint * cp
        d[1] = sint * sp
        d[2] = s * cost
        return
    tmp = math.sqrt(perp)
    nx = dx * cost + sint * (dx * dz * cp - dy * sp) / tmp
    ny = dy * cost + sint * (dy * dz * cp + dx * sp) / tmp
    nz = dz * cost - sint * cp * tmp
    inv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
    d[0] = nx * inv
    d[1] = ny * inv
    d[2] = nz * inv
