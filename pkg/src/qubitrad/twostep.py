"""Two-pass variance reduction for photon fluxes.

Pass one generates photons on the outer surface S1 and records every inward
crossing of the inner surface S2 (energy, polar angle).  Pass two regenerates
photons on S2 from the recorded histograms and terminates them when they
leave S2 again.  With ``t1 = n1 / (A1 * flux1)`` the exposure of pass one, the
photon flux entering S2 is ``flux2 = n_cross / (A2 * t1)`` and pass two
represents ``t_eq = n2 / (A2 * flux2)`` seconds.

By default energy and angle are resampled from their marginals; ``mode="joint"``
uses the 2-D (energy, angle) histogram instead.  The polar angle is measured
from +z, so a photon moving up has theta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from .analysis import DEFAULT_EDGES, NormalizationSpec, equivalent_time
from .geometry import SurfaceDef
from .sources import RecordedReplay, SurfaceFlux, compile_source
from .transport import DEFAULT_THRESHOLD, RunOutput, Tally, run_events

THETA_BINS = 180


class StarvationError(RuntimeError):
    """No crossings recorded on S2."""


@dataclass(frozen=True)
class CrossingBinning:
    energy_edges: np.ndarray
    theta_edges: np.ndarray = field(default_factory=lambda: np.linspace(0.0, math.pi, THETA_BINS + 1))


@dataclass
class CrossingDistributions:
    energy_edges: np.ndarray
    energy_counts: np.ndarray
    theta_edges: np.ndarray
    theta_counts: np.ndarray
    joint_counts: np.ndarray
    n_crossings: int
    n_gen1: int
    area1: float
    flux1: float
    flux1_sigma: float
    surface: SurfaceDef

    def __post_init__(self):
        if int(self.energy_counts.sum()) != self.n_crossings or int(self.theta_counts.sum()) != self.n_crossings:
            raise ValueError("histogram totals must equal the number of crossings")
        if np.any(self.energy_counts < 0) or np.any(self.theta_counts < 0):
            raise ValueError("histogram counts must be non-negative")

    @property
    def area2(self):
        return self.surface.area

    def scaled_flux(self, k):
        """Same crossings with the first-pass flux multiplied by k."""
        return CrossingDistributions(self.energy_edges, self.energy_counts, self.theta_edges, self.theta_counts,
                                     self.joint_counts, self.n_crossings, self.n_gen1, self.area1,
                                     self.flux1 * k, self.flux1_sigma * k, self.surface)

    def to_text(self):
        s = self.surface
        f = lambda a: " ".join(repr(float(x)) for x in a)
        i = lambda a: " ".join(str(int(x)) for x in np.ravel(a))
        lines = [
            "# photon crossings of the inner surface recorded in the first pass",
            "# units: keV, radians, cm, 1/cm2/s",
            f"n_gen1 {self.n_gen1}",
            f"area1 {self.area1!r}",
            f"flux1 {self.flux1!r}",
            f"flux1_sigma {self.flux1_sigma!r}",
            f"n_crossings {self.n_crossings}",
            f"surface {s.name} {s.radius!r} {s.half_height!r} " + " ".join(repr(float(c)) for c in s.center),
            f"energy_edges {f(self.energy_edges)}",
            f"energy_counts {i(self.energy_counts)}",
            f"theta_edges {f(self.theta_edges)}",
            f"theta_counts {i(self.theta_counts)}",
            f"joint_shape {self.joint_counts.shape[0]} {self.joint_counts.shape[1]}",
            f"joint_counts {i(self.joint_counts)}",
        ]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")


def parse_distributions(text):
    kv = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            key, _, rest = line.partition(" ")
            kv[key] = rest.split()
    try:
        surf = kv["surface"]
        shape = tuple(int(x) for x in kv["joint_shape"])
        joint = np.array(kv["joint_counts"], dtype=np.int64).reshape(shape)
        return CrossingDistributions(
            energy_edges=np.array(kv["energy_edges"], dtype=float),
            energy_counts=np.array(kv["energy_counts"], dtype=np.int64),
            theta_edges=np.array(kv["theta_edges"], dtype=float),
            theta_counts=np.array(kv["theta_counts"], dtype=np.int64),
            joint_counts=joint,
            n_crossings=int(kv["n_crossings"][0]),
            n_gen1=int(kv["n_gen1"][0]),
            area1=float(kv["area1"][0]),
            flux1=float(kv["flux1"][0]),
            flux1_sigma=float(kv["flux1_sigma"][0]),
            surface=SurfaceDef(surf[0], float(surf[1]), float(surf[2]), tuple(float(x) for x in surf[3:6])),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"malformed crossing distributions: {exc}") from None


def load_distributions(path):
    return parse_distributions(Path(path).read_text(encoding="utf-8"))


def _as_array(records):
    if isinstance(records, np.ndarray):
        return records.reshape(-1, 2).astype(float)
    return np.array([[r.energy, r.theta] for r in records], dtype=float).reshape(-1, 2)


def build_crossing_distributions(records, config=None, *, n_gen, area1, flux1, flux1_sigma=0.0, surface):
    """Histogram recorded (energy, theta) pairs; raises StarvationError when there are none."""
    rec = _as_array(records)
    if rec.shape[0] == 0:
        raise StarvationError("S2 starved; increase first-pass statistics")
    if config is None:
        top = max(10.0, float(np.ceil(rec[:, 0].max() / 10.0) * 10.0 + 10.0))
        config = CrossingBinning(np.arange(0.0, top + 1e-9, 10.0))
    ee = np.asarray(config.energy_edges, dtype=float)
    te = np.asarray(config.theta_edges, dtype=float)
    if rec[:, 0].min() < ee[0] or rec[:, 0].max() > ee[-1]:
        raise ValueError("crossing energies outside the energy binning")
    joint, _, _ = np.histogram2d(rec[:, 0], rec[:, 1], bins=[ee, te])
    joint = joint.astype(np.int64)
    return CrossingDistributions(ee, joint.sum(axis=1), te, joint.sum(axis=0), joint, int(rec.shape[0]),
                                 int(n_gen), float(area1), float(flux1), float(flux1_sigma), surface)


@dataclass(frozen=True)
class Flux2:
    value: float
    sigma: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("flux2 must be non-negative")


def compute_flux2(dist):
    """Photon flux entering S2 (1/cm2/s) with its Poisson uncertainty."""
    n = dist.n_crossings
    if n == 0:
        return Flux2(0.0, 0.0)
    t1 = dist.n_gen1 / (dist.area1 * dist.flux1)
    a2 = dist.area2
    return Flux2(n / (a2 * t1), math.sqrt(n) / (a2 * t1))


def replay_spec(dist, flux2=None, mode="marginal", position_law="projected"):
    flux2 = flux2 or compute_flux2(dist)
    rel = dist.flux1_sigma / dist.flux1 if dist.flux1 > 0 else 0.0
    return RecordedReplay(dist.surface, dist.energy_edges, dist.energy_counts, dist.theta_edges,
                          dist.theta_counts, flux2.value, flux2.sigma, rel,
                          joint_counts=dist.joint_counts if mode == "joint" else None,
                          mode=mode, position_law=position_law)


@dataclass
class TwoStepResult:
    tally: Tally
    t_eq: float
    flux2: Flux2
    distributions: CrossingDistributions
    normalization: NormalizationSpec
    pass1: RunOutput | None
    pass2: RunOutput | None
    undefined: bool = False


def run_replay(dist, model, phys, n2, seed, label, workers=1, mode="marginal", position_law="projected",
               threshold=DEFAULT_THRESHOLD, edges=DEFAULT_EDGES):
    """Second pass only, from stored distributions."""
    flux2 = compute_flux2(dist)
    if n2 == 0:
        tally = Tally.empty(0, edges, threshold)
        norm = NormalizationSpec.from_flux(0, dist.area2, flux2.value)
        return TwoStepResult(tally, 0.0, flux2, dist, norm, None, None, undefined=True)
    spec = replay_spec(dist, flux2, mode, position_law)
    src = compile_source(spec, model)
    out = run_events(src, model.geo, phys, n2, seed, _rng.source_id(label + "/pass2"), workers,
                     dist.surface, 2, threshold, edges)
    norm = spec.normalization(n2)
    t_eq = equivalent_time(norm) if flux2.value > 0 else 0.0
    return TwoStepResult(out.tally, t_eq, flux2, dist, norm, None, out, undefined=t_eq == 0.0)


def run_two_step(model, phys, source, surface, n1, n2, seed, label, workers=1, mode="marginal",
                 position_law="projected", threshold=DEFAULT_THRESHOLD, edges=DEFAULT_EDGES, binning=None):
    """Pass one from ``source`` (a SurfaceFlux) recording ``surface`` crossings, then the replay."""
    if not isinstance(source, SurfaceFlux):
        raise TypeError("the two-step scheme needs a surface-flux source")
    src = compile_source(source, model)
    out1 = run_events(src, model.geo, phys, n1, seed, _rng.source_id(label + "/pass1"), workers,
                      surface, 1, threshold, edges)
    if binning is None:
        binning = CrossingBinning(np.concatenate([[0.0], source.spectrum.edges[source.spectrum.edges > 0]])
                                  if source.spectrum.edges[0] > 0 else source.spectrum.edges)
    dist = build_crossing_distributions(out1.crossings, binning, n_gen=n1, area1=source.surface.area,
                                        flux1=source.flux, flux1_sigma=source.flux_sigma, surface=surface)
    res = run_replay(dist, model, phys, n2, seed, label, workers, mode, position_law, threshold, edges)
    res.pass1 = out1
    return res
