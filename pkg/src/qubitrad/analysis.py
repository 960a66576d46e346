"""Tallies to physical rates: equivalent time, uncertainties, tables, spectra.

Rates are in mHz.  A source normalized by flux represents ``N_gen / (A * flux)``
seconds of exposure; one normalized by activity represents
``N_gen / (activity * mass)`` seconds (activity in Bq/kg, mass in kg).

Zero observed hits are reported with rate 0 and the simple Poisson 90% upper
bound ``ln(10) / t_eq`` (about 2.303 / t_eq): the mean for which observing no
event has 10% probability.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

POISSON90_ZERO = math.log(10.0)
LIMIT_SHARE_FOR_VALUE = 0.10


class UndefinedTimeError(ValueError):
    """Zero flux or activity: the equivalent time is not defined."""


@dataclass(frozen=True)
class NormalizationSpec:
    """How many seconds of exposure a simulated sample represents."""

    kind: str                   # "flux" or "activity"
    n_gen: int
    area: float = 0.0           # cm2
    flux: float = 0.0           # 1/cm2/s
    flux_sigma: float = 0.0     # systematic, same units as flux
    flux_stat: float = 0.0      # statistical part of the flux (two-step replay)
    mass: float = 0.0           # kg
    activity: object = None     # core_data.ActivityEntry, mBq/kg

    def __post_init__(self):
        if self.kind not in ("flux", "activity"):
            raise ValueError(f"unknown normalization kind {self.kind!r}")
        if self.n_gen < 0:
            raise ValueError("N_gen must be non-negative")
        if self.kind == "flux" and not self.area > 0:
            raise ValueError("normalization area must be positive")
        if self.kind == "activity":
            if not self.mass > 0:
                raise ValueError("normalization mass must be positive")
            if self.activity is None:
                raise ValueError("activity normalization needs an activity entry")

    @classmethod
    def from_flux(cls, n_gen, area, flux, flux_sigma=0.0, flux_stat=0.0):
        return cls("flux", int(n_gen), area=float(area), flux=float(flux),
                   flux_sigma=float(flux_sigma), flux_stat=float(flux_stat))

    @classmethod
    def from_activity(cls, n_gen, mass, activity):
        return cls("activity", int(n_gen), mass=float(mass), activity=activity)

    @property
    def is_limit(self):
        return self.kind == "activity" and self.activity.is_limit

    @property
    def relative_syst(self):
        if self.kind == "flux":
            return self.flux_sigma / self.flux if self.flux > 0 else 0.0
        if self.activity.is_limit:
            return 0.0
        return self.activity.sigma / self.activity.value

    @property
    def relative_stat(self):
        if self.kind == "flux" and self.flux > 0:
            return self.flux_stat / self.flux
        return 0.0

    def with_n_gen(self, n_gen):
        return replace(self, n_gen=int(n_gen))


def equivalent_time(norm):
    """Seconds of real exposure represented by ``norm.n_gen`` primaries."""
    if norm.n_gen == 0:
        return 0.0
    if norm.kind == "flux":
        if not norm.flux > 0:
            raise UndefinedTimeError("zero flux: equivalent time undefined")
        return norm.n_gen / (norm.area * norm.flux)
    a = norm.activity.value / 1000.0  # Bq/kg
    return norm.n_gen / (a * norm.mass)


@dataclass(frozen=True)
class RateResult:
    """Rate in mHz, or an interval [lo, hi] when built from an activity upper limit."""

    label: str
    rate: float | None
    stat: float = 0.0
    syst: float = 0.0
    lo: float | None = None
    hi: float | None = None
    upper90: float | None = None
    hits: int = 0
    n_gen: int = 0
    t_eq: float = 0.0
    undefined: bool = False

    def __post_init__(self):
        if self.rate is not None and self.rate < 0:
            raise ValueError("rate must be non-negative")
        if self.lo is not None and self.hi is not None and self.lo > self.hi:
            raise ValueError("interval must satisfy lo <= hi")

    @property
    def is_interval(self):
        return self.rate is None and not self.undefined

    @property
    def central(self):
        """Sort key: the central value, or the upper end of an interval."""
        if self.undefined:
            return -1.0
        return self.hi if self.rate is None else self.rate

    def render(self, digits=3):
        if self.undefined:
            return "undefined"
        if self.rate is None:
            if self.lo == 0:
                return f"<{_g(self.hi, digits)}"
            return f"[{_g(self.lo, digits)} – {_g(self.hi, digits)}]"
        if self.hits == 0 and self.upper90 is not None:
            return f"0 (<{_g(self.upper90, digits)})"
        err = math.hypot(self.stat, self.syst)
        return f"{_g(self.rate, digits)} ± {_g(err, 2)}"

    def as_dict(self):
        return {
            "label": self.label, "rate_mHz": self.rate, "stat_mHz": self.stat, "syst_mHz": self.syst,
            "lo_mHz": self.lo, "hi_mHz": self.hi, "upper90_mHz": self.upper90,
            "hits": self.hits, "n_gen": self.n_gen, "t_eq_s": self.t_eq, "undefined": self.undefined,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["label"], d["rate_mHz"], d["stat_mHz"], d["syst_mHz"], d["lo_mHz"], d["hi_mHz"],
                   d["upper90_mHz"], d["hits"], d["n_gen"], d["t_eq_s"], d.get("undefined", False))


def _g(x, digits):
    return f"{x:.{digits}g}"


def rate_from_tally(tally, norm, label=""):
    """Normalize a tally's hit count to a rate in mHz."""
    if tally.n_gen != norm.n_gen:
        raise ValueError(f"tally N_gen {tally.n_gen} does not match normalization N_gen {norm.n_gen}")
    t = equivalent_time(norm)
    hits = int(tally.n_hits)
    if t == 0.0:
        return RateResult(label, None, hits=hits, n_gen=norm.n_gen, undefined=True)
    if norm.is_limit:
        hi = (hits if hits > 0 else POISSON90_ZERO) / t * 1000.0
        return RateResult(label, None, lo=0.0, hi=hi, hits=hits, n_gen=norm.n_gen, t_eq=t)
    rate = hits / t * 1000.0
    if hits == 0:
        return RateResult(label, 0.0, 0.0, 0.0, upper90=POISSON90_ZERO / t * 1000.0,
                          hits=0, n_gen=norm.n_gen, t_eq=t)
    stat = rate * math.sqrt(1.0 / hits + norm.relative_stat ** 2)
    syst = rate * norm.relative_syst
    return RateResult(label, rate, stat, syst, hits=hits, n_gen=norm.n_gen, t_eq=t)


def combine_results(label, results):
    """Sum of several rates (e.g. all isotopes of one component).

    Measured parts add with uncertainties in quadrature.  Limit parts add to the
    upper end only: the result is [sum measured, sum measured + sum limits],
    reported as a plain value when the limits are below 10% of the measured sum.
    """
    measured = [r for r in results if r.rate is not None and not r.undefined]
    limits = [r for r in results if r.is_interval]
    rate = sum(r.rate for r in measured)
    stat = math.sqrt(sum(r.stat ** 2 for r in measured))
    syst = math.sqrt(sum(r.syst ** 2 for r in measured))
    lim = sum(r.hi for r in limits)
    hits = sum(r.hits for r in results)
    n_gen = sum(r.n_gen for r in results)
    t_eq = max((r.t_eq for r in results), default=0.0)
    if not limits or (rate > 0 and lim < LIMIT_SHARE_FOR_VALUE * rate):
        up = None
        if rate == 0:
            ups = [r.upper90 for r in measured if r.upper90 is not None]
            up = max(ups) if ups else None
        return RateResult(label, rate, stat, syst, lo=rate if limits else None,
                          hi=rate + lim if limits else None, upper90=up, hits=hits, n_gen=n_gen, t_eq=t_eq)
    return RateResult(label, None, lo=rate, hi=rate + lim, hits=hits, n_gen=n_gen, t_eq=t_eq)


def suppression_factor(rate_a, rate_b, include_syst=False):
    """Ratio a/b with relative uncertainties added in quadrature."""
    a, sa = _value_sigma(rate_a, include_syst)
    b, sb = _value_sigma(rate_b, include_syst)
    if b == 0:
        raise ZeroDivisionError("suppression factor undefined: reference rate is zero")
    r = a / b
    rel = 0.0
    if a > 0:
        rel += (sa / a) ** 2
    rel += (sb / b) ** 2
    return r, abs(r) * math.sqrt(rel)


def _value_sigma(x, include_syst):
    if isinstance(x, RateResult):
        if x.rate is None:
            raise ValueError(f"{x.label}: suppression factor needs a central value, not an interval")
        s = math.hypot(x.stat, x.syst) if include_syst else x.stat
        return x.rate, s
    if isinstance(x, tuple):
        return float(x[0]), float(x[1])
    return float(x), 0.0


def probability_in_window(rate_mhz, window_s=1.0):
    """Probability of at least one event in a window, 1 - exp(-R t)."""
    return 1.0 - math.exp(-rate_mhz / 1000.0 * window_s)


# ---------------------------------------------------------------- tables

RATE_COLUMNS = ["source", "kind", "rate_mHz", "stat_mHz", "syst_mHz", "lo_mHz", "hi_mHz",
                "upper90_mHz", "hits", "n_gen", "t_eq_s", "display"]


@dataclass
class RateTable:
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RATE_COLUMNS)
        for r in self.rows:
            kind = "undefined" if r.undefined else ("interval" if r.rate is None else "value")
            w.writerow([r.label, kind, _num(r.rate), _num(r.stat), _num(r.syst), _num(r.lo), _num(r.hi),
                        _num(r.upper90), r.hits, r.n_gen, _num(r.t_eq), r.render()])
        return buf.getvalue()

    def to_text(self):
        head = ["Source", "Rate [mHz]", "Hits", "N_gen", "t_eq [s]"]
        body = [[r.label, r.render(), str(r.hits), str(r.n_gen), f"{r.t_eq:.4g}"] for r in self.rows]
        widths = [max(len(x) for x in col) for col in zip(head, *body)] if body else [len(h) for h in head]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        out = [line(head), line(["-" * w for w in widths])] + [line(b) for b in body]
        return "\n".join(out) + "\n"


def _num(x):
    if x is None:
        return ""
    return repr(float(x))


def build_rate_table(results):
    """Rows sorted by descending central rate (intervals by their upper end)."""
    rows = sorted(results, key=lambda r: (-r.central, r.label))
    return RateTable(rows)


# -------------------------------------------------------------- spectra

DEFAULT_EDGES = np.arange(0.0, 3000.0 + 1e-9, 10.0)


@dataclass(frozen=True)
class SpectrumResult:
    """Rate density (mHz/keV) per deposited-energy bin, plus an overflow rate (mHz)."""

    label: str
    edges: np.ndarray
    density: np.ndarray
    sigma: np.ndarray
    overflow: float = 0.0
    overflow_sigma: float = 0.0
    syst_rel: float = 0.0

    @property
    def widths(self):
        return np.diff(self.edges)

    def integral(self):
        return float(np.sum(self.density * self.widths) + self.overflow)

    def _check(self, other):
        if self.edges.shape != other.edges.shape or not np.array_equal(self.edges, other.edges):
            raise ValueError("incompatible binnings")

    def __add__(self, other):
        self._check(other)
        return SpectrumResult(f"{self.label}+{other.label}", self.edges, self.density + other.density,
                              np.hypot(self.sigma, other.sigma), self.overflow + other.overflow,
                              math.hypot(self.overflow_sigma, other.overflow_sigma))

    def __sub__(self, other):
        self._check(other)
        return SpectrumResult(f"{self.label}-{other.label}", self.edges, self.density - other.density,
                              np.hypot(self.sigma, other.sigma), self.overflow - other.overflow,
                              math.hypot(self.overflow_sigma, other.overflow_sigma))

    def to_csv(self):
        lines = ["lo_keV,hi_keV,rate_density_mHz_per_keV,stat_mHz_per_keV,syst_mHz_per_keV"]
        for lo, hi, d, s in zip(self.edges[:-1], self.edges[1:], self.density, self.sigma):
            lines.append(f"{lo!r},{hi!r},{float(d)!r},{float(s)!r},{float(d * self.syst_rel)!r}")
        lines.append(f"{self.edges[-1]!r},inf,{self.overflow!r},{self.overflow_sigma!r},"
                     f"{self.overflow * self.syst_rel!r}")
        return "\n".join(lines) + "\n"


def sum_spectra(spectra, label="total"):
    spectra = list(spectra)
    if not spectra:
        raise ValueError("no spectra to sum")
    out = spectra[0]
    for s in spectra[1:]:
        out = out + s
    return replace(out, label=label)


def build_spectrum(tally, norm, binning=None, label=""):
    """Deposited-energy spectrum in mHz/keV from a tally.

    ``binning`` may coarsen the tally's bins as long as every requested edge is
    one of the tally's edges.  Limit activities are drawn at their upper bound.
    """
    edges = np.asarray(tally.edges, dtype=float)
    counts = np.asarray(tally.counts, dtype=np.int64)
    if binning is not None:
        new = np.asarray(binning, dtype=float)
        idx = np.searchsorted(edges, new)
        if np.any(idx >= len(edges)) or not np.allclose(edges[np.minimum(idx, len(edges) - 1)], new):
            raise ValueError("incompatible binnings: requested edges are not tally edges")
        core = counts[:-1]
        c = np.array([core[idx[k]:idx[k + 1]].sum() for k in range(len(new) - 1)], dtype=np.int64)
        over = core[idx[-1]:].sum() + counts[-1] + core[: idx[0]].sum()
        edges, counts = new, np.concatenate([c, [over]])
    t = equivalent_time(norm)
    if t == 0.0:
        raise UndefinedTimeError("equivalent time is zero: spectrum undefined")
    w = np.diff(edges)
    scale = 1000.0 / t
    dens = counts[:-1] * scale / w
    sig = np.sqrt(counts[:-1]) * scale / w
    return SpectrumResult(label, edges, dens, sig, float(counts[-1] * scale),
                          float(math.sqrt(counts[-1]) * scale), norm.relative_syst)
