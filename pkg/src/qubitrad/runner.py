"""Run orchestration: execute every source of a scenario and write the reports.

Output directory contents:

- ``rates.csv`` / ``rates.txt``: one row per source, sorted by descending rate
- ``components.csv`` / ``components.txt``: per-component sums (bulk sources only)
- ``spectrum_<source>.csv`` and ``spectrum_total.csv``: deposited-energy spectra in mHz/keV
- ``crossings_<source>.txt``: recorded S2 distributions of each two-step source
- ``summary.json``: scenario, seed, N_gen and every rate; byte-identical for a given (scenario, seed)
- ``manifest.json``: scenario hash, code version, generator, wall times
- ``events_<source>.txt``: index and chip deposit of every depositing event (with ``event_log``)
"""

from __future__ import annotations

import json
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import core_data
from .analysis import (RateResult, UndefinedTimeError, build_rate_table, build_spectrum, combine_results,
                       rate_from_tally, sum_spectra)
from .geometry import load_geometry
from .rng import GENERATOR_ID
from .scenario import build_sources, load_scenario, scenario_hash
from .transport import build_physics, run_source
from .twostep import CrossingBinning, load_distributions, run_replay, run_two_step


def safe_name(label):
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label)


@dataclass
class SourceOutcome:
    label: str
    kind: str
    result: RateResult
    tally: object
    norm: object
    hit_events: np.ndarray
    hit_deposits: np.ndarray
    wall_time: float
    component: str | None = None
    isotope: str | None = None
    two_step: dict | None = None
    distributions: object = None


def _log(msg, quiet):
    if not quiet:
        print(msg, file=sys.stderr, flush=True)


def _run_planned(p, sc, model, phys, seed, workers):
    t0 = time.perf_counter()
    if p.two_step:
        ts = p.two_step
        surf = model.surfaces[ts["surface"]]
        binning = None
        if "theta_bins" in ts:
            edges = p.spec.spectrum.edges
            binning = CrossingBinning(np.concatenate([[0.0], edges[edges > 0]]),
                                      np.linspace(0.0, np.pi, int(ts["theta_bins"]) + 1))
        res = run_two_step(model, phys, p.spec, surf, ts["n1"], ts["n2"], seed, p.label, workers,
                           ts["mode"], ts["position_law"], sc.threshold, sc.edges, binning)
        info = {"n1": ts["n1"], "n2": ts["n2"], "surface": surf.name, "n_crossings": res.distributions.n_crossings,
                "flux2": res.flux2.value, "flux2_sigma": res.flux2.sigma, "mode": ts["mode"],
                "position_law": ts["position_law"], "pass1_hits": int(res.pass1.tally.n_hits)}
        if res.undefined:
            result = RateResult(p.label, None, n_gen=ts["n2"], undefined=True)
        else:
            result = rate_from_tally(res.tally, res.normalization, p.label)
        ev = res.pass2.hit_events if res.pass2 else np.zeros(0, np.int64)
        dep = res.pass2.hit_deposits if res.pass2 else np.zeros(0)
        return SourceOutcome(p.label, p.kind, result, res.tally, res.normalization, ev, dep,
                             time.perf_counter() - t0, two_step=info, distributions=res.distributions)
    out = run_source(p.spec, model, phys, p.n_gen, seed, p.label, workers, threshold=sc.threshold, edges=sc.edges)
    norm = p.spec.normalization(p.n_gen)
    result = rate_from_tally(out.tally, norm, p.label)
    return SourceOutcome(p.label, p.kind, result, out.tally, norm, out.hit_events, out.hit_deposits,
                         time.perf_counter() - t0, p.component, p.isotope)


def _spectrum(o):
    if o.result.undefined:
        return None
    try:
        return build_spectrum(o.tally, o.norm, label=o.label)
    except UndefinedTimeError:
        return None


def _source_entry(o):
    d = {"label": o.label, "type": o.kind, "n_gen": int(o.result.n_gen), "hits": int(o.result.hits),
         "t_eq_s": o.result.t_eq, "display": o.result.render(), "result": o.result.as_dict()}
    if o.component:
        d["component"] = o.component
        d["isotope"] = o.isotope
    if o.two_step:
        d["two_step"] = o.two_step
    return d


def component_results(outcomes):
    groups = {}
    for o in outcomes:
        if o.component:
            groups.setdefault(o.component, []).append(o.result)
    return [combine_results(cid, rs) for cid, rs in groups.items()]


def run_scenario(path_or_sc, *, seed=None, workers=None, events=None, out=None, event_log=False, quiet=False,
                 write=True):
    """Run every source of a scenario; returns the summary dictionary."""
    sc = path_or_sc if not isinstance(path_or_sc, (str, Path)) else load_scenario(path_or_sc)
    seed = sc.seed if seed is None else int(seed)
    workers = sc.workers if workers is None else int(workers)
    t0 = time.perf_counter()
    model = load_geometry(sc.geometry_path)
    library = core_data.load_library(sc.data_dir)
    opts = sc.options
    phys = build_physics(library, model.materials, float(opts.get("photon_cutoff_keV", 10.0)),
                         float(opts.get("neutron_cutoff_keV", 1.0)),
                         transparent_muons=bool(opts.get("transparent_muons", False)))
    planned = build_sources(sc, model, library, events=events)
    outcomes = []
    for p in planned:
        _log(f"[{sc.name}] {p.label}: {p.n_gen} events", quiet)
        o = _run_planned(p, sc, model, phys, seed, workers)
        _log(f"[{sc.name}] {p.label}: {o.result.render()} mHz ({o.result.hits} hits, {o.wall_time:.1f} s)", quiet)
        outcomes.append(o)
    comps = component_results(outcomes)
    summary = make_summary(sc, seed, outcomes, comps)
    if write:
        write_outputs(sc.output_dir(out), sc, seed, workers, outcomes, comps, summary,
                      time.perf_counter() - t0, event_log)
    return summary


def make_summary(sc, seed, outcomes, comps):
    results = [o.result for o in outcomes]
    return {
        "scenario": sc.name,
        "scenario_hash": scenario_hash(sc),
        "seed": seed,
        "generator": GENERATOR_ID,
        "threshold_keV": sc.threshold,
        "binning_keV": [float(sc.edges[0]), float(sc.edges[-1]), float(sc.edges[1] - sc.edges[0])],
        "sources": [_source_entry(o) for o in outcomes],
        "components": [{"label": r.label, "display": r.render(), "result": r.as_dict()} for r in comps],
        "total": combine_results("total", results).as_dict(),
    }


def dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_outputs(out, sc, seed, workers, outcomes, comps, summary, wall, event_log=False):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = build_rate_table([o.result for o in outcomes])
    (out / "rates.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "rates.txt").write_text(table.to_text(), encoding="utf-8")
    if comps:
        ct = build_rate_table(comps)
        (out / "components.csv").write_text(ct.to_csv(), encoding="utf-8")
        (out / "components.txt").write_text(ct.to_text(), encoding="utf-8")
    spectra = []
    for o in outcomes:
        s = _spectrum(o)
        if s is not None:
            spectra.append(s)
            (out / f"spectrum_{safe_name(o.label)}.csv").write_text(s.to_csv(), encoding="utf-8")
        if o.distributions is not None:
            o.distributions.save(out / f"crossings_{safe_name(o.label)}.txt")
        if event_log:
            lines = [f"{int(i)} {float(e)!r}" for i, e in zip(o.hit_events, o.hit_deposits)]
            (out / f"events_{safe_name(o.label)}.txt").write_text(
                "# event deposit_keV\n" + "".join(x + "\n" for x in lines), encoding="utf-8")
    if spectra:
        (out / "spectrum_total.csv").write_text(sum_spectra(spectra).to_csv(), encoding="utf-8")
    (out / "summary.json").write_text(dump_json(summary), encoding="utf-8")
    manifest = {
        "scenario": sc.name, "scenario_hash": summary["scenario_hash"], "code_version": __version__,
        "generator": GENERATOR_ID, "seed": seed, "workers": workers, "wall_time_s": round(wall, 3),
        "sources": [{"label": o.label, "n_gen": int(o.result.n_gen), "hits": int(o.result.hits),
                     "t_eq_s": o.result.t_eq, "wall_time_s": round(o.wall_time, 3)} for o in outcomes],
    }
    (out / "manifest.json").write_text(dump_json(manifest), encoding="utf-8")
    return out


def replay_from_file(crossings_path, path_or_sc, *, label="gamma", events, seed=None, workers=None, out=None,
                     mode="marginal", position_law="projected", quiet=False, write=True):
    """Second pass only, from a stored crossings file, on the scenario's geometry."""
    sc = path_or_sc if not isinstance(path_or_sc, (str, Path)) else load_scenario(path_or_sc)
    seed = sc.seed if seed is None else int(seed)
    workers = sc.workers if workers is None else int(workers)
    t0 = time.perf_counter()
    dist = load_distributions(crossings_path)
    model = load_geometry(sc.geometry_path)
    library = core_data.load_library(sc.data_dir)
    phys = build_physics(library, model.materials)
    res = run_replay(dist, model, phys, int(events), seed, label, workers, mode, position_law, sc.threshold, sc.edges)
    if res.undefined:
        result = RateResult(label, None, n_gen=int(events), undefined=True)
    else:
        result = rate_from_tally(res.tally, res.normalization, label)
    info = {"n2": int(events), "surface": dist.surface.name, "n_crossings": dist.n_crossings,
            "flux2": res.flux2.value, "flux2_sigma": res.flux2.sigma, "mode": mode, "position_law": position_law}
    ev = res.pass2.hit_events if res.pass2 else np.zeros(0, np.int64)
    dep = res.pass2.hit_deposits if res.pass2 else np.zeros(0)
    o = SourceOutcome(label, "two_step_replay", result, res.tally, res.normalization, ev, dep,
                      time.perf_counter() - t0, two_step=info)
    _log(f"[replay] {label}: {result.render()} mHz ({result.hits} hits)", quiet)
    summary = make_summary(sc, seed, [o], [])
    if write:
        write_outputs(sc.output_dir(out), sc, seed, workers, [o], [], summary, time.perf_counter() - t0)
    return summary


# ----------------------------------------------------------------- reports

def load_summary(path):
    p = Path(path)
    if p.is_dir():
        p = p / "summary.json"
    return json.loads(p.read_text(encoding="utf-8"))


def summary_results(summary, key="sources"):
    return [RateResult.from_dict(e["result"]) for e in summary.get(key, [])]


def report_text(summary):
    parts = [f"Scenario {summary['scenario']} (seed {summary['seed']}, hash {summary['scenario_hash'][:12]})", "",
             build_rate_table(summary_results(summary)).to_text()]
    comps = summary_results(summary, "components")
    if comps:
        parts += ["Components", "", build_rate_table(comps).to_text()]
    parts.append(f"Total: {RateResult.from_dict(summary['total']).render()} mHz")
    return "\n".join(parts) + "\n"


class LabelMismatch(ValueError):
    pass


def compare_summaries(a, b, include_syst=False):
    """Per-source factors rate_A / rate_B; rows are (label, A, B, factor, sigma or None)."""
    from .analysis import suppression_factor

    ra = {r.label: r for r in summary_results(a)}
    rb = {r.label: r for r in summary_results(b)}
    if set(ra) != set(rb):
        only_a = sorted(set(ra) - set(rb))
        only_b = sorted(set(rb) - set(ra))
        raise LabelMismatch(f"source labels differ: only in A: {', '.join(only_a) or '-'}; "
                            f"only in B: {', '.join(only_b) or '-'}")
    rows = []
    for label in ra:
        x, y = ra[label], rb[label]
        try:
            f, s = suppression_factor(x, y, include_syst)
        except (ZeroDivisionError, ValueError):
            f = s = None
        rows.append((label, x, y, f, s))
    return rows


def compare_text(rows, name_a="A", name_b="B"):
    head = ["Source", name_a, name_b, "A/B"]
    body = []
    for label, x, y, f, s in rows:
        fac = "undefined" if f is None else f"{f:.3g} ± {s:.2g}"
        body.append([label, x.render(), y.render(), fac])
    widths = [max(len(c) for c in col) for col in zip(head, *body)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return "\n".join([line(head), line(["-" * w for w in widths])] + [line(b) for b in body]) + "\n"
