# %% [markdown]
# # Close sources
#
# Components next to the chip cannot be shielded.  Each component is
# simulated once per assayed isotope or chain, with decays uniform in its
# volume, and normalized with `t_eq = N / (a * m)` from the radioassay
# activity `a` (Bq/kg) and the component mass `m`.  Activities quoted only as
# upper limits give a rate interval [0, upper].

# %%
from qubitrad import core_data
from qubitrad.runner import run_scenario
from qubitrad.scenario import SCENARIO_DIR, load_scenario

comps = core_data.load_components(core_data.DATA_DIR / "components.csv")
for c in list(comps.values())[:5]:
    print(c)

# %% [markdown]
# Only the PCB (A) and the sample box (B) are run here, at reduced
# statistics.  The PCB dominates; the box is bounded from above only.

# %%
import dataclasses

sc = load_scenario(SCENARIO_DIR / "close_sources.yaml")
keep = [s for s in sc.raw["sources"] if s.get("component") in ("A", "B")]
sc = dataclasses.replace(sc, raw={**sc.raw, "sources": keep})
summary = run_scenario(sc, events=100_000, write=False, quiet=True)
for s in summary["sources"]:
    print(f"{s['label']:22s} {s['display']:>22s} mHz")
for c in summary["components"]:
    print(f"component {c['label']:3s} {c['display']:>22s} mHz")
