# %% [markdown]
# # Far sources in a surface laboratory
#
# Rates of environmental gammas, cosmic muons and neutrons interacting with
# the qubit chip inside an unshielded dilution refrigerator.  The bundled
# `standard_lab` scenario is run here with reduced statistics so the notebook
# finishes in well under a minute; drop `events=` for the full run.

# %%
from qubitrad.analysis import probability_in_window
from qubitrad.runner import run_scenario
from qubitrad.scenario import resolve_scenario_path

summary = run_scenario(resolve_scenario_path("standard_lab"), events=2_000_000, write=False, quiet=True)

# %% [markdown]
# Each source is normalized to its own equivalent exposure time
# `t_eq = N_gen / (A * flux)`.  The gamma source uses the two-step scheme, so
# its `t_eq` refers to the inner surface S2.

# %%
for s in summary["sources"]:
    print(f"{s['label']:10s} {s['display']:>16s} mHz   hits {s['hits']:5d}   t_eq {s['t_eq_s']:.4g} s")

# %% [markdown]
# Muons are the most predictable source: for a cos^2 zenith distribution the
# rate on a thin box is proportional to its projected area, which gives about
# 11 mHz for the bundled chip at 1 muon per cm2 per minute.

# %%
mu = next(s["result"] for s in summary["sources"] if s["label"] == "muons")
print("muon rate", round(mu["rate_mHz"], 2), "+-", round(mu["stat_mHz"], 2), "mHz")

# %% [markdown]
# Chance that at least one interaction falls in a one second window, which is
# the figure of merit for correlated errors across a multi-qubit chip.

# %%
total = summary["total"]
rate = total["rate_mHz"] if total["rate_mHz"] is not None else total["hi_mHz"]
print(f"total {rate:.3g} mHz  ->  P(1 s) = {probability_in_window(rate):.2e}")
