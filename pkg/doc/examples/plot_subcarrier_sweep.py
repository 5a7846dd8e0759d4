"""
Approaching the optimum with more subcarriers
=============================================

With more subcarriers, the antenna powers of the optimal precoder average
over more independent channels and approach their deterministic equivalent.
This example shows the PA consumption of the RMT method relative to the
optimum over the number of subcarriers.
"""

import matplotlib.pyplot as plt

import jaxcfm

cfg = jaxcfm.SystemConfig(L=8, M=8, K=8, rng_seed=0)
spec = jaxcfm.ExperimentSpec(
    "subcarrier-sweep",
    config=cfg,
    q_values=(1, 2, 4, 8, 16, 32, 64),
    realizations=10,
)
table = jaxcfm.harness.run_experiment(spec).table
ratio = table[
    (table["method"] == "rmt") & (table["metric"] == "pas_ratio_to_optimal")
]

fig, ax = plt.subplots()
ax.errorbar(ratio["Q"], ratio["mean"], yerr=ratio["stderr"], marker="o")
ax.axhline(1.0, color="gray", ls="dashed")
ax.set_xscale("log", base=2)
ax.set_xlabel("number of subcarriers Q")
ax.set_ylabel("PA consumption, RMT / optimal")
plt.show()
