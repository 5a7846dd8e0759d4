"""
Antenna power profile
=====================

The band transmit power of every antenna in one random network, for the
conventional ZF precoder, the PA-consumption-optimal precoder and the
allocation of the deterministic equivalent.

The conventional precoder spreads power over all antennas. The optimal
precoder concentrates it on a few APs, and within an AP prefers the less
correlated antennas at the edges of the array. The deterministic equivalent
assigns one power per AP and switches the weak APs off.
"""

import matplotlib.pyplot as plt

import jaxcfm

cfg = jaxcfm.SystemConfig(L=8, M=8, K=8, Q=64, rng_seed=1)
spec = jaxcfm.ExperimentSpec("antenna-profile", config=cfg)
table = jaxcfm.harness.run_experiment(spec).table

fig, ax = plt.subplots(figsize=(8, 4))
for method in ("conventional", "optimal", "rmt"):
    ax.step(
        table["antenna"], table[method], where="mid", label=method
    )
for boundary in range(cfg.M[0], cfg.N, cfg.M[0]):
    ax.axvline(boundary - 0.5, color="gray", lw=0.5)
ax.set_yscale("log")
ax.set_xlabel("antenna index")
ax.set_ylabel("band transmit power [W]")
ax.legend()
plt.show()
