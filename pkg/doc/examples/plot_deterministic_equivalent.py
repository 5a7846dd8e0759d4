"""
Deterministic equivalent versus Monte-Carlo
===========================================

For a single AP without correlation and a normalized channel, the
deterministic equivalent of the antenna power map has a closed form,
``Q K / (M (M - K))`` per antenna. This example compares it with the exact
map averaged over random channels for growing arrays at a fixed load
``K / M = 1/2``.
"""

import jax
import jax.numpy as jnp
import matplotlib.pyplot as plt

import jaxcfm
from jaxcfm.rmt import monte_carlo_ap_powers, pbar_map, rmt_input
from jaxcfm.scenario import (
    Geometry,
    LargeScale,
    Scenario,
    TargetProfile,
    correlation_set,
)

q_count = 4
sizes = [4, 8, 16, 32, 64]
deterministic, empirical = [], []
for m in sizes:
    k = m // 2
    cfg = jaxcfm.SystemConfig(
        L=1, M=m, K=k, Q=q_count, noise_power=1.0, corr_coeff=0.0
    )
    scenario = Scenario(
        cfg,
        Geometry(jnp.zeros((1, 2)), jnp.ones((k, 2))),
        LargeScale(jnp.ones((k, 1)), jnp.zeros((k, 1))),
        correlation_set(cfg),
        # gamma_k = Q normalizes the channel to unit targets
        TargetProfile(jnp.full(k, float(q_count)), q_count),
    )
    p = jnp.ones(1)
    deterministic.append(float(pbar_map(rmt_input(scenario), p)[0]))
    empirical.append(
        float(
            monte_carlo_ap_powers(
                scenario, p, jax.random.PRNGKey(m), n_draws=20
            )[0]
        )
    )

fig, ax = plt.subplots()
ax.plot(sizes, deterministic, label="deterministic equivalent")
ax.plot(sizes, empirical, "o", label="Monte-Carlo")
ax.set_xscale("log", base=2)
ax.set_yscale("log")
ax.set_xlabel("antennas M")
ax.set_ylabel("band power per antenna [W]")
ax.legend()
plt.show()
