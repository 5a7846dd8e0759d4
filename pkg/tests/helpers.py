import jax
import jax.numpy as jnp

import jaxcfm
from jaxcfm.channel import ChannelRealization
from jaxcfm.scenario import (
    Geometry,
    LargeScale,
    Scenario,
    TargetProfile,
    correlation_set,
)


def small_config(**changes) -> jaxcfm.SystemConfig:
    """
    A system small enough to run all methods in a fraction of a second.
    """
    fields = {"L": 4, "M": 4, "K": 2, "Q": 4, "rng_seed": 3}
    fields.update(changes)
    return jaxcfm.SystemConfig(**fields)


def iid_channel(key, q_count, n_users, antennas, beta=None):
    """
    Channel with i.i.d. standard complex Gaussian entries.
    """
    shape = (q_count, n_users, sum(antennas))
    re_key, im_key = jax.random.split(key)
    h = jax.random.normal(re_key, shape) + 1j * jax.random.normal(
        im_key, shape
    )
    h = h / jnp.sqrt(2.0)
    return ChannelRealization(h, antennas, beta)


def unit_targets(n_users, q_count) -> TargetProfile:
    """
    Targets with gamma_k = Q, i.e. one bit per subcarrier and user.
    """
    return TargetProfile(jnp.full(n_users, float(q_count)), q_count)


def uncorrelated_scenario(n_users, antennas, q_count, beta=1.0) -> Scenario:
    """
    Unit noise, targets gamma_k = Q and no antenna correlation, so that the
    normalized channel equals the channel.
    """
    cfg = jaxcfm.SystemConfig(
        L=len(antennas),
        M=antennas,
        K=n_users,
        Q=q_count,
        noise_power=1.0,
        corr_coeff=0.0,
    )
    geometry = Geometry(
        jnp.zeros((len(antennas), 2)), jnp.ones((n_users, 2))
    )
    large_scale = LargeScale(
        beta * jnp.ones((n_users, len(antennas))),
        jnp.zeros((n_users, len(antennas))),
    )
    return Scenario(
        cfg,
        geometry,
        large_scale,
        correlation_set(cfg),
        unit_targets(n_users, q_count),
    )
