import jax
import jax.numpy as jnp
import numpy as onp
import pytest

import jaxcfm
from jaxcfm.scenario import (
    Geometry,
    PlacementError,
    TargetProfile,
    compute_lsf,
    draw_scenario,
    draw_targets,
    exponential_correlation,
    generate_geometry,
    grid_sites,
    path_loss_db,
    realization_streams,
)
from jaxcfm.units import ureg

from .helpers import small_config


def test_grid_sites_are_cell_centers():
    sites = grid_sites(1000.0, 16)
    assert sites.shape == (16, 2)
    assert set(onp.unique(sites[:, 0]).tolist()) == {125, 375, 625, 875}
    assert set(onp.unique(sites[:, 1]).tolist()) == {125, 375, 625, 875}
    with pytest.raises(ValueError):
        grid_sites(1000.0, 12)


def test_all_sites_used_once_for_full_grid():
    cfg = jaxcfm.SystemConfig(L=16, M=2, K=4)
    geom = generate_geometry(cfg, jax.random.PRNGKey(0))
    assert sorted(onp.asarray(geom.ap_sites).tolist()) == list(range(16))
    assert len(onp.unique(geom.ap_positions, axis=0)) == 16


def test_users_keep_minimal_distance():
    cfg = small_config(K=20, min_user_ap_distance=200.0)
    geom = generate_geometry(cfg, jax.random.PRNGKey(1))
    assert geom.distances().shape == (20, 4)
    assert (geom.distances() >= 200.0).all()
    assert (geom.user_positions >= 0).all()
    assert (geom.user_positions <= 1000.0).all()


def test_placement_error_if_area_is_covered():
    # Every point of a 100 m square is within 500 m of every AP
    cfg = small_config(area_side=100.0, min_user_ap_distance=500.0)
    with pytest.raises(PlacementError):
        generate_geometry(cfg, jax.random.PRNGKey(0))


def test_path_loss():
    assert jnp.isclose(path_loss_db(100.0), -105.7)
    assert jnp.isclose(path_loss_db(10.0), -68.1)


def test_lsf_without_shadowing():
    cfg = small_config(shadow_std_db=0.0)
    geom = Geometry(
        jnp.array([[0.0, 0.0], [500.0, 0.0], [0.0, 500.0], [500.0, 500.0]]),
        jnp.array([[0.0, 100.0], [0.0, 10.0]]),
    )
    lsf = compute_lsf(geom, cfg, jax.random.PRNGKey(0))
    assert jnp.isclose(lsf.beta[0, 0], 2.6915e-11, rtol=1e-4)
    assert jnp.isclose(lsf.beta[1, 0], 10 ** (-6.81))
    # Farther APs are weaker
    assert (lsf.beta[:, 0] > lsf.beta[:, 3]).all()
    assert (lsf.shadow_db == 0).all()


def test_lsf_rejects_zero_distance():
    cfg = small_config()
    geom = Geometry(jnp.zeros((4, 2)), jnp.zeros((2, 2)))
    with pytest.raises(ValueError):
        compute_lsf(geom, cfg, jax.random.PRNGKey(0))


def test_shadowing_statistics():
    cfg = small_config(K=500, shadow_std_db=4.0)
    geom = generate_geometry(cfg, jax.random.PRNGKey(2))
    lsf = compute_lsf(geom, cfg, jax.random.PRNGKey(3))
    assert jnp.isclose(jnp.std(lsf.shadow_db), 4.0, rtol=0.05)
    assert jnp.abs(jnp.mean(lsf.shadow_db)) < 0.4


def test_exponential_correlation():
    c = exponential_correlation(2, 0.7)
    assert jnp.isclose(c, jnp.array([[1.0, 0.7], [0.7, 1.0]])).all()
    assert jnp.isclose(
        jnp.linalg.eigvalsh(c), jnp.array([0.3, 1.7])
    ).all()
    assert (exponential_correlation(5, 0.0) == jnp.eye(5)).all()
    assert jnp.isclose(jnp.trace(exponential_correlation(8, 0.7)), 8.0)
    with pytest.raises(ValueError):
        exponential_correlation(4, 1.0)


def test_correlation_set_eigenvalues_sum_to_antenna_count():
    cfg = jaxcfm.SystemConfig(L=3, M=(2, 4, 8), K=2)
    corr = jaxcfm.scenario.correlation_set(cfg)
    assert corr.antennas == (2, 4, 8)
    xi = corr.padded_eigenvalues()
    assert xi.shape == (3, 8)
    assert jnp.isclose(jnp.sum(xi, axis=1), jnp.array([2.0, 4.0, 8.0])).all()
    assert (xi[0, 2:] == 0).all()


def test_targets():
    targets = TargetProfile(jnp.array([100.0, 10.0]), 256)
    assert jnp.isclose(targets.d_tilde_gamma[0], 0.390625)
    assert targets.Q == 256
    with pytest.raises(ValueError):
        TargetProfile(jnp.array([1.0, 0.0]), 4)


def test_fixed_target_range():
    cfg = small_config(target_snr_range_db=(7.0, 7.0))
    targets = draw_targets(cfg, jax.random.PRNGKey(0))
    assert jnp.isclose(targets.gamma, 5.0119, rtol=1e-4).all()


def test_drawn_targets_within_range():
    cfg = small_config(K=50)
    targets = draw_targets(cfg, jax.random.PRNGKey(0))
    assert (targets.gamma >= 10**0.1 - 1e-12).all()
    assert (targets.gamma <= 100.0 + 1e-12).all()
    assert jnp.isclose(targets.d_tilde_gamma, targets.gamma / cfg.Q).all()


def test_streams_are_reproducible():
    a = realization_streams(0, 3)
    b = realization_streams(0, 3)
    c = realization_streams(0, 4)
    assert set(a) == {"geometry", "shadow", "targets", "channel"}
    for name in a:
        assert (a[name] == b[name]).all()
        assert not (a[name] == c[name]).all()


def test_streams_use_the_full_64_bit_seed():
    high = 2**63 + 5
    a = realization_streams(high, 0)
    low = realization_streams(5, 0)
    shifted = realization_streams(high + 2**32, 0)
    for name in a:
        assert not (a[name] == low[name]).all()
        assert not (a[name] == shifted[name]).all()
    cfg = small_config(rng_seed=2**64 - 1)
    scenario = draw_scenario(cfg, realization_streams(cfg.rng_seed, 0))
    assert scenario.targets.gamma.shape == (cfg.K,)
    with pytest.raises(ValueError):
        realization_streams(2**64, 0)


def test_scenario_is_reproducible():
    cfg = small_config()
    first = draw_scenario(cfg, realization_streams(cfg.rng_seed, 7))
    second = draw_scenario(cfg, realization_streams(cfg.rng_seed, 7))
    assert (first.large_scale.beta == second.large_scale.beta).all()
    assert (first.targets.gamma == second.targets.gamma).all()
    assert (
        first.geometry.user_positions == second.geometry.user_positions
    ).all()
    assert first.antennas == cfg.M
    assert jnp.isclose(
        first.config.noise_power.m_as(ureg.watt), 10**-12.6
    )
