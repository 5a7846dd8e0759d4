import jax
import jax.numpy as jnp
import numpy as onp
import pytest

from jaxcfm.channel import (
    DUMP_MAGIC,
    ChannelRealization,
    correlation_sqrt,
    draw_channel,
    dump_channel,
    full_row_rank,
    load_channel,
    normalize,
    zf_targets,
)
from jaxcfm.scenario import (
    CorrelationSet,
    Scenario,
    TargetProfile,
    exponential_correlation,
)

from .helpers import iid_channel, uncorrelated_scenario, unit_targets


def test_uncorrelated_unit_variance():
    scenario = uncorrelated_scenario(2, (4,), 1250)
    ch = draw_channel(scenario, 1250, jax.random.PRNGKey(0))
    assert ch.aggregated.shape == (1250, 2, 4)
    assert jnp.isclose(jnp.mean(jnp.abs(ch.aggregated) ** 2), 1.0, rtol=0.05)
    assert jnp.abs(jnp.mean(ch.aggregated)) < 0.05


def test_lsf_scales_variance():
    scenario = uncorrelated_scenario(2, (4, 4), 1250, beta=4.0)
    ch = draw_channel(scenario, 1250, jax.random.PRNGKey(1))
    assert jnp.isclose(jnp.mean(jnp.abs(ch.aggregated) ** 2), 4.0, rtol=0.05)
    assert ch.per_ap[1].shape == (1250, 2, 4)


def test_transmit_correlation_moment():
    scenario = uncorrelated_scenario(2, (2,), 5000)
    c = exponential_correlation(2, 0.7)
    scenario = Scenario(
        scenario.config,
        scenario.geometry,
        scenario.large_scale,
        CorrelationSet([c]),
        scenario.targets,
    )
    ch = draw_channel(scenario, 5000, jax.random.PRNGKey(2))
    h = ch.aggregated.reshape(-1, 2)
    moment = h.T @ h.conj() / len(h)
    assert jnp.isclose(moment, c, atol=0.05).all()


def test_correlation_sqrt():
    c = exponential_correlation(4, 0.7)
    root = correlation_sqrt(c)
    assert jnp.isclose(root @ root, c).all()
    assert jnp.isclose(root, root.conj().T).all()
    with pytest.raises(ValueError):
        correlation_sqrt(jnp.array([[1.0, 2.0], [2.0, 1.0]]))


def test_mismatching_scenario_is_rejected():
    scenario = uncorrelated_scenario(2, (4,), 1)
    scenario.correlation = CorrelationSet([jnp.eye(2)])
    with pytest.raises(ValueError):
        draw_channel(scenario, 1, jax.random.PRNGKey(0))


def test_full_row_rank():
    h = jnp.array([[[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]], [[1, 0, 0], [0, 1, 0]]])
    assert (full_row_rank(h) == jnp.array([False, True])).all()


def test_normalize_identity_for_unit_targets():
    ch = iid_channel(jax.random.PRNGKey(0), 3, 2, (3, 3))
    nch = normalize(ch, unit_targets(2, 3), 1.0)
    assert jnp.isclose(nch.h_tilde, ch.aggregated).all()


def test_normalize_scales_rows():
    ch = ChannelRealization(
        jnp.array([[[1.0 + 0j, 1.0]]]), (2,), beta=jnp.array([[3.0]])
    )
    # gamma / Q = 4, so every row is divided by 2
    nch = normalize(ch, TargetProfile(jnp.array([4.0]), 1), 1.0)
    assert jnp.isclose(nch.h_tilde, 0.5).all()
    assert jnp.isclose(nch.d_norm, 0.75).all()


def test_normalized_statistics_reproduce_lsf():
    noise = 2.5e-13
    targets = TargetProfile(jnp.array([10.0, 50.0]), 16)
    beta = jnp.array([[1e-9, 3e-10], [2e-11, 5e-8]])
    ch = ChannelRealization(jnp.ones((16, 2, 4)), (2, 2), beta=beta)
    nch = normalize(ch, targets, noise)
    assert jnp.isclose(
        nch.d_norm * noise * targets.d_tilde_gamma[None, :], beta.T
    ).all()
    assert jnp.isclose(
        zf_targets(targets, noise) ** 2, noise * targets.gamma / 16
    ).all()


def test_normalize_rejects_zero_noise():
    ch = iid_channel(jax.random.PRNGKey(0), 1, 1, (2,))
    with pytest.raises(ValueError):
        normalize(ch, unit_targets(1, 1), 0.0)


def test_gram_matrix_splits_over_aps():
    ch = iid_channel(jax.random.PRNGKey(3), 2, 3, (2, 4, 3))
    p_ap = jnp.array([0.5, 2.0, 0.1])
    d = jnp.repeat(p_ap, jnp.array(ch.antennas))
    full = ch.aggregated @ (d[:, None] * ch.aggregated.conj().swapaxes(1, 2))
    parts = sum(
        p * block @ block.conj().swapaxes(1, 2)
        for p, block in zip(p_ap, ch.per_ap, strict=True)
    )
    assert jnp.isclose(full, parts, rtol=1e-12, atol=1e-12).all()


def test_channel_dump(tmp_path):
    ch = iid_channel(jax.random.PRNGKey(4), 3, 2, (2, 3))
    path = tmp_path / "channel.bin"
    dump_channel(ch, path)
    data = path.read_bytes()
    assert data[:4] == DUMP_MAGIC
    header = onp.frombuffer(data, dtype="<u4", count=6, offset=4)
    assert header.tolist() == [1, 2, 2, 3, 2, 3]
    assert len(data) == 4 + 6 * 4 + 8 * 3 * 2 * 5

    loaded = load_channel(path)
    assert loaded.antennas == (2, 3)
    assert jnp.isclose(loaded.aggregated, ch.aggregated, atol=1e-6).all()


def test_load_channel_rejects_other_files(tmp_path):
    path = tmp_path / "other.bin"
    path.write_bytes(b"NOPE" + bytes(24))
    with pytest.raises(ValueError):
        load_channel(path)
