import jax
import jax.numpy as jnp
import numpy as onp
import pytest

from jaxcfm.channel import ChannelRealization, NormalizedChannel, normalize
from jaxcfm.consumption import total_transmit_power
from jaxcfm.precoding import (
    AntennaPowerVector,
    PrecoderSet,
    SingularGramError,
    SingularityGuardError,
    antenna_power_map,
    optimal_precoder,
    per_antenna_powers,
    solve_antenna_powers,
    weighted_pseudo_inverse,
    zf_precoder,
    zf_violation,
)
from jaxcfm.scenario import TargetProfile

from .helpers import iid_channel, unit_targets


def scaled_channel(key, q_count, n_users, antennas):
    """
    A channel with strongly different column gains, as in a distributed
    network.
    """
    ch = iid_channel(key, q_count, n_users, antennas)
    gains = jnp.logspace(0, -2, ch.N)
    return ChannelRealization(ch.aggregated * gains, antennas)


def test_scalar_zf():
    ch = ChannelRealization(jnp.array([[[2.0 + 0j]]]), (1,))
    ws = zf_precoder(ch, unit_targets(1, 1), 1.0)
    assert jnp.isclose(ws.w[0, 0, 0], 0.5)


def test_two_antenna_zf():
    ch = ChannelRealization(jnp.array([[[1.0 + 0j, 1.0]]]), (2,))
    ws = zf_precoder(ch, unit_targets(1, 1), 1.0)
    assert jnp.isclose(ws.w[0, :, 0], 0.5).all()
    p = per_antenna_powers(ws)
    assert jnp.isclose(p.p, 0.25).all()
    assert jnp.isclose(total_transmit_power(p), 0.5)


def test_zf_matches_pseudo_inverse():
    ch = iid_channel(jax.random.PRNGKey(0), 4, 2, (4,))
    targets = TargetProfile(jnp.array([8.0, 2.0]), 4)
    ws = zf_precoder(ch, targets, 0.5)
    rhs = jnp.sqrt(0.5 * targets.d_tilde_gamma)
    for q in range(4):
        reference = onp.linalg.pinv(onp.asarray(ch.aggregated[q])) @ onp.diag(
            rhs
        )
        assert jnp.isclose(ws.w[q], reference, atol=1e-12).all()
    assert zf_violation(ch, ws, targets, 0.5) < 1e-12


def test_weighted_pseudo_inverse_constraint():
    ch = scaled_channel(jax.random.PRNGKey(1), 1, 3, (8,))
    weights = jnp.linspace(0.1, 2.0, 8)
    rhs = jnp.array([1.0, 2.0, 3.0])
    w = weighted_pseudo_inverse(ch.aggregated[0], weights, rhs)
    assert jnp.isclose(ch.aggregated[0] @ w, jnp.diag(rhs), atol=1e-10).all()
    # Rows of antennas with zero weight vanish
    w = weighted_pseudo_inverse(
        ch.aggregated[0], weights.at[:2].set(0.0), rhs
    )
    assert (w[:2] == 0).all()


def test_singular_gram_reports_subcarrier():
    ch = iid_channel(jax.random.PRNGKey(2), 3, 2, (4,))
    h = ch.aggregated.at[1, 1].set(ch.aggregated[1, 0])
    with pytest.raises(SingularGramError) as context:
        zf_precoder(ChannelRealization(h, (4,)), unit_targets(2, 3), 1.0)
    assert context.value.subcarrier == 1


def test_per_antenna_powers():
    w = jnp.zeros((2, 3, 1)).at[0, 1, 0].set(0.5)
    p = per_antenna_powers(PrecoderSet(w, "conventional"))
    assert jnp.isclose(p.p, jnp.array([0.0, 0.25, 0.0])).all()
    assert p.active_count == 1
    # The same precoder on a second subcarrier doubles the band power
    p = per_antenna_powers(PrecoderSet(w.at[1].set(w[0]), "conventional"))
    assert jnp.isclose(p.p[1], 0.5)


def test_power_vector_validation():
    with pytest.raises(ValueError):
        AntennaPowerVector(jnp.array([1.0, -1.0]))
    p = AntennaPowerVector.with_floor(jnp.array([1.0, 1e-12, 0.5]), 1e-9)
    assert (p.p == jnp.array([1.0, 0.0, 0.5])).all()
    assert (p.active_mask == jnp.array([True, False, True])).all()
    assert len(p) == 3


def test_single_user_symmetric_solution():
    nch = NormalizedChannel(jnp.ones((1, 1, 2), complex), (2,))
    p, report = solve_antenna_powers(nch)
    assert jnp.isclose(p.p, 0.25).all()
    assert report.converged


def test_square_system_equals_zf():
    ch = iid_channel(jax.random.PRNGKey(3), 4, 3, (3,))
    targets = unit_targets(3, 4)
    conventional = per_antenna_powers(zf_precoder(ch, targets, 1.0))
    p, _ = solve_antenna_powers(normalize(ch, targets, 1.0))
    assert jnp.isclose(p.p, conventional.p, rtol=1e-10).all()

    ws = optimal_precoder(
        ch, targets, 1.0, AntennaPowerVector(jnp.array([0.1, 3.0, 1.0]))
    )
    assert jnp.isclose(
        ws.w, zf_precoder(ch, targets, 1.0).w, rtol=1e-8, atol=1e-10
    ).all()


def test_uniform_powers_give_zf():
    ch = iid_channel(jax.random.PRNGKey(4), 2, 2, (3, 3))
    targets = unit_targets(2, 2)
    ws = optimal_precoder(
        ch, targets, 1.0, AntennaPowerVector(jnp.full(6, 7.0))
    )
    assert jnp.isclose(
        ws.w, zf_precoder(ch, targets, 1.0).w, rtol=1e-10, atol=1e-12
    ).all()


def test_optimal_precoder_needs_enough_antennas():
    ch = iid_channel(jax.random.PRNGKey(5), 1, 2, (4,))
    p = AntennaPowerVector(jnp.array([1.0, 0.0, 0.0, 0.0]))
    with pytest.raises(SingularityGuardError):
        optimal_precoder(ch, unit_targets(2, 1), 1.0, p)


def test_optimal_precoder_respects_active_mask():
    ch = iid_channel(jax.random.PRNGKey(15), 2, 2, (3, 3))
    targets = unit_targets(2, 2)
    mask = jnp.array([True, True, True, False, True, False])
    p = AntennaPowerVector(jnp.full(6, 2.0), active_mask=mask)
    ws = optimal_precoder(ch, targets, 1.0, p)
    assert (ws.w[:, ~mask, :] == 0).all()
    assert zf_violation(ch, ws, targets, 1.0) < 1e-10
    dense = optimal_precoder(
        ch, targets, 1.0, AntennaPowerVector(jnp.where(mask, 2.0, 0.0))
    )
    assert jnp.isclose(ws.w, dense.w, rtol=1e-10, atol=1e-12).all()
    with pytest.raises(SingularityGuardError):
        optimal_precoder(
            ch,
            targets,
            1.0,
            AntennaPowerVector(
                jnp.full(6, 2.0), active_mask=jnp.arange(6) == 0
            ),
        )


def test_power_map_is_scale_invariant():
    ch = scaled_channel(jax.random.PRNGKey(6), 4, 2, (3, 3))
    p = jnp.linspace(0.5, 2.0, 6)
    assert jnp.isclose(
        antenna_power_map(ch.aggregated, p),
        antenna_power_map(ch.aggregated, 1e3 * p),
        rtol=1e-10,
    ).all()


def test_fixed_point_self_consistency():
    ch = scaled_channel(jax.random.PRNGKey(7), 8, 4, (4, 4, 4, 4))
    targets = TargetProfile(jnp.array([10.0, 3.0, 50.0, 1.5]), 8)
    noise = 1e-2
    p, report = solve_antenna_powers(
        normalize(ch, targets, noise), max_iter=20_000
    )
    assert report.converged
    ws = optimal_precoder(ch, targets, noise, p)
    realized = per_antenna_powers(ws).p
    assert jnp.max(jnp.abs(realized - p.p)) <= 1e-6 * jnp.max(p.p)
    assert zf_violation(ch, ws, targets, noise) < 1e-9


def test_optimal_dominates_conventional():
    for seed in range(5):
        ch = scaled_channel(jax.random.PRNGKey(seed), 4, 3, (4, 4))
        targets = unit_targets(3, 4)
        conventional = per_antenna_powers(zf_precoder(ch, targets, 1.0))
        p, report = solve_antenna_powers(normalize(ch, targets, 1.0))
        assert jnp.sum(jnp.sqrt(p.p)) <= jnp.sum(
            jnp.sqrt(conventional.p)
        ) * (1 + 1e-9)
        # The objective does not increase along the iteration
        trace = report.objective_trace
        assert (onp.diff(trace) <= 1e-9 * trace[0]).all()


def test_target_scaling():
    h = scaled_channel(jax.random.PRNGKey(8), 4, 2, (3, 3)).aggregated
    p, _ = solve_antenna_powers(NormalizedChannel(h, (3, 3)))
    alpha = 7.0
    p_scaled, _ = solve_antenna_powers(
        NormalizedChannel(h / jnp.sqrt(alpha), (3, 3))
    )
    assert jnp.isclose(
        p_scaled.p, alpha * p.p, rtol=1e-6, atol=1e-9 * alpha * p.p.max()
    ).all()
    assert (p_scaled.active_mask == p.active_mask).all()


def test_antenna_permutation():
    h = scaled_channel(jax.random.PRNGKey(9), 4, 2, (6,)).aggregated
    perm = jnp.array([3, 0, 5, 1, 4, 2])
    p, _ = solve_antenna_powers(NormalizedChannel(h, (6,)))
    p_perm, _ = solve_antenna_powers(NormalizedChannel(h[:, :, perm], (6,)))
    assert jnp.isclose(
        p_perm.p, p.p[perm], rtol=1e-6, atol=1e-9 * p.p.max()
    ).all()


def test_more_users_than_antennas():
    nch = NormalizedChannel(jnp.ones((1, 3, 2), complex), (2,))
    with pytest.raises(ValueError):
        solve_antenna_powers(nch)


def test_matches_convex_solver():
    cp = pytest.importorskip("cvxpy")
    q_count, n_antennas = 2, 3
    targets = unit_targets(1, q_count)
    for seed in range(20):
        ch = iid_channel(jax.random.PRNGKey(seed), q_count, 1, (n_antennas,))
        p, _ = solve_antenna_powers(
            normalize(ch, targets, 1.0), tol=1e-13, max_iter=50_000
        )
        realized = per_antenna_powers(
            optimal_precoder(ch, targets, 1.0, p)
        ).p
        objective = float(jnp.sum(jnp.sqrt(realized)))

        h = onp.asarray(ch.aggregated)
        w = cp.Variable((q_count, n_antennas), complex=True)
        problem = cp.Problem(
            cp.Minimize(sum(cp.norm(w[:, n], 2) for n in range(n_antennas))),
            [h[q, 0] @ w[q] == 1 for q in range(q_count)],
        )
        problem.solve()
        assert abs(objective - problem.value) <= 1e-4 * problem.value
