import logging

import jax.numpy as jnp
import numpy as onp

from jaxcfm.helpers import (
    antenna_offsets,
    antenna_to_ap,
    ap_slices,
    expand_ap_values,
    relative_change_above,
    relative_sup_change,
    timer,
)


def test_antenna_offsets():
    assert (antenna_offsets((2, 3, 1)) == onp.array([0, 2, 5, 6])).all()


def test_ap_slices_cover_all_antennas():
    slices = ap_slices((2, 3, 1))
    assert slices == [slice(0, 2), slice(2, 5), slice(5, 6)]


def test_antenna_to_ap_and_expand():
    assert (antenna_to_ap((2, 1)) == jnp.array([0, 0, 1])).all()
    expanded = expand_ap_values(jnp.array([0.5, 2.0]), (3, 2))
    assert (expanded == jnp.array([0.5, 0.5, 0.5, 2.0, 2.0])).all()


def test_relative_sup_change():
    new = jnp.array([1.0, 4.0])
    old = jnp.array([1.0, 3.0])
    assert jnp.isclose(relative_sup_change(new, old), 0.25)
    assert relative_sup_change(new, new) == 0


def test_relative_change_above():
    new = jnp.array([1.0, 1e-3, 1e-9])
    old = jnp.array([1.0, 2e-3, 2e-9])
    assert jnp.isclose(relative_change_above(new, old, 1e-6), 1.0)
    assert jnp.isclose(relative_change_above(new, old, 1e-2), 1e-3)
    assert relative_change_above(new, new, 1e-6) == 0


def test_timer_logs_and_returns(caplog):
    @timer
    def double(x):
        return 2 * x

    with caplog.at_level(logging.INFO, logger="jaxcfm.helpers"):
        assert double(21) == 42
    assert "'double'" in caplog.text
