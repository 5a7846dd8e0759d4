"""
This submodule defines the unit registry for configuration values carrying a
physical dimension, and the logarithmic (dB) conversions used throughout.

Internally, all powers are linear Watts and all lengths are meters.
"""

import jax.numpy as jnp
import jpu
from pint import Quantity, Unit  # noqa: F401

ureg = jpu.UnitRegistry()


def as_quantity(obj, unit: str | Unit) -> Quantity:
    """
    Create a Quantity from a number, a string or a Quantity.

    Plain numbers are interpreted in ``unit``; strings are parsed by the
    registry (e.g. ``"250 mW"``). The result is always expressed in ``unit``,
    so that a dimensionality mismatch raises early.

    Examples
    --------
    >>> as_quantity("250 mW", "W").magnitude
    0.25
    """
    unit = ureg.Unit(unit) if isinstance(unit, str) else unit
    if isinstance(obj, str):
        obj = ureg(obj)
    if isinstance(obj, Quantity):
        return ureg.Quantity(float(obj.m_as(unit)), unit)
    return ureg.Quantity(float(obj), unit)


def db_to_linear(value_db):
    """
    Convert a power ratio from dB to linear scale, ``10^(x/10)``.
    """
    return jnp.power(10.0, jnp.asarray(value_db) / 10.0)


def linear_to_db(value):
    """
    Convert a linear power ratio to dB, ``10 log10(x)``.
    """
    return 10.0 * jnp.log10(jnp.asarray(value))


def dbm_to_watt(value_dbm: float) -> Quantity:
    """
    Convert an absolute power level in dBm to Watts.

    Examples
    --------
    >>> dbm_to_watt(-96).m_as(ureg.watt)  # doctest: +ELLIPSIS
    2.51...e-13
    """
    return ureg.Quantity(10.0 ** ((value_dbm - 30.0) / 10.0), ureg.watt)
