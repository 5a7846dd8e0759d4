"""
Miscellaneous helper functions.
"""

import logging
from functools import partialmethod, wraps
from time import time

import jax.numpy as jnp
import numpy as onp

logger = logging.getLogger(__name__)


def antenna_offsets(antennas) -> onp.ndarray:
    """
    Return the first antenna index of every access point, with the total
    number of antennas appended.

    Antennas of an access point are contiguous, in access point order.

    Examples
    --------
    >>> antenna_offsets((2, 3, 1))
    array([0, 2, 5, 6])
    """
    return onp.concatenate([[0], onp.cumsum(onp.asarray(antennas, int))])


def ap_slices(antennas) -> list[slice]:
    """
    The antenna index slice of every access point.
    """
    offsets = antenna_offsets(antennas)
    return [
        slice(int(start), int(stop))
        for start, stop in zip(offsets[:-1], offsets[1:], strict=True)
    ]


def antenna_to_ap(antennas) -> jnp.ndarray:
    """
    Map every antenna index to the index of the access point it belongs to.

    Examples
    --------
    >>> antenna_to_ap((2, 1))
    Array([0, 0, 1], dtype=int64)
    """
    return jnp.repeat(
        jnp.arange(len(antennas)), jnp.asarray(antennas, dtype=int)
    )


def expand_ap_values(values, antennas) -> jnp.ndarray:
    """
    Repeat one value per access point onto all its antennas.
    """
    return jnp.asarray(values)[antenna_to_ap(antennas)]


def relative_sup_change(new, old):
    """
    ``max|new - old| / max|new|``, the convergence measure of the antenna power
    and auxiliary fixed points.
    """
    return jnp.max(jnp.abs(new - old)) / jnp.max(jnp.abs(new))


def relative_change_above(new, old, threshold_rel):
    """
    Largest change of any entry of ``new`` above ``threshold_rel`` times
    ``max|new|``, relative to that entry itself, and at least
    :py:func:`~.relative_sup_change`.

    Entries that still decay towards zero keep this measure large until they
    fall below the threshold.

    Examples
    --------
    >>> float(relative_change_above(jnp.array([1.0, 0.1]),
    ...                             jnp.array([1.0, 0.2]), 1e-6))
    1.0
    """
    size = jnp.abs(new)
    above = size > threshold_rel * jnp.max(size)
    rel = jnp.where(
        above, jnp.abs(new - old) / jnp.where(above, size, 1.0), 0.0
    )
    return jnp.maximum(jnp.max(rel), relative_sup_change(new, old))


def timer(func, loglevel=logging.INFO):
    """
    Simple timer wrapper, logging the wall time of each call.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        t1 = time()
        result = func(*args, **kwargs)
        t2 = time()
        logger.log(loglevel, f"Executed {func.__name__!r} in {t2-t1:.4f} s")
        return result

    return wrapper


def partialclass(cls, *args, **kwds):
    """
    This is an equivalent to functools.partial, but for Classes.

    See https://stackoverflow.com/a/38911383
    """

    class NewCls(cls):
        __init__ = partialmethod(cls.__init__, *args, **kwds)

    return NewCls
