"""
This submodule generates everything which depends only on the second-order
statistics of the channel: AP and user positions, the large-scale fading
(LSF), the antenna correlation at the APs and the users' SNR targets.

All random draws take a :py:func:`jax.random.PRNGKey`. The keys of one
Monte-Carlo realization are derived from the seed and the realization index
with :py:func:`~.realization_streams`, so that serial and parallel runs draw
identical scenarios.
"""

import logging
import math
from functools import partial

import jax
import jax.numpy as jnp

from .config import SystemConfig
from .units import db_to_linear, ureg

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

#: Maximal number of position draws per user before placement is given up.
MAX_PLACEMENT_DRAWS = 10_000

#: Names of the independent random streams of one realization
STREAMS = ("geometry", "shadow", "targets", "channel")


class PlacementError(RuntimeError):
    """
    Raised if a user could not be placed at the minimal distance from all APs.
    """


def realization_streams(seed: int, index: int) -> dict[str, jax.Array]:
    """
    Random keys of realization ``index`` of a Monte-Carlo run with ``seed``.

    The keys are a pure function of ``(seed, index)``. Both 32 bit halves of
    the unsigned 64 bit ``seed`` enter the root key.

    Returns
    -------
    dict
        One key per entry of :py:data:`~.STREAMS`.

    Raises
    ------
    ValueError
        If ``seed`` is negative or does not fit into 64 bits.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"Seed {seed} is not an unsigned 64 bit integer.")
    root = jax.random.fold_in(
        jax.random.PRNGKey(seed >> 32), jnp.uint32(seed & 0xFFFFFFFF)
    )
    key = jax.random.fold_in(root, index)
    return dict(
        zip(STREAMS, jax.random.split(key, len(STREAMS)), strict=True)
    )


class Geometry:
    """
    Positions of APs and users, in meters.
    """

    _children_labels = ("ap_positions", "user_positions", "ap_sites")

    def __init__(
        self,
        ap_positions: jnp.ndarray,
        user_positions: jnp.ndarray,
        ap_sites: jnp.ndarray | None = None,
    ):
        #: Positions of the APs, shape ``(L, 2)``
        self.ap_positions = jnp.asarray(ap_positions, dtype=float)
        #: Positions of the users, shape ``(K, 2)``
        self.user_positions = jnp.asarray(user_positions, dtype=float)
        #: Indices of the grid sites occupied by the APs
        self.ap_sites = (
            jnp.arange(len(self.ap_positions))
            if ap_sites is None
            else jnp.asarray(ap_sites)
        )

    def distances(self) -> jnp.ndarray:
        """
        Distances between every user and every AP, shape ``(K, L)``.
        """
        diff = (
            self.user_positions[:, jnp.newaxis, :]
            - self.ap_positions[jnp.newaxis, :, :]
        )
        return jnp.linalg.norm(diff, axis=-1)

    def _tree_flatten(self):
        children = (self.ap_positions, self.user_positions, self.ap_sites)
        aux_data = ()
        return (children, aux_data)

    @classmethod
    def _tree_unflatten(cls, aux_data, children):
        obj = object.__new__(cls)
        obj.ap_positions, obj.user_positions, obj.ap_sites = children
        return obj


class LargeScale:
    """
    Large-scale fading between users and APs.
    """

    _children_labels = ("beta", "shadow_db")

    def __init__(self, beta: jnp.ndarray, shadow_db: jnp.ndarray):
        #: Linear LSF coefficients :math:`\beta_{k,l}`, shape ``(K, L)``
        self.beta = jnp.asarray(beta)
        #: The shadow fading draws in dB, shape ``(K, L)``
        self.shadow_db = jnp.asarray(shadow_db)

    def _tree_flatten(self):
        return ((self.beta, self.shadow_db), ())

    @classmethod
    def _tree_unflatten(cls, aux_data, children):
        obj = object.__new__(cls)
        obj.beta, obj.shadow_db = children
        return obj


class CorrelationSet:
    """
    The transmit correlation matrix of every AP and its eigenvalues.
    """

    _children_labels = ("c_ap", "eigenvalues")

    def __init__(self, c_ap: list, eigenvalues: list | None = None):
        #: One Hermitian ``(M_l, M_l)`` matrix per AP
        self.c_ap: list[jnp.ndarray] = [jnp.asarray(c) for c in c_ap]
        if eigenvalues is None:
            eigenvalues = [
                jnp.clip(jnp.linalg.eigvalsh(c), 0.0, None) for c in self.c_ap
            ]
        #: The non-negative eigenvalues of every matrix in :py:attr:`c_ap`
        self.eigenvalues: list[jnp.ndarray] = [
            jnp.asarray(xi) for xi in eigenvalues
        ]

    @property
    def antennas(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.c_ap)

    def padded_eigenvalues(self) -> jnp.ndarray:
        """
        Eigenvalues as an ``(L, max(M_l))`` array, zero-padded for APs with
        fewer antennas. A zero eigenvalue does not contribute to any of the
        sums in :py:mod:`jaxcfm.rmt`.
        """
        width = max(self.antennas)
        return jnp.stack(
            [jnp.pad(xi, (0, width - len(xi))) for xi in self.eigenvalues]
        )

    def _tree_flatten(self):
        return ((self.c_ap, self.eigenvalues), ())

    @classmethod
    def _tree_unflatten(cls, aux_data, children):
        obj = object.__new__(cls)
        obj.c_ap, obj.eigenvalues = children
        return obj


class TargetProfile:
    """
    SNR targets of the users.
    """

    _children_labels = ("gamma", "d_tilde_gamma")
    _aux_labels = ("Q",)

    def __init__(self, gamma: jnp.ndarray, Q: int):
        gamma = jnp.asarray(gamma, dtype=float)
        if jnp.any(gamma <= 0):
            raise ValueError("Target SNRs must be positive.")
        #: Linear band SNR targets :math:`\gamma_k`
        self.gamma = gamma
        #: Number of subcarriers the band target is split over
        self.Q = int(Q)
        #: Per-subcarrier targets :math:`\gamma_k / Q`
        self.d_tilde_gamma = gamma / self.Q

    def _tree_flatten(self):
        return ((self.gamma, self.d_tilde_gamma), (self.Q,))

    @classmethod
    def _tree_unflatten(cls, aux_data, children):
        obj = object.__new__(cls)
        obj.gamma, obj.d_tilde_gamma = children
        (obj.Q,) = aux_data
        return obj


class Scenario:
    """
    Everything of one realization that is known from second-order statistics
    only. This is the input for :py:func:`jaxcfm.channel.draw_channel` and
    :py:func:`jaxcfm.rmt.rmt_input`.
    """

    def __init__(
        self,
        config: SystemConfig,
        geometry: Geometry,
        large_scale: LargeScale,
        correlation: CorrelationSet,
        targets: TargetProfile,
    ):
        self.config = config
        self.geometry = geometry
        self.large_scale = large_scale
        self.correlation = correlation
        self.targets = targets

    @property
    def antennas(self) -> tuple[int, ...]:
        return self.config.M


for _cls in (Geometry, LargeScale, CorrelationSet, TargetProfile):
    jax.tree_util.register_pytree_node(
        _cls, _cls._tree_flatten, _cls._tree_unflatten
    )


def grid_sites(area_side: float, grid_points: int) -> jnp.ndarray:
    """
    Candidate AP positions: the centers of the cells of a regular
    ``sqrt(grid_points) x sqrt(grid_points)`` partition of the square
    ``[0, area_side]^2``.

    Examples
    --------
    >>> grid_sites(1000.0, 16)[:, 0].min()
    Array(125., dtype=float64)
    """
    n = math.isqrt(grid_points)
    if n * n != grid_points:
        raise ValueError(f"{grid_points} is not a square number.")
    coords = (jnp.arange(n) + 0.5) * area_side / n
    x, y = jnp.meshgrid(coords, coords, indexing="ij")
    return jnp.stack([x.ravel(), y.ravel()], axis=-1)


@partial(jax.jit, static_argnames=["n_users", "max_draws"])
def _place_users(
    key, ap_positions, area_side, min_distance, n_users, max_draws
):
    """
    Rejection sampling of users, uniform on the part of the square which
    keeps ``min_distance`` to every AP.
    """

    def place_one(user_key):
        def condition(state):
            _, placed, count = state
            return (~placed) & (count < max_draws)

        def body(state):
            _, _, count = state
            draw = jax.random.uniform(
                jax.random.fold_in(user_key, count),
                (2,),
                minval=0.0,
                maxval=area_side,
            )
            d = jnp.linalg.norm(ap_positions - draw[jnp.newaxis, :], axis=-1)
            return draw, jnp.all(d >= min_distance), count + 1

        init = (jnp.zeros(2), jnp.array(False), jnp.array(0))
        position, placed, _ = jax.lax.while_loop(condition, body, init)
        return position, placed

    return jax.vmap(place_one)(jax.random.split(key, n_users))


def generate_geometry(cfg: SystemConfig, key: jax.Array) -> Geometry:
    """
    Place the APs on ``cfg.L`` distinct, randomly chosen grid sites and drop
    ``cfg.K`` users uniformly in the area, keeping the minimal distance to
    all APs.

    Raises
    ------
    ValueError
        If there are more APs than grid sites.
    PlacementError
        If a user could not be placed within
        :py:data:`~.MAX_PLACEMENT_DRAWS` draws.
    """
    if cfg.L > cfg.grid_points:
        raise ValueError(
            f"Cannot place {cfg.L} APs on {cfg.grid_points} grid sites."
        )
    site_key, user_key = jax.random.split(key)
    area_side = cfg.area_side.m_as(ureg.meter)
    sites = grid_sites(area_side, cfg.grid_points)
    chosen = jax.random.permutation(site_key, cfg.grid_points)[: cfg.L]
    ap_positions = sites[chosen]
    user_positions, placed = _place_users(
        user_key,
        ap_positions,
        area_side,
        cfg.min_user_ap_distance.m_as(ureg.meter),
        n_users=cfg.K,
        max_draws=MAX_PLACEMENT_DRAWS,
    )
    if not bool(jnp.all(placed)):
        missing = [int(k) for k in jnp.where(~placed)[0]]
        raise PlacementError(
            f"Users {missing} could not be placed after "
            f"{MAX_PLACEMENT_DRAWS} draws each."
        )
    return Geometry(ap_positions, user_positions, chosen)


def path_loss_db(distance) -> jnp.ndarray:
    """
    Distance dependent part of the LSF in dB, for distances in meters.

    Examples
    --------
    >>> round(float(path_loss_db(100.0)), 6)
    -105.7
    """
    return -30.5 - 37.6 * jnp.log10(distance)


def compute_lsf(
    geom: Geometry, cfg: SystemConfig, key: jax.Array
) -> LargeScale:
    """
    Draw the large-scale fading,

    .. math::

       10\\log_{10}\\beta_{k,l} = -30.5 - 37.6\\log_{10} d_{k,l} + F_{k,l},

    with independent shadowing :math:`F_{k,l}` drawn from a zero-mean normal
    distribution with standard deviation ``cfg.shadow_std_db``.

    Raises
    ------
    ValueError
        If any user-AP distance is zero.
    """
    distance = geom.distances()
    if jnp.any(distance <= 0):
        raise ValueError("User-AP distances must be positive.")
    shadow_db = cfg.shadow_std_db * jax.random.normal(key, distance.shape)
    beta = db_to_linear(path_loss_db(distance) + shadow_db)
    return LargeScale(beta, shadow_db)


def exponential_correlation(m: int, rho: float) -> jnp.ndarray:
    """
    Exponential correlation model of a uniform linear array, entry ``(i, j)``
    is ``rho ** |i - j|``.

    Examples
    --------
    >>> exponential_correlation(2, 0.7)
    Array([[1. , 0.7],
           [0.7, 1. ]], dtype=float64)
    """
    if not 0 <= rho < 1:
        raise ValueError(f"rho must be in [0, 1), got {rho}.")
    if m < 1:
        raise ValueError("At least one antenna is required.")
    idx = jnp.arange(m)
    return jnp.power(float(rho), jnp.abs(idx[:, None] - idx[None, :]))


def correlation_set(cfg: SystemConfig) -> CorrelationSet:
    """
    Exponential correlation matrices for all APs of ``cfg``.
    """
    return CorrelationSet(
        [exponential_correlation(m, cfg.corr_coeff) for m in cfg.M]
    )


def draw_targets(cfg: SystemConfig, key: jax.Array) -> TargetProfile:
    """
    Draw the users' target SNRs uniformly (in dB) from
    ``cfg.target_snr_range_db``.
    """
    low, high = cfg.target_snr_range_db
    u_db = jax.random.uniform(key, (cfg.K,), minval=low, maxval=high)
    return TargetProfile(db_to_linear(u_db), cfg.Q)


def draw_scenario(
    cfg: SystemConfig, streams: dict[str, jax.Array]
) -> Scenario:
    """
    Draw geometry, LSF and targets of one realization.

    Parameters
    ----------
    cfg
        The system configuration.
    streams
        Random keys, as returned by :py:func:`~.realization_streams`.
    """
    geometry = generate_geometry(cfg, streams["geometry"])
    large_scale = compute_lsf(geometry, cfg, streams["shadow"])
    targets = draw_targets(cfg, streams["targets"])
    return Scenario(cfg, geometry, large_scale, correlation_set(cfg), targets)
