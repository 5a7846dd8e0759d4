"""
This submodule synthesizes the per-subcarrier downlink channels under the
per-AP Kronecker model,

.. math::

   \\mathbf{H}_{l,q} = \\mathbf{D}_{\\beta,l}^{1/2} \\mathbf{G}_{l,q}
   \\mathbf{C}_{\\mathrm{AP},l}^{1/2},

and normalizes them with the users' SNR targets and the noise power.

The aggregated channel of all APs is stored as one ``(Q, K, N)`` array; the
antennas of AP ``l`` are the contiguous columns given by
:py:func:`jaxcfm.helpers.ap_slices`.
"""

import logging
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as onp

from .helpers import ap_slices
from .scenario import Scenario, TargetProfile
from .units import Quantity, ureg

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

#: Eigenvalues of a correlation matrix below this value are set to zero when
#: taking the matrix square root.
EIGENVALUE_CLAMP = 1e-12

#: A channel matrix is accepted as full rank if its smallest singular value
#: exceeds this fraction of the largest.
RANK_TOLERANCE = 1e-10

#: Header of the binary channel dump
DUMP_MAGIC = b"CFCH"
DUMP_VERSION = 1


class RankDeficientChannelError(RuntimeError):
    """
    Raised if no full-rank channel could be drawn.
    """


class ChannelRealization:
    """
    The channels of all subcarriers of one realization.
    """

    def __init__(
        self,
        aggregated: jnp.ndarray,
        antennas: tuple[int, ...],
        beta: jnp.ndarray | None = None,
        redraws: int = 0,
    ):
        #: The channel matrices :math:`\mathbf{H}_q`, shape ``(Q, K, N)``
        self.aggregated: jnp.ndarray = jnp.asarray(aggregated)
        #: Number of antennas of every AP
        self.antennas: tuple[int, ...] = tuple(int(m) for m in antennas)
        #: The LSF coefficients the channel was drawn with, ``(K, L)``. Might
        #: be ``None`` for channels loaded from a dump.
        self.beta = None if beta is None else jnp.asarray(beta)
        #: How often a rank-deficient draw was rejected
        self.redraws: int = redraws
        if self.aggregated.shape[-1] != sum(self.antennas):
            raise ValueError(
                f"Channel with {self.aggregated.shape[-1]} columns does not "
                f"match antenna counts {self.antennas}."
            )

    @property
    def Q(self) -> int:
        return self.aggregated.shape[0]

    @property
    def K(self) -> int:
        return self.aggregated.shape[1]

    @property
    def N(self) -> int:
        return self.aggregated.shape[2]

    @property
    def per_ap(self) -> list[jnp.ndarray]:
        """
        The ``(Q, K, M_l)`` channel blocks of every AP.
        """
        return [self.aggregated[:, :, s] for s in ap_slices(self.antennas)]


class NormalizedChannel:
    """
    Channels normalized by noise and per-subcarrier targets,
    :math:`\\tilde{\\mathbf{H}}_q = \\sigma_\\nu^{-1}
    \\tilde{\\mathbf{D}}_\\gamma^{-1/2}\\mathbf{H}_q`.
    """

    def __init__(
        self,
        h_tilde: jnp.ndarray,
        antennas: tuple[int, ...],
        d_norm: jnp.ndarray | None = None,
    ):
        #: Normalized channels, shape ``(Q, K, N)``
        self.h_tilde: jnp.ndarray = jnp.asarray(h_tilde)
        self.antennas: tuple[int, ...] = tuple(antennas)
        #: Diagonals of :math:`\mathbf{D}_l`, shape ``(L, K)``
        self.d_norm = None if d_norm is None else jnp.asarray(d_norm)

    @property
    def K(self) -> int:
        return self.h_tilde.shape[1]

    @property
    def N(self) -> int:
        return self.h_tilde.shape[2]


def correlation_sqrt(c: jnp.ndarray) -> jnp.ndarray:
    """
    Hermitian square root of a correlation matrix, via its eigendecomposition.

    Raises
    ------
    ValueError
        If the matrix has a significantly negative eigenvalue.
    """
    eigval, eigvec = jnp.linalg.eigh(c)
    if jnp.min(eigval) < -1e-10 * jnp.max(jnp.abs(eigval)):
        raise ValueError(
            "Correlation matrix is not positive semi-definite, smallest "
            f"eigenvalue {float(jnp.min(eigval)):.3e}."
        )
    eigval = jnp.where(eigval < EIGENVALUE_CLAMP, 0.0, eigval)
    return (eigvec * jnp.sqrt(eigval)[jnp.newaxis, :]) @ eigvec.conj().T


def draw_small_scale(
    key: jax.Array, q_count: int, n_users: int, antennas: tuple[int, ...]
) -> list[jnp.ndarray]:
    """
    Independent standard complex Gaussian matrices :math:`\\mathbf{G}_{l,q}`,
    one ``(Q, K, M_l)`` array per AP.
    """
    blocks = []
    for l, m in enumerate(antennas):
        re_key, im_key = jax.random.split(jax.random.fold_in(key, l))
        shape = (q_count, n_users, m)
        blocks.append(
            (
                jax.random.normal(re_key, shape)
                + 1j * jax.random.normal(im_key, shape)
            )
            / jnp.sqrt(2.0)
        )
    return blocks


def compose_channel(
    small_scale: list[jnp.ndarray],
    beta: jnp.ndarray,
    c_sqrt: list[jnp.ndarray],
) -> jnp.ndarray:
    """
    Apply LSF and transmit correlation to the small-scale fading of every AP
    and concatenate the blocks in AP order.
    """
    blocks = [
        jnp.sqrt(beta[:, l])[jnp.newaxis, :, jnp.newaxis] * (g @ c_sqrt[l])
        for l, g in enumerate(small_scale)
    ]
    return jnp.concatenate(blocks, axis=-1)


def full_row_rank(aggregated: jnp.ndarray) -> jnp.ndarray:
    """
    Per subcarrier, whether :math:`\\mathbf{H}_q` has full row rank.
    """
    s = jnp.linalg.svd(aggregated, compute_uv=False)
    return s[..., -1] > RANK_TOLERANCE * s[..., 0]


def draw_channel(
    scenario: Scenario,
    q_count: int,
    key: jax.Array,
    max_redraws: int = 100,
) -> ChannelRealization:
    """
    Draw the channels of ``q_count`` independent subcarriers.

    Draws in which any subcarrier is rank deficient are rejected and redrawn
    with a fresh key, the number of redraws is kept in
    :py:attr:`ChannelRealization.redraws`.

    Raises
    ------
    ValueError
        If the dimensions of the LSF and the correlation matrices do not match
        the configuration.
    RankDeficientChannelError
        If ``max_redraws`` attempts were all rank deficient.
    """
    cfg = scenario.config
    beta = scenario.large_scale.beta
    if beta.shape != (cfg.K, cfg.L):
        raise ValueError(
            f"LSF of shape {beta.shape} does not match K={cfg.K}, L={cfg.L}."
        )
    if scenario.correlation.antennas != cfg.M:
        raise ValueError(
            f"Correlation matrices for {scenario.correlation.antennas} "
            f"antennas do not match M={cfg.M}."
        )
    c_sqrt = [correlation_sqrt(c) for c in scenario.correlation.c_ap]
    for attempt in range(max_redraws + 1):
        attempt_key = key if attempt == 0 else jax.random.fold_in(key, attempt)
        g = draw_small_scale(attempt_key, q_count, cfg.K, cfg.M)
        aggregated = compose_channel(g, beta, c_sqrt)
        rank_ok = full_row_rank(aggregated)
        if bool(jnp.all(rank_ok)):
            return ChannelRealization(aggregated, cfg.M, beta, attempt)
        logger.info(
            f"Rank deficient channel on subcarriers "
            f"{[int(q) for q in jnp.where(~rank_ok)[0]]}, redrawing."
        )
    raise RankDeficientChannelError(
        f"No full-rank channel after {max_redraws} redraws."
    )


def _noise_watt(noise_power: Quantity | float) -> float:
    if isinstance(noise_power, Quantity):
        return float(noise_power.m_as(ureg.watt))
    return float(noise_power)


def zf_targets(
    targets: TargetProfile, noise_power: Quantity | float
) -> jnp.ndarray:
    """
    Diagonal of the zero-forcing constraint,
    :math:`\\sigma_\\nu \\sqrt{\\gamma_k / Q}`.
    """
    noise = _noise_watt(noise_power)
    if noise <= 0:
        raise ValueError("The noise power must be positive.")
    return jnp.sqrt(noise * targets.d_tilde_gamma)


def normalize(
    ch: ChannelRealization,
    targets: TargetProfile,
    noise_power: Quantity | float,
) -> NormalizedChannel:
    """
    Normalize a channel with the noise power and the users' targets.

    Row ``k`` of every :math:`\\mathbf{H}_q` is divided by
    :math:`\\sigma_\\nu\\sqrt{\\gamma_k / Q}`. If the channel carries its LSF
    coefficients, the diagonals
    :math:`[\\mathbf{D}_l]_{k} = \\beta_{k,l} / (\\sigma_\\nu^2\\gamma_k/Q)`
    are computed as well.
    """
    if jnp.any(targets.gamma <= 0):
        raise ValueError("Target SNRs must be positive.")
    rhs = zf_targets(targets, noise_power)
    h_tilde = ch.aggregated / rhs[jnp.newaxis, :, jnp.newaxis]
    d_norm = None
    if ch.beta is not None:
        d_norm = ch.beta.T / (rhs**2)[jnp.newaxis, :]
    return NormalizedChannel(h_tilde, ch.antennas, d_norm)


def dump_channel(ch: ChannelRealization, path: str | Path) -> None:
    """
    Write a channel to a little-endian binary file.

    The layout is the magic ``b"CFCH"``, then ``uint32`` values for the
    version, ``K``, ``L``, ``Q`` and the ``L`` antenna counts, followed by the
    blocks of every AP (outer) and subcarrier (inner), each ``K x M_l``
    row-major ``complex64``.

    The LSF coefficients are not stored.
    """
    header = onp.array(
        [DUMP_VERSION, ch.K, len(ch.antennas), ch.Q, *ch.antennas],
        dtype="<u4",
    )
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(header.tobytes())
        for block in ch.per_ap:
            f.write(onp.ascontiguousarray(block, dtype="<c8").tobytes())


def load_channel(path: str | Path) -> ChannelRealization:
    """
    Read a channel written by :py:func:`~.dump_channel`.
    """
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != DUMP_MAGIC:
        raise ValueError(f"{path} is not a channel dump.")
    version, n_users, n_aps, q_count = onp.frombuffer(
        data, dtype="<u4", count=4, offset=4
    )
    if version != DUMP_VERSION:
        raise ValueError(f"Unsupported channel dump version {version}.")
    antennas = tuple(
        int(m)
        for m in onp.frombuffer(data, dtype="<u4", count=n_aps, offset=20)
    )
    offset = 20 + 4 * int(n_aps)
    blocks = []
    for m in antennas:
        count = int(q_count) * int(n_users) * m
        block = onp.frombuffer(data, dtype="<c8", count=count, offset=offset)
        blocks.append(block.reshape(int(q_count), int(n_users), m))
        offset += 8 * count
    aggregated = jnp.asarray(onp.concatenate(blocks, axis=-1), jnp.complex128)
    return ChannelRealization(aggregated, antennas)
