"""
Deterministic equivalents of the antenna power fixed point for large
antenna arrays and many users.

Assuming a uniform power :math:`p_l` on all antennas of AP :math:`l`, the
per-antenna band powers of the PA-consumption-optimal precoder concentrate
around :math:`\\bar{p}_l`, which depends only on the second-order statistics
of the channel: the correlation eigenvalues :math:`\\xi_{l,m}`, the ratios
:math:`c_l = K / M_l` and the diagonals of
:math:`\\mathbf{D}_l = \\sigma_\\nu^{-2}\\tilde{\\mathbf{D}}_\\gamma^{-1}
\\mathbf{D}_{\\beta,l}`.

With

.. math::

   e_l = \\frac{1}{M_l}\\sum_m \\frac{\\xi_{l,m}}{1 + c_l\\xi_{l,m}b_l},
   \\qquad
   [\\mathbf{B}]_k = \\sum_l e_l\\sqrt{p_l}[\\mathbf{D}_l]_k,

the auxiliaries :math:`b_l` solve
:math:`b_l = \\frac{1}{K}\\sum_k \\sqrt{p_l}[\\mathbf{D}_l]_k/[\\mathbf{B}]_k`
(:py:func:`~.solve_b`), their derivatives :math:`\\dot{b}_l` solve a linear
system (:py:func:`~.solve_b_dot`) and

.. math::

   \\bar{p}_l = Q\\sqrt{p_l}\\,c_l\\dot{b}_l\\frac{1}{M_l^2}
   \\sum_m \\frac{\\xi_{l,m}}{(1 + c_l b_l\\xi_{l,m})^2}

(:py:func:`~.pbar_map`). The fixed point :math:`p_l = \\bar{p}_l` gives the
AP powers, and APs with vanishing power are switched off.

Eigenvalues are stored zero-padded to the largest AP; a zero eigenvalue does
not contribute to any of the sums.
"""

import logging
from functools import partial

import jax
import jax.numpy as jnp
import numpy as onp

from .channel import (
    ChannelRealization,
    draw_channel,
    normalize,
)
from .helpers import (
    expand_ap_values,
    relative_change_above,
    relative_sup_change,
)
from .precoding import (
    AntennaPowerVector,
    FixedPointReport,
    PrecoderSet,
    antenna_power_map,
    optimal_precoder,
)
from .scenario import Scenario, TargetProfile
from .units import Quantity, ureg

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

#: Tolerance of the auxiliaries b inside the AP power iteration
INNER_TOLERANCE = 1e-12


class RmtConvergenceError(RuntimeError):
    """
    Raised if the auxiliaries :math:`b_l` do not converge.
    """


class InvalidRegimeError(RuntimeError):
    """
    Raised if :math:`\\mathbf{I} - \\mathbf{A}` is singular.
    """


class InfeasibleActivationError(ValueError):
    """
    Raised if the active APs cannot serve all users.
    """


class RmtInput:
    """
    Second-order statistics entering the deterministic equivalents.
    """

    def __init__(
        self,
        d_norm: jnp.ndarray,
        xi: jnp.ndarray,
        antennas: tuple[int, ...],
        q_count: int,
    ):
        d_norm = jnp.asarray(d_norm, dtype=float)
        xi = jnp.asarray(xi, dtype=float)
        antennas = tuple(int(m) for m in antennas)
        if d_norm.ndim != 2 or d_norm.shape[0] != len(antennas):
            raise ValueError(
                f"d_norm must have shape (L, K) with L={len(antennas)}, got "
                f"{d_norm.shape}."
            )
        if xi.shape != (len(antennas), max(antennas)):
            raise ValueError(
                f"xi must have shape (L, max(M_l)), got {xi.shape}."
            )
        if jnp.any(d_norm <= 0):
            raise ValueError("All entries of d_norm must be positive.")
        if jnp.any(xi < 0):
            raise ValueError("Correlation eigenvalues must not be negative.")
        m = jnp.asarray(antennas, dtype=float)
        if not jnp.allclose(jnp.sum(xi, axis=1), m, rtol=1e-8):
            raise ValueError(
                "Eigenvalues of every AP must sum up to its antenna count."
            )
        #: Diagonals of :math:`\mathbf{D}_l`, shape ``(L, K)``
        self.d_norm: jnp.ndarray = d_norm
        #: Zero-padded eigenvalues, shape ``(L, max(M_l))``
        self.xi: jnp.ndarray = xi
        #: Antenna count of every AP
        self.antennas: tuple[int, ...] = antennas
        #: Number of subcarriers
        self.q_count: int = int(q_count)

    @classmethod
    def from_eigenvalues(
        cls, d_norm, eigenvalues: list, q_count: int
    ) -> "RmtInput":
        """
        Build the input from one eigenvalue vector per AP, of possibly
        different lengths.
        """
        antennas = tuple(len(xi) for xi in eigenvalues)
        width = max(antennas)
        xi = jnp.stack(
            [
                jnp.pad(jnp.asarray(xi, dtype=float), (0, width - len(xi)))
                for xi in eigenvalues
            ]
        )
        return cls(d_norm, xi, antennas, q_count)

    @property
    def L(self) -> int:
        return len(self.antennas)

    @property
    def K(self) -> int:
        return self.d_norm.shape[1]

    @property
    def m(self) -> jnp.ndarray:
        return jnp.asarray(self.antennas, dtype=float)

    @property
    def c(self) -> jnp.ndarray:
        """
        :math:`c_l = K / M_l`
        """
        return self.K / self.m


class RmtAuxiliaries:
    """
    Intermediate results of the deterministic equivalent.
    """

    def __init__(self, b, b_dot, a_matrix, b_diag):
        #: :math:`b_l`
        self.b: jnp.ndarray = b
        #: :math:`\dot{b}_l`
        self.b_dot: jnp.ndarray = b_dot
        #: The matrix :math:`\mathbf{A}` of the linear system for
        #: :math:`\dot{b}`
        self.a_matrix: jnp.ndarray = a_matrix
        #: Diagonal of :math:`\mathbf{B}`
        self.b_diag: jnp.ndarray = b_diag


class ApPowerVector:
    """
    Per-antenna band power of every AP, in Watts, and the active APs.
    """

    def __init__(self, p_ap: jnp.ndarray, active_set: tuple[int, ...]):
        p_ap = jnp.asarray(p_ap, dtype=float)
        if jnp.any(p_ap < 0):
            raise ValueError("AP powers must not be negative.")
        #: Power of every antenna of AP ``l``
        self.p_ap: jnp.ndarray = p_ap
        #: Indices of the active APs
        self.active_set: tuple[int, ...] = tuple(int(l) for l in active_set)


def rmt_input(scenario: Scenario) -> RmtInput:
    """
    Collect the statistics of a scenario needed by the deterministic
    equivalents. No channel realization is involved.
    """
    cfg = scenario.config
    rhs2 = cfg.noise_power.m_as(ureg.watt) * scenario.targets.d_tilde_gamma
    d_norm = scenario.large_scale.beta.T / rhs2[jnp.newaxis, :]
    return RmtInput(
        d_norm,
        scenario.correlation.padded_eigenvalues(),
        cfg.M,
        cfg.Q,
    )


def _e(xi, m, c, b):
    return jnp.sum(xi / (1 + c[:, None] * xi * b[:, None]), axis=1) / m


def _b_diag(d, xi, m, c, sqrt_p, b):
    return jnp.sum((_e(xi, m, c, b) * sqrt_p)[:, None] * d, axis=0)


def _b_map(d, xi, m, c, sqrt_p, b):
    big_b = _b_diag(d, xi, m, c, sqrt_p, b)
    return sqrt_p * jnp.mean(d / big_b[None, :], axis=1)


@partial(jax.jit, static_argnames=["max_iter"])
def _solve_b_kernel(d, xi, m, c, sqrt_p, b0, tol, max_iter):
    def condition(state):
        _, residual, i = state
        return (i < max_iter) & (residual > tol)

    def step(state):
        b, _, i = state
        b_new = _b_map(d, xi, m, c, sqrt_p, b)
        return b_new, relative_sup_change(b_new, b), i + 1

    init = (b0, jnp.array(jnp.inf), jnp.array(0))
    return jax.lax.while_loop(condition, step, init)


@jax.jit
def _b_dot_kernel(d, xi, m, c, sqrt_p, b):
    big_b = _b_diag(d, xi, m, c, sqrt_p, b)
    n_users = d.shape[1]
    f = (
        jnp.sum(
            c[:, None] * xi**2 / (1 + c[:, None] * xi * b[:, None]) ** 2,
            axis=1,
        )
        / m
    )
    dd = (d / big_b[None, :] ** 2) @ d.T / n_users
    a_matrix = sqrt_p[:, None] * dd * (sqrt_p * f)[None, :]
    rhs = sqrt_p * jnp.mean(d / big_b[None, :] ** 2, axis=1)
    eye = jnp.eye(len(m))
    b_dot = jnp.linalg.solve(eye - a_matrix, rhs)
    return b_dot, a_matrix, big_b, jnp.linalg.cond(eye - a_matrix)


def _pbar(xi, m, c, sqrt_p, b, b_dot, q_count):
    s = jnp.sum(xi / (1 + c[:, None] * b[:, None] * xi) ** 2, axis=1)
    return q_count * sqrt_p * c * b_dot * s / m**2


def _check_powers(p_ap) -> jnp.ndarray:
    p_ap = jnp.asarray(p_ap, dtype=float)
    if jnp.any(p_ap < 0):
        raise ValueError("AP powers must not be negative.")
    if not jnp.any(p_ap > 0):
        raise ValueError("At least one AP needs a positive power.")
    return p_ap


def solve_b(
    inp: RmtInput, p_ap, tol: float = 1e-12, max_iter: int = 10_000
) -> jnp.ndarray:
    """
    Solve the coupled equations for :math:`b_l` by Picard iteration from
    :math:`b_l = 1`. APs with zero power get :math:`b_l = 0`.

    Raises
    ------
    ValueError
        If all powers are zero.
    RmtConvergenceError
        If the iteration did not converge within ``max_iter`` steps.
    """
    sqrt_p = jnp.sqrt(_check_powers(p_ap))
    b, residual, iterations = _solve_b_kernel(
        inp.d_norm,
        inp.xi,
        inp.m,
        inp.c,
        sqrt_p,
        jnp.ones(inp.L),
        tol,
        max_iter=max_iter,
    )
    if not bool(residual <= tol):
        raise RmtConvergenceError(
            f"b did not converge after {int(iterations)} iterations, "
            f"residual {float(residual):.3e}."
        )
    return b


def solve_b_dot(inp: RmtInput, p_ap, b) -> RmtAuxiliaries:
    """
    Assemble :math:`\\mathbf{A}` and solve
    :math:`(\\mathbf{I} - \\mathbf{A})\\dot{\\mathbf{b}} =
    [\\frac{1}{K}\\mathrm{tr}(\\sqrt{p_l}\\mathbf{D}_l\\mathbf{B}^{-2})]_l`,
    with

    .. math::

       [\\mathbf{A}]_{l,l'} = \\frac{1}{K}\\sqrt{p_l p_{l'}} f_{l'}
       \\mathrm{tr}(\\mathbf{D}_l\\mathbf{D}_{l'}\\mathbf{B}^{-2}),\\qquad
       f_l = \\frac{1}{M_l}\\sum_m
       \\frac{c_l\\xi_{l,m}^2}{(1 + c_l\\xi_{l,m}b_l)^2}.

    Raises
    ------
    InvalidRegimeError
        If :math:`\\mathbf{I} - \\mathbf{A}` is singular.
    """
    sqrt_p = jnp.sqrt(_check_powers(p_ap))
    b = jnp.asarray(b, dtype=float)
    b_dot, a_matrix, big_b, cond = _b_dot_kernel(
        inp.d_norm, inp.xi, inp.m, inp.c, sqrt_p, b
    )
    if not bool(jnp.all(jnp.isfinite(b_dot))) or float(cond) > 1e12:
        raise InvalidRegimeError(
            f"I - A is singular (condition number {float(cond):.3e})."
        )
    return RmtAuxiliaries(b, b_dot, a_matrix, big_b)


def pbar_map(inp: RmtInput, p_ap) -> jnp.ndarray:
    """
    The deterministic equivalent :math:`\\bar{p}_l` of the per-antenna band
    power of AP ``l``, for uniform powers ``p_ap`` per AP.

    The map is invariant to a common scaling of ``p_ap``.
    """
    p_ap = _check_powers(p_ap)
    b = solve_b(inp, p_ap)
    aux = solve_b_dot(inp, p_ap, b)
    return _pbar(
        inp.xi, inp.m, inp.c, jnp.sqrt(p_ap), b, aux.b_dot, inp.q_count
    )


@partial(jax.jit, static_argnames=["max_iter", "max_inner"])
def _pbar_fixed_point(
    d, xi, m, c, q_count, tol, floor_rel, threshold_rel, max_iter, max_inner
):
    trace = jnp.full(max_iter, jnp.nan)

    def condition(state):
        p, residual, i = state[:3]
        return (i < max_iter) & (residual > tol) & jnp.all(jnp.isfinite(p))

    def step(state):
        p, _, i, trace, b, _ = state
        sqrt_p = jnp.sqrt(jnp.maximum(p, floor_rel * jnp.max(p)))
        # b moves little between outer steps
        b, b_residual, _ = _solve_b_kernel(
            d, xi, m, c, sqrt_p, b, INNER_TOLERANCE, max_iter=max_inner
        )
        b_dot, _, _, _ = _b_dot_kernel(d, xi, m, c, sqrt_p, b)
        p_new = _pbar(xi, m, c, sqrt_p, b, b_dot, q_count)
        residual = relative_change_above(p_new, p, threshold_rel)
        trace = trace.at[i].set(jnp.sum(m * jnp.sqrt(p_new)))
        return (
            p_new,
            residual,
            i + 1,
            trace,
            b,
            b_residual,
        )

    init = (
        jnp.ones(len(m)),
        jnp.array(jnp.inf),
        jnp.array(0),
        trace,
        jnp.ones(len(m)),
        jnp.array(0.0),
    )
    return jax.lax.while_loop(condition, step, init)


def select_active_aps(
    p_ap,
    antennas: tuple[int, ...],
    n_users: int,
    threshold_rel: float = 1e-6,
) -> tuple[int, ...]:
    """
    APs whose power exceeds ``threshold_rel`` times the largest AP power.

    Raises
    ------
    InfeasibleActivationError
        If no AP is active, or if the active APs have ``n_users`` antennas or
        less in total.

    Examples
    --------
    >>> select_active_aps(jnp.array([0.5, 1e-12]), (8, 8), 1)
    (0,)
    """
    p_ap = jnp.asarray(p_ap, dtype=float)
    if not bool(jnp.max(p_ap) > 0):
        raise InfeasibleActivationError("No AP has a positive power.")
    active = tuple(
        int(l) for l in jnp.where(p_ap > threshold_rel * jnp.max(p_ap))[0]
    )
    active_antennas = sum(antennas[l] for l in active)
    if active_antennas <= n_users:
        raise InfeasibleActivationError(
            f"The active APs {active} have {active_antennas} antennas, which "
            f"cannot serve {n_users} users."
        )
    return active


def solve_pbar(
    inp: RmtInput,
    tol: float = 1e-8,
    max_iter: int = 20_000,
    floor_rel: float = 1e-14,
    mask_rel: float = 1e-9,
    threshold_rel: float = 1e-6,
    max_inner: int = 10_000,
) -> tuple[ApPowerVector, FixedPointReport]:
    """
    Solve :math:`p_l = \\bar{p}_l(\\mathbf{p})` by Picard iteration, starting
    from 1 W per AP, and select the active APs.

    Flooring during the iteration and masking afterwards follow
    :py:func:`jaxcfm.precoding.solve_antenna_powers`. The objective trace
    holds :math:`\\sum_l M_l\\sqrt{p_l}`.

    The iteration stops once every AP power above ``threshold_rel`` times the
    largest one changes by less than ``tol``, relative to itself. APs which
    are switched off have to decay below the activation threshold first.
    ``max_inner`` caps the iterations for the auxiliaries :math:`b_l` in
    every step; they start from the previous step.

    Raises
    ------
    InfeasibleActivationError
        If the network has not more antennas than users, or if the active APs
        cannot serve all users.
    """
    if sum(inp.antennas) <= inp.K:
        raise InfeasibleActivationError(
            f"{sum(inp.antennas)} antennas cannot serve {inp.K} users."
        )
    p, residual, iterations, trace, _, inner_residual = _pbar_fixed_point(
        inp.d_norm,
        inp.xi,
        inp.m,
        inp.c,
        inp.q_count,
        tol,
        floor_rel,
        threshold_rel,
        max_iter=max_iter,
        max_inner=max_inner,
    )
    if not bool(jnp.all(jnp.isfinite(p))):
        raise InvalidRegimeError("AP power iteration did not stay finite.")
    converged = bool(residual <= tol)
    if not converged:
        logger.warning(
            f"AP power iteration not converged after {int(iterations)} "
            f"iterations, residual {float(residual):.3e}."
        )
    if not bool(inner_residual <= INNER_TOLERANCE):
        logger.warning(
            "Auxiliaries b not converged in the last AP power iteration, "
            f"residual {float(inner_residual):.3e}."
        )
    p = jnp.where(p < mask_rel * jnp.max(p), 0.0, p)
    active = select_active_aps(p, inp.antennas, inp.K, threshold_rel)
    p = jnp.zeros_like(p).at[jnp.asarray(active)].set(p[jnp.asarray(active)])
    logger.debug(f"Active APs: {active}")
    report = FixedPointReport(
        iterations, residual, converged, onp.asarray(trace)[: int(iterations)]
    )
    return ApPowerVector(p, active), report


def expand_ap_powers(
    ap_powers: ApPowerVector, antennas: tuple[int, ...]
) -> AntennaPowerVector:
    """
    Per-antenna powers with the power of every active AP on each of its
    antennas, and zero on inactive APs.
    """
    active = jnp.zeros(len(antennas), bool).at[
        jnp.asarray(ap_powers.active_set, dtype=int)
    ].set(True)
    p_ap = jnp.where(active, ap_powers.p_ap, 0.0)
    return AntennaPowerVector(expand_ap_values(p_ap, antennas))


def rmt_induced_precoder(
    ch: ChannelRealization,
    targets: TargetProfile,
    noise_power: Quantity | float,
    ap_powers: ApPowerVector,
) -> PrecoderSet:
    """
    The PA-consumption-optimal precoder evaluated at the AP powers of the
    deterministic equivalent. Only the instantaneous channels of active APs
    enter; the rows of inactive APs are zero.
    """
    if not ap_powers.active_set:
        raise InfeasibleActivationError("No active AP.")
    return optimal_precoder(
        ch,
        targets,
        noise_power,
        expand_ap_powers(ap_powers, ch.antennas),
        kind="rmt-induced",
    )


def monte_carlo_ap_powers(
    scenario: Scenario,
    p_ap,
    key: jax.Array,
    n_draws: int = 20,
) -> jnp.ndarray:
    """
    Monte-Carlo counterpart of :py:func:`~.pbar_map`: the exact antenna power
    map evaluated at the block-uniform powers ``p_ap`` on random channels,
    averaged over the antennas of every AP and over ``n_draws`` draws.
    """
    p_ap = _check_powers(p_ap)
    antennas = scenario.config.M
    p = expand_ap_values(p_ap, antennas)
    ap_index = jnp.repeat(jnp.arange(len(antennas)), jnp.asarray(antennas))
    m = jnp.asarray(antennas, dtype=float)
    total = jnp.zeros(len(antennas))
    for i in range(n_draws):
        ch = draw_channel(
            scenario, scenario.config.Q, jax.random.fold_in(key, i)
        )
        nch = normalize(ch, scenario.targets, scenario.config.noise_power)
        f = antenna_power_map(nch.h_tilde, p)
        total = total + jax.ops.segment_sum(
            f, ap_index, num_segments=len(antennas)
        ) / m
    return jnp.where(p_ap > 0, total / n_draws, 0.0)
