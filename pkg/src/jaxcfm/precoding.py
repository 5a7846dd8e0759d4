"""
Zero-forcing precoders on exact channel realizations.

Two precoders fulfill the per-subcarrier zero-forcing (ZF) constraint
:math:`\\mathbf{H}_q\\mathbf{W}_q =
\\sigma_\\nu\\tilde{\\mathbf{D}}_\\gamma^{1/2}`:

* the conventional ZF precoder (pseudo-inverse), minimizing the transmit
  power on each subcarrier, and
* the precoder minimizing the power consumed by the power amplifiers (PAs),

  .. math::

     \\mathbf{W}_q = \\mathbf{D}_p^{1/2}\\mathbf{H}_q^H
     \\left(\\mathbf{H}_q\\mathbf{D}_p^{1/2}\\mathbf{H}_q^H\\right)^{-1}
     \\sigma_\\nu\\tilde{\\mathbf{D}}_\\gamma^{1/2},

  where the per-antenna band powers :math:`p_n` solve the fixed point
  :math:`p_n = \\sum_q [\\mathbf{D}_p^{1/2}\\tilde{\\mathbf{H}}_q^H
  (\\tilde{\\mathbf{H}}_q\\mathbf{D}_p^{1/2}\\tilde{\\mathbf{H}}_q^H)^{-2}
  \\tilde{\\mathbf{H}}_q\\mathbf{D}_p^{1/2}]_{nn}`, see
  :py:func:`~.solve_antenna_powers`.

All inversions are linear solves against row-equilibrated Gram matrices.
"""

import logging
from functools import partial
from typing import Literal

import jax
import jax.numpy as jnp
import numpy as onp

from .channel import ChannelRealization, NormalizedChannel, zf_targets
from .helpers import relative_sup_change
from .scenario import TargetProfile
from .units import Quantity

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)

PrecoderKind = Literal[
    "conventional", "consumed-power-optimal", "rmt-induced"
]

#: Relative ZF residual above which a Gram matrix is reported as singular
SINGULAR_RESIDUAL = 1e-6


class SingularGramError(RuntimeError):
    """
    Raised if the Gram matrix of a subcarrier cannot be inverted.
    """

    def __init__(self, subcarrier: int, message: str | None = None):
        #: Index of the first offending subcarrier
        self.subcarrier = subcarrier
        super().__init__(
            message or f"Singular Gram matrix on subcarrier {subcarrier}."
        )


class SingularityGuardError(RuntimeError):
    """
    Raised if fewer antennas than users keep a non-zero power.
    """


class PrecoderSet:
    """
    One ``(N, K)`` precoding matrix per subcarrier.
    """

    def __init__(self, w: jnp.ndarray, kind: PrecoderKind):
        #: The precoders, shape ``(Q, N, K)``
        self.w: jnp.ndarray = jnp.asarray(w)
        #: Which method generated the precoders
        self.kind: PrecoderKind = kind

    @property
    def Q(self) -> int:
        return self.w.shape[0]


class AntennaPowerVector:
    """
    Band transmit powers of all antennas, in Watts.
    """

    def __init__(
        self, p: jnp.ndarray, active_mask: jnp.ndarray | None = None
    ):
        p = jnp.asarray(p, dtype=float)
        if jnp.any(p < 0):
            raise ValueError("Antenna powers must not be negative.")
        #: Transmit power of every antenna, summed over all subcarriers
        self.p: jnp.ndarray = p
        #: Which antennas are switched on
        self.active_mask: jnp.ndarray = (
            p > 0 if active_mask is None else jnp.asarray(active_mask, bool)
        )

    @classmethod
    def with_floor(cls, p: jnp.ndarray, floor_rel: float):
        """
        Report every entry below ``floor_rel * max(p)`` as exactly zero and
        inactive.
        """
        p = jnp.asarray(p, dtype=float)
        p = jnp.where(p < floor_rel * jnp.max(p), 0.0, p)
        return cls(p)

    @property
    def effective(self) -> jnp.ndarray:
        """
        The powers with every inactive antenna set to zero.
        """
        return jnp.where(self.active_mask, self.p, 0.0)

    @property
    def active_count(self) -> int:
        return int(jnp.sum(self.active_mask))

    def __len__(self) -> int:
        return len(self.p)


class FixedPointReport:
    """
    Diagnostics of a fixed-point solve.
    """

    def __init__(
        self,
        iterations: int,
        final_residual: float,
        converged: bool,
        objective_trace: onp.ndarray,
        damping: float = 1.0,
    ):
        #: Number of performed iterations
        self.iterations = int(iterations)
        #: Relative sup-norm change in the last iteration
        self.final_residual = float(final_residual)
        self.converged = bool(converged)
        #: The objective after every iteration
        self.objective_trace = onp.asarray(objective_trace)
        #: The damping factor the result was obtained with
        self.damping = float(damping)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "damping": self.damping,
        }


def weighted_pseudo_inverse(
    h: jnp.ndarray, weights: jnp.ndarray, rhs: jnp.ndarray
) -> jnp.ndarray:
    """
    :math:`\\mathrm{diag}(w)\\mathbf{H}^H
    (\\mathbf{H}\\,\\mathrm{diag}(w)\\mathbf{H}^H)^{-1}\\mathrm{diag}(r)`
    for one ``(K, N)`` matrix.

    The rows of ``h`` are scaled to unit norm before the Gram matrix is
    formed and the scaling is undone on the right-hand side.
    """
    scale = 1.0 / jnp.linalg.norm(h, axis=1)
    hs = h * scale[:, jnp.newaxis]
    hw = hs * weights[jnp.newaxis, :]
    gram = hw @ hs.conj().T
    x = jnp.linalg.solve(gram, jnp.diag((scale * rhs).astype(gram.dtype)))
    return hw.conj().T @ x


_batched_pseudo_inverse = jax.jit(
    jax.vmap(weighted_pseudo_inverse, in_axes=(0, None, None))
)


def zf_residuals(
    h: jnp.ndarray, w: jnp.ndarray, rhs: jnp.ndarray
) -> jnp.ndarray:
    """
    Relative violation of the ZF constraint on every subcarrier,
    :math:`\\|\\mathbf{H}_q\\mathbf{W}_q - \\mathrm{diag}(r)\\|_F /
    \\|\\mathrm{diag}(r)\\|_F`.
    """
    target = jnp.diag(rhs)
    err = jnp.linalg.norm(h @ w - target[jnp.newaxis], axis=(1, 2))
    return err / jnp.linalg.norm(target)


def zf_violation(
    ch: ChannelRealization,
    ws: PrecoderSet,
    targets: TargetProfile,
    noise_power: Quantity | float,
) -> float:
    """
    Largest relative ZF residual of a precoder set over all subcarriers.
    """
    res = zf_residuals(
        ch.aggregated, ws.w, zf_targets(targets, noise_power)
    )
    return float(jnp.max(res))


def _checked_precoder(h, weights, rhs, kind) -> PrecoderSet:
    w = _batched_pseudo_inverse(h, weights, rhs)
    res = zf_residuals(h, w, rhs)
    bad = ~jnp.isfinite(res) | (res > SINGULAR_RESIDUAL)
    if jnp.any(bad):
        q = int(jnp.argmax(bad))
        raise SingularGramError(
            q,
            f"Gram matrix of subcarrier {q} is singular, ZF residual "
            f"{float(res[q]):.3e}.",
        )
    return PrecoderSet(w, kind)


def zf_precoder(
    ch: ChannelRealization,
    targets: TargetProfile,
    noise_power: Quantity | float,
) -> PrecoderSet:
    """
    The conventional per-subcarrier ZF precoder,
    :math:`\\mathbf{W}_q = \\mathbf{H}_q^H(\\mathbf{H}_q\\mathbf{H}_q^H)^{-1}
    \\sigma_\\nu\\tilde{\\mathbf{D}}_\\gamma^{1/2}`.

    Raises
    ------
    SingularGramError
        If :math:`\\mathbf{H}_q\\mathbf{H}_q^H` is singular for some ``q``.
    """
    rhs = zf_targets(targets, noise_power)
    return _checked_precoder(
        ch.aggregated, jnp.ones(ch.N), rhs, "conventional"
    )


def optimal_precoder(
    ch: ChannelRealization,
    targets: TargetProfile,
    noise_power: Quantity | float,
    p: AntennaPowerVector,
    kind: PrecoderKind = "consumed-power-optimal",
) -> PrecoderSet:
    """
    The precoder minimizing the PA consumption for given antenna powers,
    :math:`\\mathbf{W}_q = \\mathbf{D}_p^{1/2}\\mathbf{H}_q^H
    (\\mathbf{H}_q\\mathbf{D}_p^{1/2}\\mathbf{H}_q^H)^{-1}
    \\sigma_\\nu\\tilde{\\mathbf{D}}_\\gamma^{1/2}`.

    Inactive antennas and antennas with zero power get all-zero precoder
    rows.

    Raises
    ------
    SingularityGuardError
        If fewer than ``K`` antennas have a positive power.
    SingularGramError
        If the weighted Gram matrix is singular for some ``q``.
    """
    powers = p.effective
    if int(jnp.sum(powers > 0)) < ch.K:
        raise SingularityGuardError(
            f"Only {int(jnp.sum(powers > 0))} active antennas with positive "
            f"power for {ch.K} users."
        )
    rhs = zf_targets(targets, noise_power)
    return _checked_precoder(ch.aggregated, jnp.sqrt(powers), rhs, kind)


def per_antenna_powers(ws: PrecoderSet) -> AntennaPowerVector:
    """
    :math:`p_n = \\sum_q [\\mathbf{W}_q\\mathbf{W}_q^H]_{nn}`.
    """
    return AntennaPowerVector(jnp.sum(jnp.abs(ws.w) ** 2, axis=(0, 2)))


@jax.jit
def antenna_power_map(h_tilde: jnp.ndarray, p: jnp.ndarray) -> jnp.ndarray:
    """
    Right-hand side of the antenna power fixed point,

    .. math::

       F_n(\\mathbf{p}) = \\sum_q \\left[\\mathbf{D}_p^{1/2}
       \\tilde{\\mathbf{H}}_q^H
       (\\tilde{\\mathbf{H}}_q\\mathbf{D}_p^{1/2}\\tilde{\\mathbf{H}}_q^H)^{-2}
       \\tilde{\\mathbf{H}}_q\\mathbf{D}_p^{1/2}\\right]_{nn}.

    This is the squared row norm of the precoder
    :math:`\\mathbf{D}_p^{1/2}\\tilde{\\mathbf{H}}_q^H
    (\\tilde{\\mathbf{H}}_q\\mathbf{D}_p^{1/2}\\tilde{\\mathbf{H}}_q^H)^{-1}`,
    summed over the subcarriers in order. :math:`F` is homogeneous of degree
    zero in ``p``.
    """
    ones = jnp.ones(h_tilde.shape[1])
    w = jax.vmap(weighted_pseudo_inverse, in_axes=(0, None, None))(
        h_tilde, jnp.sqrt(p), ones
    )
    return jnp.sum(jnp.abs(w) ** 2, axis=(0, 2))


@partial(jax.jit, static_argnames=["max_iter"])
def _antenna_fixed_point(h_tilde, p0, tol, damping, floor_rel, max_iter):
    trace = jnp.full(max_iter, jnp.nan)

    def condition(state):
        p, residual, i, _ = state
        return (i < max_iter) & (residual > tol) & jnp.all(jnp.isfinite(p))

    def step(state):
        p, _, i, trace = state
        # Keep every antenna in the Gram matrix while iterating
        p_floored = jnp.maximum(p, floor_rel * jnp.max(p))
        p_new = antenna_power_map(h_tilde, p_floored)
        p_new = damping * p_new + (1 - damping) * p
        residual = relative_sup_change(p_new, p)
        trace = trace.at[i].set(jnp.sum(jnp.sqrt(p_new)))
        return p_new, residual, i + 1, trace

    init = (p0, jnp.array(jnp.inf), jnp.array(0), trace)
    return jax.lax.while_loop(condition, step, init)


def solve_antenna_powers(
    nch: NormalizedChannel,
    tol: float = 1e-8,
    max_iter: int = 1000,
    damping: float = 1.0,
    floor_rel: float = 1e-14,
    mask_rel: float = 1e-9,
) -> tuple[AntennaPowerVector, FixedPointReport]:
    """
    Solve the fixed point :math:`\\mathbf{p} = F(\\mathbf{p})` of
    :py:func:`~.antenna_power_map` by Picard iteration.

    The iteration starts from the per-antenna powers of the conventional ZF
    precoder and stops when the relative sup-norm change falls below ``tol``.
    If the iteration diverges, it is repeated with ``damping = 0.5``.

    Parameters
    ----------
    nch
        The normalized channel.
    tol
        Convergence tolerance on :math:`\\max|p' - p| / \\max|p'|`.
    max_iter
        Maximal number of iterations.
    damping
        :math:`p' = \\theta F(p) + (1 - \\theta) p`, with
        :math:`\\theta \\in (0, 1]`.
    floor_rel
        During the iteration, all powers are kept above ``floor_rel`` times
        the largest power.
    mask_rel
        After the iteration, powers below ``mask_rel`` times the largest power
        are reported as zero.

    Returns
    -------
    AntennaPowerVector
        The band powers, in Watts.
    FixedPointReport
        The objective :math:`\\sum_n\\sqrt{p_n}` per iteration and the
        convergence information. Non-convergence is not an error.

    Raises
    ------
    SingularityGuardError
        If less than ``K`` antennas keep a non-zero power, or if the iteration
        does not stay finite.
    """
    if nch.N < nch.K:
        raise ValueError(
            f"Need at least as many antennas as users, got N={nch.N}, "
            f"K={nch.K}."
        )
    if not 0 < damping <= 1:
        raise ValueError(f"The damping must be in (0, 1], got {damping}.")
    h_tilde = nch.h_tilde
    p0 = antenna_power_map(h_tilde, jnp.ones(nch.N))

    p, residual, iterations, trace = _antenna_fixed_point(
        h_tilde, p0, tol, damping, floor_rel, max_iter=max_iter
    )
    if not bool(jnp.all(jnp.isfinite(p))) and damping > 0.5:
        logger.warning(
            f"Antenna power iteration diverged after {int(iterations)} "
            "iterations, retrying with damping 0.5."
        )
        damping = 0.5
        p, residual, iterations, trace = _antenna_fixed_point(
            h_tilde, p0, tol, damping, floor_rel, max_iter=max_iter
        )
    if not bool(jnp.all(jnp.isfinite(p))):
        raise SingularityGuardError(
            "Antenna power iteration did not stay finite."
        )
    converged = bool(residual <= tol)
    if not converged:
        logger.warning(
            f"Antenna power iteration not converged after {int(iterations)} "
            f"iterations, residual {float(residual):.3e}."
        )
    powers = AntennaPowerVector.with_floor(p, mask_rel)
    if powers.active_count < nch.K:
        raise SingularityGuardError(
            f"Only {powers.active_count} active antennas for {nch.K} users."
        )
    report = FixedPointReport(
        iterations,
        residual,
        converged,
        onp.asarray(trace)[: int(iterations)],
        damping,
    )
    return powers, report
