"""
Power consumption of the radio network.

The power consumed by the PA of antenna :math:`n` grows with the square root
of its transmit power,

.. math::

   P_\\mathrm{PAs} = \\frac{\\sqrt{p_\\mathrm{max}}}{\\eta_\\mathrm{max}}
   \\sum_n \\sqrt{p_n},

and every active AP adds a fixed part and a circuit part per active antenna,

.. math::

   P_\\mathrm{net} = P_\\mathrm{PAs}
   + \\sum_{l\\ \\mathrm{active}} (P_\\mathrm{fix} + P_c M_{a,l}).
"""

import logging

import jax
import jax.numpy as jnp
import numpy as onp

from .channel import ChannelRealization
from .config import SystemConfig
from .helpers import antenna_to_ap
from .precoding import AntennaPowerVector, PrecoderSet
from .scenario import TargetProfile
from .units import Quantity, ureg

jax.config.update("jax_enable_x64", True)

logger = logging.getLogger(__name__)


class ConsumptionParameters:
    """
    Constants of the consumption model, in Watts.
    """

    def __init__(
        self,
        pa_max_power: float = 3.0,
        pa_max_efficiency: float = 0.34,
        p_fix: float = 15.0,
        p_circuit: float = 0.7,
    ):
        if pa_max_power <= 0:
            raise ValueError("The maximal PA power must be positive.")
        if not 0 < pa_max_efficiency <= 1:
            raise ValueError("The maximal PA efficiency must be in (0, 1].")
        #: Maximal PA output power :math:`p_\mathrm{max}`
        self.pa_max_power = float(pa_max_power)
        #: PA efficiency at maximal output power :math:`\eta_\mathrm{max}`
        self.pa_max_efficiency = float(pa_max_efficiency)
        #: Fixed consumption per active AP
        self.p_fix = float(p_fix)
        #: Circuit consumption per active antenna
        self.p_circuit = float(p_circuit)

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "ConsumptionParameters":
        return cls(
            cfg.pa_max_power.m_as(ureg.watt),
            cfg.pa_max_efficiency,
            cfg.p_fix.m_as(ureg.watt),
            cfg.p_circuit.m_as(ureg.watt),
        )


class ConsumptionReport:
    """
    Transmit and consumed powers of one power allocation.
    """

    def __init__(
        self,
        p_tx: float,
        p_pas: float,
        p_net: float,
        active_antenna_counts: onp.ndarray,
        fronthaul: int,
        rates: onp.ndarray | None = None,
        gain_net: float | None = None,
        gain_pas: float | None = None,
    ):
        #: Total transmit power over all antennas and subcarriers
        self.p_tx = float(p_tx)
        #: Power consumed by all PAs
        self.p_pas = float(p_pas)
        #: Network power, PAs plus fixed and circuit consumption
        self.p_net = float(p_net)
        #: Number of active antennas of every AP
        self.active_antenna_counts = onp.asarray(active_antenna_counts, int)
        #: Number of channel coefficients sent over the fronthaul
        self.fronthaul = int(fronthaul)
        #: Band rate of every user in bits per channel use, if targets were
        #: given
        self.rates = None if rates is None else onp.asarray(rates)
        self.gain_net = gain_net
        self.gain_pas = gain_pas

    @property
    def active_ap_count(self) -> int:
        return int(onp.sum(self.active_antenna_counts > 0))

    def with_baseline(self, baseline: "ConsumptionReport"):
        """
        Set the gain fields against a ``baseline`` report and return self.
        """
        self.gain_net, self.gain_pas = gain(self, baseline)
        return self

    def to_dict(self) -> dict:
        out = {
            "p_tx": self.p_tx,
            "p_pas": self.p_pas,
            "p_net": self.p_net,
            "active_aps": self.active_ap_count,
            "active_antennas": int(onp.sum(self.active_antenna_counts)),
            "fronthaul": self.fronthaul,
        }
        if self.rates is not None:
            out["sum_rate"] = float(onp.sum(self.rates))
        if self.gain_net is not None:
            out["gain_net"] = self.gain_net
            out["gain_pas"] = self.gain_pas
        return out


def _powers(p: AntennaPowerVector | jnp.ndarray) -> jnp.ndarray:
    if isinstance(p, AntennaPowerVector):
        return p.effective
    return jnp.asarray(p, dtype=float)


def total_transmit_power(p: AntennaPowerVector | jnp.ndarray) -> float:
    """
    :math:`P_\\mathrm{tx} = \\sum_n p_n`.
    """
    return float(jnp.sum(_powers(p)))


def pa_consumed_power(
    p: AntennaPowerVector | jnp.ndarray, params: ConsumptionParameters
) -> float:
    """
    Power consumed by all PAs. Inactive antennas do not contribute.

    Examples
    --------
    >>> pa_consumed_power(jnp.array([1.0]), ConsumptionParameters())
    5.094267...
    """
    return float(
        jnp.sqrt(params.pa_max_power)
        / params.pa_max_efficiency
        * jnp.sum(jnp.sqrt(_powers(p)))
    )


def active_antenna_counts(
    p: AntennaPowerVector | jnp.ndarray, antennas: tuple[int, ...]
) -> onp.ndarray:
    """
    Number of antennas with non-zero power, per AP.
    """
    active = _powers(p) > 0
    return onp.asarray(
        jax.ops.segment_sum(
            active.astype(int),
            antenna_to_ap(antennas),
            num_segments=len(antennas),
        )
    )


def fronthaul_coefficients(
    antennas: tuple[int, ...], active_aps, n_users: int, q_count: int
) -> int:
    """
    Number of instantaneous channel coefficients the active APs report to the
    central unit, :math:`QK\\sum_{l\\ \\mathrm{active}} M_l`.
    """
    return int(sum(antennas[l] for l in active_aps) * n_users * q_count)


def ap_average_powers(
    p: AntennaPowerVector | jnp.ndarray, antennas: tuple[int, ...]
) -> jnp.ndarray:
    """
    Mean power of the antennas of every AP.
    """
    return jax.ops.segment_sum(
        _powers(p), antenna_to_ap(antennas), num_segments=len(antennas)
    ) / jnp.asarray(antennas, dtype=float)


def achievable_rates(
    targets: TargetProfile, band_total: bool = False
) -> jnp.ndarray:
    """
    Rate of every user under an exact ZF precoder, in bits per channel use.

    Per subcarrier, this is :math:`\\log_2(1 + \\gamma_k/Q)`. With
    ``band_total``, the rates of all ``Q`` subcarriers are summed.
    """
    rate = jnp.log2(1 + targets.d_tilde_gamma)
    return targets.Q * rate if band_total else rate


def effective_snr(
    ch: ChannelRealization,
    ws: PrecoderSet,
    noise_power: Quantity | float,
) -> jnp.ndarray:
    """
    SNR of every user on every subcarrier, shape ``(K, Q)``,

    .. math::

       \\mathrm{SNR}_{k,q} = \\frac{|[\\mathbf{H}_q\\mathbf{W}_q]_{kk}|^2}
       {\\sigma_\\nu^2
       + \\sum_{j\\neq k}|[\\mathbf{H}_q\\mathbf{W}_q]_{kj}|^2}.
    """
    if isinstance(noise_power, Quantity):
        noise_power = noise_power.m_as(ureg.watt)
    gains = jnp.abs(ch.aggregated @ ws.w) ** 2
    signal = jnp.diagonal(gains, axis1=1, axis2=2)
    interference = jnp.sum(gains, axis=2) - signal
    return (signal / (noise_power + interference)).T


def network_power(
    p: AntennaPowerVector | jnp.ndarray,
    antennas: tuple[int, ...],
    params: ConsumptionParameters,
    targets: TargetProfile | None = None,
    n_users: int | None = None,
) -> ConsumptionReport:
    """
    Evaluate all consumption figures of an antenna power allocation.

    An AP is active if any of its antennas is active, and is charged the
    fixed consumption and the circuit consumption of its active antennas.

    Parameters
    ----------
    p
        The band powers of all antennas.
    antennas
        Antenna count of every AP, in antenna order.
    params
        Constants of the consumption model.
    targets
        If given, the users' band rates are added to the report and the
        fronthaul count uses their number of subcarriers.
    n_users
        Number of users for the fronthaul count. Taken from ``targets`` if
        not given.
    """
    powers = _powers(p)
    if len(powers) != sum(antennas):
        raise ValueError(
            f"Got {len(powers)} powers for {sum(antennas)} antennas."
        )
    counts = active_antenna_counts(powers, antennas)
    active_aps = [l for l, c in enumerate(counts) if c > 0]
    p_pas = pa_consumed_power(powers, params)
    p_net = p_pas + sum(
        params.p_fix + params.p_circuit * counts[l] for l in active_aps
    )
    rates = None
    q_count = 1
    if targets is not None:
        rates = onp.asarray(achievable_rates(targets, band_total=True))
        q_count = targets.Q
        n_users = len(targets.gamma) if n_users is None else n_users
    fronthaul = fronthaul_coefficients(
        antennas, active_aps, n_users or 0, q_count
    )
    return ConsumptionReport(
        total_transmit_power(powers), p_pas, p_net, counts, fronthaul, rates
    )


def gain(
    report: ConsumptionReport, baseline_report: ConsumptionReport
) -> tuple[float, float]:
    """
    Gains of a candidate over a baseline, ``P(baseline) / P(candidate)`` for
    the network and the PA consumption. Larger is better.

    Raises
    ------
    ValueError
        If the candidate consumes no power.
    """
    if report.p_net <= 0 or report.p_pas <= 0:
        raise ValueError("Cannot compute a gain for zero candidate power.")
    return (
        baseline_report.p_net / report.p_net,
        baseline_report.p_pas / report.p_pas,
    )
