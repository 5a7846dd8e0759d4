"""
This submodule holds the static system configuration of a cell-free network,
i.e., everything which is fixed before any random draw: dimensions, power
amplifier and consumption constants, propagation and geometry parameters.

Configurations can be read from TOML files, see :py:func:`~.load_config`.
"""

import logging
import math
import tomllib
from pathlib import Path

import jax
import numpy as onp

from .units import Quantity, as_quantity, dbm_to_watt, ureg

logger = logging.getLogger(__name__)

#: Fields of :py:class:`~.SystemConfig` carrying a unit, and the unit used
#: when a plain number is given.
QUANTITY_FIELDS = {
    "noise_power": "W",
    "pa_max_power": "W",
    "p_fix": "W",
    "p_circuit": "W",
    "area_side": "m",
    "min_user_ap_distance": "m",
}

#: Dimensionless fields of :py:class:`~.SystemConfig`.
PLAIN_FIELDS = (
    "L",
    "M",
    "K",
    "Q",
    "target_snr_range_db",
    "pa_max_efficiency",
    "corr_coeff",
    "grid_points",
    "shadow_std_db",
    "activation_threshold_rel",
    "rng_seed",
)

#: Seeds are unsigned 64 bit integers.
SEED_LIMIT = 2**64


class SystemConfig:
    """
    Static parameters of a downlink cell-free massive MIMO OFDM system.

    The defaults describe a 1 km x 1 km area with 8 access points (APs) of
    8 antennas each, serving 8 users on 256 subcarriers.

    Dimensionful arguments can be given as :py:class:`pint.Quantity`, as
    strings parsed by :py:data:`jaxcfm.units.ureg` (e.g. ``"250 mW"``) or as
    plain numbers, which are read as Watts or meters.

    Raises
    ------
    ValueError
        If any of the invariants of the configuration is violated, e.g. if the
        number of antennas does not exceed the number of users.
    """

    def __init__(
        self,
        L: int = 8,
        M: int | tuple[int, ...] = 8,
        K: int = 8,
        Q: int = 256,
        noise_power: Quantity | float | str | None = None,
        target_snr_range_db: tuple[float, float] = (1.0, 20.0),
        pa_max_power: Quantity | float | str = 3.0,
        pa_max_efficiency: float = 0.34,
        p_fix: Quantity | float | str = 15.0,
        p_circuit: Quantity | float | str = 0.7,
        corr_coeff: float = 0.7,
        area_side: Quantity | float | str = 1000.0,
        grid_points: int = 16,
        min_user_ap_distance: Quantity | float | str = 10.0,
        shadow_std_db: float = 4.0,
        activation_threshold_rel: float = 1e-6,
        rng_seed: int = 0,
    ):
        #: Number of access points
        self.L: int = int(L)
        #: Number of antennas per AP. A single integer is used for all APs.
        self.M: tuple[int, ...] = (
            (int(M),) * self.L
            if onp.ndim(M) == 0
            else tuple(int(m) for m in M)
        )
        #: Number of single-antenna users
        self.K: int = int(K)
        #: Number of OFDM subcarriers
        self.Q: int = int(Q)
        if noise_power is None:
            noise_power = dbm_to_watt(-96.0)
        #: Noise power per subcarrier, :math:`\sigma_\nu^2`.
        self.noise_power: Quantity = as_quantity(noise_power, "W")
        #: Lower and upper bound of the uniformly drawn target SNRs in dB.
        self.target_snr_range_db: tuple[float, float] = tuple(
            float(v) for v in target_snr_range_db
        )
        #: Maximal output power of one power amplifier (PA)
        self.pa_max_power: Quantity = as_quantity(pa_max_power, "W")
        #: Efficiency of a PA at its maximal output power
        self.pa_max_efficiency: float = float(pa_max_efficiency)
        #: Fixed consumption of an active AP
        self.p_fix: Quantity = as_quantity(p_fix, "W")
        #: Circuit consumption per active antenna
        self.p_circuit: Quantity = as_quantity(p_circuit, "W")
        #: Coefficient of the exponential antenna correlation model
        self.corr_coeff: float = float(corr_coeff)
        #: Side length of the square area
        self.area_side: Quantity = as_quantity(area_side, "m")
        #: Number of candidate AP sites on a regular grid. Must be a square
        #: number.
        self.grid_points: int = int(grid_points)
        #: Minimal distance between any user and any AP
        self.min_user_ap_distance: Quantity = as_quantity(
            min_user_ap_distance, "m"
        )
        #: Standard deviation of the log-normal shadow fading in dB
        self.shadow_std_db: float = float(shadow_std_db)
        #: An AP is active if its power exceeds this fraction of the largest
        #: AP power.
        self.activation_threshold_rel: float = float(activation_threshold_rel)
        #: Seed of all random draws
        self.rng_seed: int = int(rng_seed)

        self._validate()

    def _validate(self) -> None:
        if self.L < 1 or self.K < 1 or self.Q < 1:
            raise ValueError(
                f"L, K and Q must be positive, got L={self.L}, K={self.K}, "
                f"Q={self.Q}."
            )
        if len(self.M) != self.L:
            raise ValueError(
                f"Got {len(self.M)} antenna counts for {self.L} APs."
            )
        if min(self.M) < 1:
            raise ValueError("Every AP needs at least one antenna.")
        if self.N <= self.K:
            raise ValueError(
                f"Zero-forcing needs more antennas than users, got N={self.N}"
                f" and K={self.K}."
            )
        if self.noise_power.m_as(ureg.watt) <= 0:
            raise ValueError("The noise power must be positive.")
        if not 0 < self.pa_max_efficiency <= 1:
            raise ValueError(
                "The maximal PA efficiency must be in (0, 1], got "
                f"{self.pa_max_efficiency}."
            )
        if self.pa_max_power.m_as(ureg.watt) <= 0:
            raise ValueError("The maximal PA power must be positive.")
        if (
            self.p_fix.m_as(ureg.watt) < 0
            or self.p_circuit.m_as(ureg.watt) < 0
        ):
            raise ValueError("Consumption constants must not be negative.")
        if not 0 <= self.corr_coeff < 1:
            raise ValueError(
                f"The correlation coefficient must be in [0, 1), got "
                f"{self.corr_coeff}."
            )
        if len(self.target_snr_range_db) != 2 or (
            self.target_snr_range_db[0] > self.target_snr_range_db[1]
        ):
            raise ValueError(
                "target_snr_range_db must be a [min, max] pair, got "
                f"{self.target_snr_range_db}."
            )
        if math.isqrt(self.grid_points) ** 2 != self.grid_points:
            raise ValueError(
                f"grid_points must be a square number, got {self.grid_points}."
            )
        if self.L > self.grid_points:
            raise ValueError(
                f"Cannot place {self.L} APs on {self.grid_points} grid sites."
            )
        if self.area_side.m_as(ureg.meter) <= 0:
            raise ValueError("The area side length must be positive.")
        if self.min_user_ap_distance.m_as(ureg.meter) < 0:
            raise ValueError("The minimal user distance must not be negative.")
        if self.shadow_std_db < 0:
            raise ValueError("The shadowing deviation must not be negative.")
        if not 0 <= self.activation_threshold_rel < 1:
            raise ValueError(
                "activation_threshold_rel must be in [0, 1), got "
                f"{self.activation_threshold_rel}."
            )
        if not 0 <= self.rng_seed < SEED_LIMIT:
            raise ValueError(
                "rng_seed must be an unsigned 64 bit integer, got "
                f"{self.rng_seed}."
            )

    @property
    def N(self) -> int:
        """
        Total number of antennas, :math:`\\sum_l M_l`.
        """
        return sum(self.M)

    def replace(self, **changes) -> "SystemConfig":
        """
        Return a copy of this configuration with some fields changed.

        If the number of APs ``L`` changes, but ``M`` is not given, a uniform
        antenna count is carried over to the new number of APs.
        """
        fields = self.to_dict()
        if "L" in changes and "M" not in changes:
            if len(set(self.M)) != 1:
                raise ValueError(
                    "Give M explicitly when changing L of a configuration "
                    "with non-uniform antenna counts."
                )
            changes["M"] = self.M[0]
        fields.update(changes)
        return SystemConfig(**fields)

    def to_dict(self) -> dict:
        """
        Fields of this configuration, with the same names as the TOML keys.
        """
        out = {key: getattr(self, key) for key in PLAIN_FIELDS}
        out["M"] = list(self.M)
        out["target_snr_range_db"] = list(self.target_snr_range_db)
        out.update({key: getattr(self, key) for key in QUANTITY_FIELDS})
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SystemConfig):
            return NotImplemented
        return _comparable(self) == _comparable(other)

    def __repr__(self) -> str:
        return (
            f"SystemConfig(L={self.L}, M={self.M}, K={self.K}, Q={self.Q}, "
            f"seed={self.rng_seed})"
        )

    # Used by jaxcfm.saving
    _children_labels = tuple(QUANTITY_FIELDS)
    _aux_labels = PLAIN_FIELDS

    def _tree_flatten(self):
        children = tuple(getattr(self, key) for key in self._children_labels)
        aux_data = tuple(
            getattr(self, key) for key in self._aux_labels
        )  # static values
        return (children, aux_data)

    @classmethod
    def _tree_unflatten(cls, aux_data, children):
        obj = object.__new__(cls)
        for key, value in zip(cls._children_labels, children, strict=True):
            setattr(obj, key, value)
        for key, value in zip(cls._aux_labels, aux_data, strict=True):
            setattr(obj, key, value)
        obj.M = tuple(int(m) for m in obj.M)
        obj.target_snr_range_db = tuple(
            float(v) for v in obj.target_snr_range_db
        )
        return obj


def _comparable(cfg: SystemConfig) -> dict:
    out = cfg.to_dict()
    for key, unit in QUANTITY_FIELDS.items():
        out[key] = float(out[key].m_as(unit))
    return out


def load_config(path: str | Path, **overrides) -> SystemConfig:
    """
    Read a :py:class:`~.SystemConfig` from a TOML file.

    The keys of the file mirror the arguments of :py:class:`~.SystemConfig`.
    Missing keys take their default values, unknown keys are rejected.

    Parameters
    ----------
    path
        The TOML file.
    overrides
        Fields which take precedence over the file content, e.g., a seed given
        on the command line.

    Examples
    --------
    A file could read::

        L = 10
        M = 8
        K = 4
        noise_power = "2.512e-13 W"
        target_snr_range_db = [1, 20]
    """
    with open(path, "rb") as f:
        fields = tomllib.load(f)
    unknown = set(fields) - set(PLAIN_FIELDS) - set(QUANTITY_FIELDS)
    if unknown:
        raise ValueError(
            f"Unknown configuration keys in {path}: {sorted(unknown)}"
        )
    fields.update(overrides)
    logger.debug(f"Loaded configuration keys {sorted(fields)} from {path}.")
    return SystemConfig(**fields)


jax.tree_util.register_pytree_node(
    SystemConfig,
    SystemConfig._tree_flatten,
    SystemConfig._tree_unflatten,
)
