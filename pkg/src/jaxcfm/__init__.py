# These version placeholders will be replaced by poetry-dynamic-versioning
__version__ = "0.0.0"
__version_tuple__ = (0, 0, 0)

from . import (
    channel,
    config,
    consumption,
    harness,
    helpers,
    precoding,
    rmt,
    saving,
    scenario,
    units,
)
from .config import SystemConfig, load_config
from .harness import ExperimentSpec
from .scenario import Scenario
from .units import ureg

__all__ = [
    "ExperimentSpec",
    "Scenario",
    "SystemConfig",
    "channel",
    "config",
    "consumption",
    "harness",
    "helpers",
    "load_config",
    "precoding",
    "rmt",
    "saving",
    "scenario",
    "units",
    "ureg",
]
