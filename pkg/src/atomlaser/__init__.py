"""Desk-scale simulator and analysis toolkit for atom-laser outcoupling from
a magnetically trapped Bose-Einstein condensate."""

from .constants import Constants, DEFAULT_CONSTANTS, Species, make_rb87
from .config import (
    ConfigError,
    CouplingConfig,
    CouplingScheme,
    GridSpec,
    InteractionConfig,
    ProtocolConfig,
    SimConfig,
    TrapConfig,
    load_config,
    save_config,
    validate_config,
)

__all__ = [
    "Constants",
    "DEFAULT_CONSTANTS",
    "Species",
    "make_rb87",
    "ConfigError",
    "CouplingConfig",
    "CouplingScheme",
    "GridSpec",
    "InteractionConfig",
    "ProtocolConfig",
    "SimConfig",
    "TrapConfig",
    "load_config",
    "save_config",
    "validate_config",
]

__version__ = "0.1.0"
