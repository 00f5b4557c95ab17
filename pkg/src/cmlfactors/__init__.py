"""Emergent statistical factors in coupled chaotic maps on a rotated Laplacian network."""

__version__ = "0.1.0"

from .local_map import LocalMapParams, MapState  # noqa: E402
from .network import CouplingNetwork, NetworkParams, build_coupling  # noqa: E402
from .simulator import ReturnPanel, SimConfig, simulate_panel  # noqa: E402
from .factor_analysis import FactorFit, SpectrumReport, analyze_panel  # noqa: E402

__all__ = [
    "LocalMapParams", "MapState", "NetworkParams", "CouplingNetwork", "build_coupling",
    "SimConfig", "ReturnPanel", "simulate_panel", "SpectrumReport", "FactorFit",
    "analyze_panel",
]
