"""Pulsed-grating Talbot-Lau interferometry: Talbot coefficients, resonance
scans, brute-force oracles and fringe analysis."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .scenario import Scenario, load_scenario, scenario_hash
from .grating import GratingStrength, grating_strength, talbot_coefficients
from .interferometer import SignalCurve, resonance_scan, signal, visibility

__all__ = [
    "Scenario",
    "load_scenario",
    "scenario_hash",
    "GratingStrength",
    "grating_strength",
    "talbot_coefficients",
    "SignalCurve",
    "resonance_scan",
    "signal",
    "visibility",
]
