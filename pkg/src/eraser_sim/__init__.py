"""Simulation of a quantum eraser built from a laser and a Mach-Zehnder interferometer."""

from .analytic import EraserParams, intensity_first_order
from .circuit import BUILTIN_FIG1, Circuit, CircuitError, build_fig1, evaluate
from .metrics import CorrelationCurve, chsh_s, count_fringes, phase_resolution
from .montecarlo import SourceConfig, sample_photon_stream
from .netlist import load_circuit, parse_circuit, render

__version__ = "0.1.0"
