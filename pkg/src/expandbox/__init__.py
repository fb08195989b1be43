"""Quantum and classical cooling of a particle in a box with a moving wall."""

from .classical import ClassicalParticle, VelocityDistribution, run_ensemble, run_particle
from .config import ConfigError, ExperimentConfig, parse_config
from .diagnostics import DiagnosticsReport, diagnose
from .evolver import EvolutionRecord, EvolverConfig, evolve, instantaneous_energy
from .trajectory import Trajectory, TrajectoryKind
from .units import PhysicalSystem, UnitScaling

__version__ = "0.1.0"

__all__ = [
    "ClassicalParticle", "ConfigError", "DiagnosticsReport", "EvolutionRecord", "EvolverConfig",
    "ExperimentConfig", "PhysicalSystem", "Trajectory", "TrajectoryKind", "UnitScaling",
    "VelocityDistribution", "diagnose", "evolve", "instantaneous_energy", "parse_config",
    "run_ensemble", "run_particle",
]
