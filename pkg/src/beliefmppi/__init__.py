"""Belief-space MPPI with CVaR safety constraints over a particle posterior."""
from .belief import ParticleBelief, ParticleFilter
from .controller import CcConfig, CcMPPI, MppiConfig, RiskSensitiveMPPI, solve_step, cc_solve_step
from .risk import SampleSet, cvar_ru, cvar_tail_average, var
from .system import SlotTestbed

__all__ = [
    "ParticleBelief",
    "ParticleFilter",
    "MppiConfig",
    "CcConfig",
    "RiskSensitiveMPPI",
    "CcMPPI",
    "solve_step",
    "cc_solve_step",
    "SampleSet",
    "var",
    "cvar_ru",
    "cvar_tail_average",
    "SlotTestbed",
]

__version__ = "0.1.0"
