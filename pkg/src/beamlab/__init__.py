"""Numerical laboratory for Euler-Bernoulli beams with a dissipative tip body."""

__version__ = "0.1.0"

from .analysis import (
    DecayFit,
    StabilityClassification,
    Verdict,
    classify_stability,
    equivalence_harness,
    fit_decay,
)
from .discretize import DiscreteSystem, assemble, dissipation_rate, energy, refine
from .model import (
    Elastic,
    KelvinVoigt,
    ModelSpec,
    NonsimpleThermo,
    ThermoTypeI,
    ThermoTypeII,
    TipBody,
    build_tip_matrices,
    tip_ode_residual,
    validate_hypothesis,
)
from .spectral import resolvent_norm, spectrum, sweep_resolvent
from .timeint import FirstMode, FromFile, SmoothPolynomial, energy_ledger_check, integrate
