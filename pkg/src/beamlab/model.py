"""Beam models: tip-body data, constitutive laws and boundary ODE matrices.

A model is a constitutive law for the bending moment plus a density, a
length and a choice of boundary at ``x = 0`` (a dissipative tip body or a
free end).  The end ``x = l`` is always clamped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields
from typing import NamedTuple, Union

import numpy as np


class ModelError(ValueError):
    """Raised for physically invalid model parameters."""


class HypothesisWarning(UserWarning):
    """The sufficient dissipativity condition ``d*gamma <= 2*gamma_star`` fails."""


def _require_positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not np.isfinite(value) or value <= 0:
            raise ModelError(f"{type(obj).__name__}.{name} must be > 0, got {value!r}")


def _require_nonnegative(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not np.isfinite(value) or value < 0:
            raise ModelError(f"{type(obj).__name__}.{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class TipBody:
    """Rigid container of mass ``m_tip`` attached at ``x = 0``.

    ``d`` is the offset of its centre of mass from the beam end, ``J`` the
    rotary inertia about that centre, ``gamma`` and ``gamma_star`` the
    translational and rotational damping of the granular contents.
    """

    m_tip: float = 1.0
    d: float = 0.1
    J: float = 0.1
    gamma: float = 1.0
    gamma_star: float = 0.5

    def __post_init__(self):
        _require_positive(self, "m_tip", "J")
        _require_nonnegative(self, "d", "gamma", "gamma_star")

    @property
    def conservative(self) -> bool:
        return self.gamma == 0 and self.gamma_star == 0


@dataclass(frozen=True)
class Elastic:
    alpha: float = 1.0

    def __post_init__(self):
        _require_positive(self, *(f.name for f in fields(self)))


@dataclass(frozen=True)
class KelvinVoigt:
    """Moment ``alpha*u_xx + alpha0*u_xxt``."""

    alpha: float = 1.0
    alpha0: float = 0.05

    def __post_init__(self):
        _require_positive(self, *(f.name for f in fields(self)))


@dataclass(frozen=True)
class ThermoTypeI:
    """Moment ``alpha*u_xx + m_couple*theta`` with Fourier heat conduction."""

    alpha: float = 1.0
    m_couple: float = 0.1
    c_heat: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        _require_positive(self, *(f.name for f in fields(self)))


@dataclass(frozen=True)
class ThermoTypeII:
    """Green-Naghdi type II coupling: hyperbolic, energy-conserving heat law."""

    alpha: float = 1.0
    m_couple: float = 0.1
    c_heat: float = 1.0
    k_star: float = 1.0

    def __post_init__(self):
        _require_positive(self, *(f.name for f in fields(self)))


@dataclass(frozen=True)
class NonsimpleThermo:
    """Stress ``mu*u_x + theta`` and hyper-stress ``alpha*u_xx``."""

    alpha: float = 1.0
    mu: float = 1.0
    m_couple: float = 0.1
    c_heat: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        _require_positive(self, *(f.name for f in fields(self)))


ConstitutiveLaw = Union[Elastic, KelvinVoigt, ThermoTypeI, ThermoTypeII, NonsimpleThermo]

LAWS = {
    "elastic": Elastic,
    "kelvin_voigt": KelvinVoigt,
    "thermo_type1": ThermoTypeI,
    "thermo_type2": ThermoTypeII,
    "nonsimple": NonsimpleThermo,
}
LAW_NAMES = {cls: name for name, cls in LAWS.items()}

THERMAL_LAWS = (ThermoTypeI, ThermoTypeII, NonsimpleThermo)


def law_name(law) -> str:
    return LAW_NAMES[type(law)]


def make_law(name: str, **params) -> ConstitutiveLaw:
    """Build a constitutive law by registry name, ignoring unrelated keys."""
    try:
        cls = LAWS[name]
    except KeyError:
        raise ModelError(f"unknown constitutive law {name!r}; expected one of {sorted(LAWS)}") from None
    wanted = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in params.items() if k in wanted})


@dataclass(frozen=True)
class ModelSpec:
    """One beam model.

    ``tip=None`` selects the free end ``M(0) = M_x(0) = 0``; otherwise the
    tip body replaces those conditions by its two boundary ODEs.  For the
    nonsimple law ``rho`` plays the role of ``rho_1``.
    """

    law: ConstitutiveLaw = Elastic()
    rho: float = 1.0
    length: float = 1.0
    tip: TipBody | None = None

    def __post_init__(self):
        if not isinstance(self.law, tuple(LAWS.values())):
            raise ModelError(f"unsupported constitutive law {self.law!r}")
        _require_positive(self, "rho", "length")
        if self.tip is not None and not isinstance(self.tip, TipBody):
            raise ModelError("tip must be a TipBody or None")

    @property
    def hybrid(self) -> bool:
        return self.tip is not None

    @property
    def thermal(self) -> bool:
        return isinstance(self.law, THERMAL_LAWS)

    def with_tip(self, tip: TipBody | None) -> "ModelSpec":
        return ModelSpec(self.law, self.rho, self.length, tip)


class BoundaryMatrices(NamedTuple):
    B: np.ndarray
    K: np.ndarray


class HypothesisCheck(NamedTuple):
    holds: bool
    margin: float


def build_tip_matrices(tip: TipBody) -> BoundaryMatrices:
    """Inertia matrix ``B`` and damping matrix ``K`` of the tip ODE ``B V' + K V = Gamma``."""
    m, d, J = tip.m_tip, tip.d, tip.J
    if m <= 0 or J <= 0:
        raise ModelError("tip mass and rotary inertia must be positive")
    B = np.array([[m, m * d], [m * d, J + m * d * d]])
    K = np.array([[tip.gamma, 0.0], [d * tip.gamma, d * tip.gamma_star]])
    return BoundaryMatrices(B, K)


def validate_hypothesis(tip: TipBody, warn: bool = False) -> HypothesisCheck:
    """Report whether ``d*gamma <= 2*gamma_star`` holds, with its margin."""
    margin = 2.0 * tip.gamma_star - tip.d * tip.gamma
    holds = bool(margin >= 0)
    if warn and not holds:
        warnings.warn(
            f"d*gamma = {tip.d * tip.gamma:g} exceeds 2*gamma_star = {2 * tip.gamma_star:g}",
            HypothesisWarning,
            stacklevel=2,
        )
    return HypothesisCheck(holds, float(margin))


def damping_form_definite(tip: TipBody) -> bool:
    """Exact test for ``V.KV > 0`` on nonzero real ``V``.

    ``V.KV = gamma*w^2 + d*gamma*w*z + d*gamma_star*z^2``; positive
    definite iff both diagonal terms are positive and the discriminant
    ``(d*gamma)^2 - 4*gamma*d*gamma_star`` is negative.
    """
    g, d, gs = tip.gamma, tip.d, tip.gamma_star
    return g > 0 and d * gs > 0 and (d * g) ** 2 < 4 * g * d * gs


def tip_ode_residual(tip: TipBody, V, V_dot, gamma_value) -> np.ndarray:
    """``B V_dot + K V - Gamma``; vanishes on exact solutions of the tip ODE."""
    B, K = build_tip_matrices(tip)
    return B @ np.asarray(V_dot) + K @ np.asarray(V) - np.asarray(gamma_value)
