"""Decay fits, refinement-trend stability classification and the
hybrid/non-hybrid comparison harness."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretize import assemble
from .model import ModelSpec, TipBody
from .spectral import spectrum
from .timeint import Trajectory

MIN_FIT_SAMPLES = 20


class DecayModel(str, enum.Enum):
    EXPONENTIAL = "exponential"
    ALGEBRAIC = "algebraic"


class Verdict(str, enum.Enum):
    EXPONENTIALLY_STABLE = "ExponentiallyStable"
    NOT_EXPONENTIALLY_STABLE = "NotExponentiallyStable"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class DecayFit:
    """Least-squares decay law on a time window.

    ``exponent`` is the rate ``r`` of ``E ~ exp(r t)`` for the exponential
    model and the power ``p`` of ``E ~ t^p`` for the algebraic one.
    """

    window: tuple[float, float]
    model: DecayModel
    exponent: float
    intercept: float
    r_squared: float
    n_samples: int


def fit_decay(traj, window, model="algebraic") -> DecayFit:
    """Fit ``log E`` against ``t`` (exponential) or ``log t`` (algebraic).

    ``traj`` is a :class:`Trajectory` or a ``(times, energies)`` pair.
    """
    model = DecayModel(model)
    if isinstance(traj, Trajectory):
        t, E = traj.step_times, traj.energies
    else:
        t, E = (np.asarray(a, dtype=float) for a in traj)
    t0, t1 = map(float, window)
    if not t0 < t1:
        raise ValueError(f"empty decay window ({t0}, {t1})")
    if t0 < t[0] - 1e-12 or t1 > t[-1] * (1 + 1e-12):
        raise ValueError(f"window ({t0:g}, {t1:g}) exceeds trajectory span ({t[0]:g}, {t[-1]:g})")
    if model is DecayModel.ALGEBRAIC and t0 <= 0:
        raise ValueError("algebraic fit needs t0 > 0")
    mask = (t >= t0) & (t <= t1)
    if mask.sum() < MIN_FIT_SAMPLES:
        raise ValueError(f"only {mask.sum()} samples in window, need {MIN_FIT_SAMPLES}")
    tw, Ew = t[mask], E[mask]
    if np.any(Ew <= 0):
        raise ValueError("non-positive energies in window (fully decayed)")
    X = tw if model is DecayModel.EXPONENTIAL else np.log(tw)
    Y = np.log(Ew)
    slope, icpt = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icpt)
    ss_tot = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - np.sum(resid**2) / ss_tot)
    return DecayFit((t0, t1), model, float(slope), float(icpt), float(min(r2, 1.0)), int(mask.sum()))


def decay_window(first_frequency: float, abscissa: float, t_final: float) -> tuple[float, float]:
    """Pre-asymptotic window: after a few periods of the lowest mode, before
    the finite-dimensional exponential tail ``exp(2*abscissa*t)`` sets in."""
    t0 = 5.0 / first_frequency
    t1 = t_final if abscissa == 0 else min(0.5 / abs(abscissa), t_final)
    return t0, t1


@dataclass
class StabilityClassification:
    levels: list[int]
    abscissas: list[float]
    verdict: Verdict
    delta: float
    reason: str = ""


@dataclass
class ClassificationRules:
    """Thresholds of the refinement-trend test (all configurable)."""

    shrink_factor: float = 2.0  # |abscissa| coarse/fine ratio meaning "tends to 0"
    max_variation: float = 0.25  # level-to-level relative change allowed for a uniform bound
    zero_tol: float = 1e-12  # |abscissa| treated as exactly zero


def classify_abscissas(levels, abscissas, rules: ClassificationRules | None = None) -> StabilityClassification:
    """Verdict from the abscissa trend over refinement levels."""
    rules = rules or ClassificationRules()
    levels, a = list(levels), np.asarray(abscissas, dtype=float)
    if len(levels) < 3:
        raise ValueError("a verdict needs at least 3 refinement levels")
    mag = np.abs(a)
    delta = 0.5 * mag[0]
    if np.all(mag <= rules.zero_tol):
        return StabilityClassification(levels, a.tolist(), Verdict.NOT_EXPONENTIALLY_STABLE, delta,
                                       "spectral abscissa is zero on every level")
    if mag[-1] <= rules.zero_tol or mag[0] >= rules.shrink_factor * mag[-1]:
        ratio = np.inf if mag[-1] == 0 else mag[0] / mag[-1]
        return StabilityClassification(levels, a.tolist(), Verdict.NOT_EXPONENTIALLY_STABLE, delta,
                                       f"|abscissa| shrinks by {ratio:.3g}x under refinement")
    variation = np.abs(np.diff(mag)) / mag[:-1]
    if np.all(a <= -delta) and np.all(variation < rules.max_variation):
        return StabilityClassification(levels, a.tolist(), Verdict.EXPONENTIALLY_STABLE, delta,
                                       f"abscissa <= -{delta:.3g} on every level, variation {variation.max():.2%}")
    return StabilityClassification(levels, a.tolist(), Verdict.INCONCLUSIVE, delta,
                                   f"no clear trend (variation {variation.max():.2%})")


def abscissa_at(spec: ModelSpec, n: int, **assemble_kw) -> float:
    return spectrum(assemble(spec, n, **assemble_kw)).abscissa


def classify_stability(spec: ModelSpec, levels=(16, 32, 64), rules=None, max_workers=None,
                       **assemble_kw) -> StabilityClassification:
    """Assemble every level, compute its spectral abscissa, classify the trend."""
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a verdict needs at least 3 refinement levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError(f"levels must be strictly increasing, got {levels}")
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            absc = list(pool.map(lambda n: abscissa_at(spec, n, **assemble_kw), levels))
    else:
        absc = [abscissa_at(spec, n, **assemble_kw) for n in levels]
    return classify_abscissas(levels, absc, rules)


@dataclass
class EquivalenceResult:
    hybrid: StabilityClassification
    plain: StabilityClassification
    match: bool | None  # None: one side inconclusive
    notes: list[str] = field(default_factory=list)

    @property
    def indeterminate(self) -> bool:
        return self.match is None


def equivalence_harness(law, tip: TipBody | None = None, levels=(16, 32, 64), rho: float = 1.0,
                        length: float = 1.0, rules=None, max_workers=None, **assemble_kw) -> EquivalenceResult:
    """Classify the free-end model and its tip-body extension and compare verdicts."""
    tip = tip or TipBody()
    plain_spec = ModelSpec(law, rho, length, None)
    hybrid_spec = ModelSpec(law, rho, length, tip)
    plain = classify_stability(plain_spec, levels, rules, max_workers, **assemble_kw)
    hybrid = classify_stability(hybrid_spec, levels, rules, max_workers, **assemble_kw)
    notes = []
    if Verdict.INCONCLUSIVE in (plain.verdict, hybrid.verdict):
        match = None
        notes.append("at least one side is inconclusive; equivalence not decided")
    else:
        match = plain.verdict == hybrid.verdict
    return EquivalenceResult(hybrid, plain, match, notes)
