"""Generalized spectrum of ``(E, S)`` and energy-norm resolvent estimates.

With ``H = L L^T`` the energy form, the generator ``A = E^{-1} S`` is
unitarily similar (in the energy inner product) to the Euclidean matrix
``A_r = L^{-1} S L^{-T}``.  Everything here works with ``A_r``: its
eigenvalues are those of the pencil and its Euclidean resolvent norm is the
energy-norm resolvent norm of ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .discretize import DiscreteSystem

DENSE_LIMIT = 256
NEAR_SINGULAR = 1e-13


class SpectralError(RuntimeError):
    pass


class NearSingularError(ArithmeticError):
    """``i*lam`` is numerically an eigenvalue; the resolvent norm is meaningless."""

    def __init__(self, lam, sigma_min):
        super().__init__(f"i*{lam:g} is within {sigma_min:.3g} of the spectrum")
        self.lam = lam
        self.sigma_min = sigma_min


@dataclass
class BranchFit:
    """Least-squares fit ``-Re lam = C |Im lam|^(-p)`` on the upper half-branch."""

    frequencies: np.ndarray
    decay_rates: np.ndarray
    exponent: float
    coefficient: float


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    abscissa: float
    n_elements: int
    ceiling: float
    branch_fit: BranchFit | None = None
    residuals: np.ndarray | None = field(default=None, repr=False)

    def upper_branch(self, reliable_only: bool = True) -> np.ndarray:
        """Eigenvalues with ``Im > 0`` sorted by frequency, optionally below the ceiling."""
        ev = self.eigenvalues[self.eigenvalues.imag > 0]
        ev = ev[np.argsort(ev.imag)]
        if reliable_only:
            ev = ev[ev.imag <= self.ceiling]
        return ev


@dataclass
class ResolventSweep:
    samples: np.ndarray  # (lam, norm), near-singular samples removed
    singular: np.ndarray  # frequencies flagged near-singular
    envelope: np.ndarray  # (lam, norm) local maxima used for the fit
    fit_window: tuple[float, float]
    fitted_slope: float | None
    refused: str | None = None


def reduced_operator(sys: DiscreteSystem) -> np.ndarray:
    """``L^{-1} S L^{-T}``, the generator in energy-orthonormal coordinates."""
    cached = sys.parts.get("_reduced")
    if cached is None:
        L = sys.cholesky()

        def congruence(M):
            tmp = scipy.linalg.solve_triangular(L, M, lower=True)
            return scipy.linalg.solve_triangular(L, tmp.T, lower=True).T

        # reduce the conservative and dissipative parts separately so each
        # keeps its exact (skew) symmetry
        skew = congruence(0.5 * (sys.S - sys.S.T))
        cached = 0.5 * (skew - skew.T)
        if np.any(sys.S != sys.S.T * -1):
            sym = congruence(0.5 * (sys.S + sys.S.T))
            cached = cached + 0.5 * (sym + sym.T)
        sys.parts["_reduced"] = cached
    return cached


def _refined_real_parts(sys, vecs):
    """Real parts from the dissipation Rayleigh quotient ``x.S_sym x / x.E x``.

    For an eigenpair of the pencil this equals ``Re lam`` exactly, and it is
    free of the ``eps*||A||`` absolute error that plain QR eigenvalues carry
    for weakly damped high-frequency modes.
    """
    S_sym = 0.5 * (sys.S + sys.S.T)
    num = np.einsum("ij,ij->j", vecs.conj(), S_sym @ vecs).real
    den = np.einsum("ij,ij->j", vecs.conj(), sys.E @ vecs).real
    return num / den


def validity_ceiling(sys: DiscreteSystem) -> float:
    """Half the undamped frequency of the ``n_elements``-th bending mode.

    A Hermite mesh with ``n`` elements carries ``2n`` bending modes; only the
    lower half of them approximate the continuum modes.  The undamped beam
    pencil is used so the ceiling does not depend on damping, which turns the
    high modes of Kelvin-Voigt models into real (overdamped) eigenvalues.
    """
    p = sys.parts
    n = sys.n_elements
    w2 = scipy.linalg.eigh(p["stiff"], p["inertia"], eigvals_only=True, subset_by_index=[n - 1, n - 1])
    return 0.5 * math.sqrt(w2[0])


def fit_branch(eigenvalues, ceiling: float, skip: int = 2) -> BranchFit | None:
    ev = eigenvalues[(eigenvalues.imag > 0) & (eigenvalues.imag <= ceiling)]
    ev = ev[np.argsort(ev.imag)][skip:]
    ev = ev[-ev.real > 0]
    if len(ev) < 3:
        return None
    w, a = ev.imag, -ev.real
    slope, icpt = np.polyfit(np.log(w), np.log(a), 1)
    return BranchFit(w, a, float(-slope), float(np.exp(icpt)))


def spectrum(sys: DiscreteSystem, method: str = "auto", k: int = 40) -> SpectrumReport:
    """All finite generalized eigenvalues of ``lam E x = S x`` (dense), or the
    ``k`` eigenvalues closest to the imaginary axis near the low modes
    (shift-invert, used automatically above ``DENSE_LIMIT`` elements)."""
    if method == "auto":
        method = "dense" if sys.n_elements <= DENSE_LIMIT else "shift-invert"
    if method == "dense":
        vals, vecs = _dense_eig(sys)
    elif method == "shift-invert":
        vals, vecs = _shift_invert_eig(sys, k)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")

    re = _refined_real_parts(sys, vecs)
    vals = re + 1j * vals.imag
    # exact conjugate symmetry of real pencils
    vals = np.where(np.abs(vals.imag) < 1e-12 * max(1.0, np.abs(vals).max()), vals.real + 0j, vals)
    order = np.lexsort((vals.imag, np.abs(vals.imag)))
    vals, vecs = vals[order], vecs[:, order]
    residuals = _residuals(sys, vals, vecs)
    ceiling = validity_ceiling(sys)
    if method == "shift-invert":
        ceiling = min(ceiling, np.abs(vals.imag).max())
    return SpectrumReport(
        eigenvalues=vals,
        abscissa=float(vals.real.max()),
        n_elements=sys.n_elements,
        ceiling=float(ceiling),
        branch_fit=fit_branch(vals, ceiling),
        residuals=residuals,
    )


def _dense_eig(sys):
    Ar = reduced_operator(sys)
    try:
        vals, y = scipy.linalg.eig(Ar)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(sys.E)
        raise SpectralError(f"dense eigensolver failed ({exc}); cond(E) = {cond:.3e}") from exc
    L = sys.cholesky()
    vecs = scipy.linalg.solve_triangular(L.T, y, lower=False)
    return vals, vecs


def _shift_invert_eig(sys, k):
    E = scipy.sparse.csc_matrix(sys.E)
    S = scipy.sparse.csc_matrix(sys.S)
    k = min(k, sys.size - 2)
    try:
        vals, vecs = scipy.sparse.linalg.eigs(S, k=k, M=E, sigma=0.0, which="LM")
    except (scipy.sparse.linalg.ArpackError, RuntimeError) as exc:
        cond = np.linalg.cond(sys.E)
        raise SpectralError(f"shift-invert eigensolver failed ({exc}); cond(E) = {cond:.3e}") from exc
    return vals, vecs


def _residuals(sys, vals, vecs):
    """Relative residuals ``||(lam E - S) x|| / (||lam E - S|| ||x||)``, with the
    pencil norm bounded by ``|lam| ||E|| + ||S||``."""
    nE = np.linalg.norm(sys.E, 2) if sys.size <= 2048 else scipy.sparse.linalg.norm(scipy.sparse.csr_matrix(sys.E))
    nS = np.linalg.norm(sys.S, 2) if sys.size <= 2048 else scipy.sparse.linalg.norm(scipy.sparse.csr_matrix(sys.S))
    r = sys.E @ vecs * vals - sys.S @ vecs
    return np.linalg.norm(r, axis=0) / ((np.abs(vals) * nE + nS) * np.linalg.norm(vecs, axis=0))


def resolvent_norm(sys: DiscreteSystem, lam: float) -> float:
    """Energy-norm operator norm of ``(i lam - A)^{-1}``.

    Raises :class:`NearSingularError` when the smallest singular value of
    ``i lam - A_r`` is below ``NEAR_SINGULAR`` relative to ``max(1, ||A_r||)``.
    """
    Ar = reduced_operator(sys)
    scale = sys.parts.get("_reduced_norm")
    if scale is None:
        scale = sys.parts["_reduced_norm"] = float(np.linalg.norm(Ar, 2))
    M = -Ar.astype(complex)
    M[np.diag_indices_from(M)] += 1j * lam
    smin = scipy.linalg.svdvals(M, check_finite=False)[-1]
    if smin < NEAR_SINGULAR * max(1.0, scale):
        raise NearSingularError(lam, smin)
    return float(1.0 / smin)


def sweep_resolvent(
    sys: DiscreteSystem,
    lam_min: float,
    lam_max: float,
    points_per_decade: int = 20,
    report: SpectrumReport | None = None,
    at_eigenfrequencies: bool = True,
) -> ResolventSweep:
    """Sample the resolvent norm on ``[lam_min, lam_max]`` and fit its growth.

    Samples are log-spaced, plus (by default) one sample at each
    eigenfrequency in the window so every resonance peak is hit.  The
    envelope is the set of interior local maxima of the sampled curve; its
    log-log least-squares slope is the growth exponent.
    """
    if not 0 < lam_min < lam_max:
        raise ValueError("need 0 < lam_min < lam_max")
    decades = math.log10(lam_max / lam_min)
    if decades < 1.0:
        raise ValueError(f"sweep window spans {decades:.2f} decades; at least 1 is required")
    report = report if report is not None else spectrum(sys)
    if lam_max > report.ceiling * (1 + 1e-12):
        raise ValueError(
            f"lam_max = {lam_max:g} exceeds the spectral validity ceiling {report.ceiling:g} at n = {sys.n_elements}"
        )
    lams = np.logspace(math.log10(lam_min), math.log10(lam_max), max(2, int(round(decades * points_per_decade))) + 1)
    if at_eigenfrequencies:
        f = report.eigenvalues.imag
        lams = np.union1d(lams, f[(f >= lam_min) & (f <= lam_max)])
    good, bad = [], []
    for lam in lams:
        try:
            good.append((lam, resolvent_norm(sys, lam)))
        except NearSingularError:
            bad.append(lam)
    samples = np.array(good).reshape(-1, 2)
    singular = np.array(bad)
    envelope = _local_maxima(samples)
    if len(envelope) < 3 and len(singular) == 0:
        # no resonance peaks: the resolvent is smooth along the axis
        envelope = samples
    slope, refused = None, None
    if len(singular) > 0.5 * max(1, len(envelope)):
        refused = "samples dominated by spectral singularities on the imaginary axis"
    elif len(envelope) < 3:
        refused = f"only {len(envelope)} envelope points in the window"
    else:
        slope = float(np.polyfit(np.log(envelope[:, 0]), np.log(envelope[:, 1]), 1)[0])
    return ResolventSweep(samples, singular, envelope, (float(lam_min), float(lam_max)), slope, refused)


def _local_maxima(samples):
    if len(samples) < 3:
        return samples[:0]
    y = samples[:, 1]
    idx = np.where((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    return samples[idx]


def min_distance_to_spectrum(eigenvalues, lam: float) -> float:
    return float(np.abs(eigenvalues - 1j * lam).min())
