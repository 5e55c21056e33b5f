"""Finite element semidiscretization ``E dx/dt = S x``.

Displacement uses cubic Hermite elements (nodal value and slope), the
temperature fields use continuous piecewise-linear elements with
``theta(0) = theta(l) = 0`` eliminated.  The clamped node at ``x = l``
carries no unknowns.  State vector blocks, in order::

    u (displacement)   v (velocity)   theta   Theta (type II only: theta_t)

``E`` is block diagonal and equals the energy form, so that
``energy(x) = x.E x / 2``.  In the hybrid case the tip velocities
``(w, z)`` are the velocity dofs ``(v(0), v_x(0))``; the tip inertia ``B``
and damping ``K`` are added to the velocity block at those two indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .model import (
    KelvinVoigt,
    ModelError,
    ModelSpec,
    NonsimpleThermo,
    ThermoTypeI,
    ThermoTypeII,
    build_tip_matrices,
)

# "energy": signs chosen so the energy identity closes (type II couples the
# moment to the temperature rate).  "printed": coupling signs exactly as the
# field equations are usually written, kept for comparison only.
COUPLING_CONVENTIONS = ("energy", "printed")


class AssemblyError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _gauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def hermite_basis(xi, h):
    """Cubic Hermite shape functions and their first two x-derivatives on ``[0, h]``.

    ``xi`` are reference coordinates in ``[0, 1]``.  Returns arrays of shape
    ``(4, len(xi))`` ordered (value_left, slope_left, value_right, slope_right).
    """
    xi = np.asarray(xi, dtype=float)
    N = np.array([
        1 - 3 * xi**2 + 2 * xi**3,
        h * (xi - 2 * xi**2 + xi**3),
        3 * xi**2 - 2 * xi**3,
        h * (-(xi**2) + xi**3),
    ])
    dN = np.array([
        -6 * xi + 6 * xi**2,
        h * (1 - 4 * xi + 3 * xi**2),
        6 * xi - 6 * xi**2,
        h * (-2 * xi + 3 * xi**2),
    ]) / h
    d2N = np.array([
        -6 + 12 * xi,
        h * (-4 + 6 * xi),
        6 - 12 * xi,
        h * (-2 + 6 * xi),
    ]) / h**2
    return N, dN, d2N


def temperature_basis(xi, h, r=1):
    """Hat functions of the ``r + 1`` temperature nodes inside one beam element.

    The element is split into ``r`` equal panels; ``xi`` must lie strictly
    inside panels (quadrature points), where the hats are linear.
    """
    xi = np.asarray(xi, dtype=float)
    nodes = np.linspace(0.0, 1.0, r + 1)
    L = np.clip(1.0 - r * np.abs(xi[None, :] - nodes[:, None]), 0.0, None)
    panel = np.minimum((xi * r).astype(int), r - 1)
    j = np.arange(r + 1)[:, None]
    dL = (np.where(panel == j - 1, 1.0, 0.0) - np.where(panel == j, 1.0, 0.0)) * r / h
    return L, dL


def element_matrices(h: float, order: int = 4, temp_refinement: int = 1) -> dict:
    """All element integrals for one element of length ``h``.

    Integration runs panel by panel over the ``temp_refinement`` temperature
    sub-intervals; a 4-point Gauss rule per panel is exact for every product
    here (highest polynomial degree is 6, from the consistent Hermite mass).
    """
    r = temp_refinement
    pts, wts = _gauss(order)
    ref = 0.5 * (pts + 1.0)
    xi = np.concatenate([(k + ref) / r for k in range(r)])
    w = np.tile(0.5 * h * wts / r, r)
    N, dN, d2N = hermite_basis(xi, h)
    L, dL = temperature_basis(xi, h, r)

    def integ(a, b):
        return (a[:, None, :] * b[None, :, :] * w).sum(axis=-1)

    return {
        "mass": integ(N, N),  # int phi_i phi_j
        "bend": integ(d2N, d2N),  # int phi_i'' phi_j''
        "stretch": integ(dN, dN),  # int phi_i' phi_j'
        "heat_mass": integ(L, L),  # int psi_i psi_j
        "heat_stiff": integ(dL, dL),  # int psi_i' psi_j'
        "curv_temp": integ(d2N, L),  # int phi_i'' psi_j
        "temp_curv": integ(L, d2N),  # int psi_i phi_j''
        "disp_tgrad": integ(N, dL),  # int phi_i psi_j'
        "temp_slope": integ(L, dN),  # int psi_i phi_j'
    }


@dataclass(frozen=True)
class DofLayout:
    n_elements: int
    length: float
    n_disp: int
    n_temp: int
    has_theta: bool
    has_theta_rate: bool
    temp_refinement: int = 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_elements + 1)

    @property
    def temperature_nodes(self) -> np.ndarray:
        """Coordinates of the interior (unknown) temperature nodes."""
        m = self.n_elements * self.temp_refinement
        return np.linspace(0.0, self.length, m + 1)[1:-1]

    @property
    def u(self) -> slice:
        return slice(0, self.n_disp)

    @property
    def v(self) -> slice:
        return slice(self.n_disp, 2 * self.n_disp)

    @property
    def theta(self) -> slice | None:
        if not self.has_theta:
            return None
        start = 2 * self.n_disp
        return slice(start, start + self.n_temp)

    @property
    def theta_rate(self) -> slice | None:
        if not self.has_theta_rate:
            return None
        start = 2 * self.n_disp + self.n_temp
        return slice(start, start + self.n_temp)

    @property
    def size(self) -> int:
        return 2 * self.n_disp + self.n_temp * (int(self.has_theta) + int(self.has_theta_rate))

    @property
    def tip_displacement(self) -> tuple[int, int]:
        """State indices of ``(u(0), u_x(0))``."""
        return (0, 1)

    @property
    def tip_velocity(self) -> tuple[int, int]:
        """State indices of ``(v(0), v_x(0))``, i.e. the tip velocities ``(w, z)``."""
        return (self.n_disp, self.n_disp + 1)

    def blocks(self) -> dict[str, slice]:
        out = {"u": self.u, "v": self.v}
        if self.has_theta:
            out["theta"] = self.theta
        if self.has_theta_rate:
            out["theta_rate"] = self.theta_rate
        return out


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Assembled pencil ``(E, S)``; ``H`` is the energy form (identical to ``E``)."""

    spec: ModelSpec
    layout: DofLayout
    E: np.ndarray
    S: np.ndarray
    coupling: str = "energy"
    # operators used by the physical energy and dissipation formulas
    parts: dict = field(default_factory=dict, repr=False)

    @property
    def H(self) -> np.ndarray:
        return self.E

    @property
    def n_elements(self) -> int:
        return self.layout.n_elements

    @property
    def size(self) -> int:
        return self.layout.size

    @property
    def conservative(self) -> bool:
        law = self.spec.law
        tip_ok = self.spec.tip is None or self.spec.tip.conservative
        return tip_ok and not isinstance(law, (KelvinVoigt, ThermoTypeI, NonsimpleThermo))

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor ``L`` of the energy form, ``H = L L^T``."""
        return _cholesky(self)


def _cholesky(sys: DiscreteSystem) -> np.ndarray:
    cached = sys.parts.get("_chol")
    if cached is None:
        try:
            cached = scipy.linalg.cholesky(sys.E, lower=True)
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(f"energy form is not positive definite: {exc}") from exc
        sys.parts["_chol"] = cached
    return cached


def _assemble_global(n, r, ke, rows, cols):
    """Scatter the element matrix ``ke`` over ``n`` elements.

    ``rows``/``cols`` select the dof map of each side: "hermite" or
    "linear" (``r`` temperature panels per element).  Dofs of the clamped
    node and the two Dirichlet temperature nodes are dropped.
    """
    size = {"hermite": 2 * n, "linear": n * r - 1}
    out = np.zeros((size[rows], size[cols]))
    for e in range(n):
        ri = _dofmap(e, n, r, rows)
        ci = _dofmap(e, n, r, cols)
        keep_r, keep_c = ri >= 0, ci >= 0
        out[np.ix_(ri[keep_r], ci[keep_c])] += ke[np.ix_(keep_r, keep_c)]
    return out


def _dofmap(e, n, r, kind):
    if kind == "hermite":
        dofs = np.arange(2 * e, 2 * e + 4)
        return np.where(dofs < 2 * n, dofs, -1)
    # interior temperature node k maps to k - 1
    k = np.arange(e * r, e * r + r + 1)
    return np.where((k > 0) & (k < n * r), k - 1, -1)


def assemble(
    spec: ModelSpec, n_elements: int, coupling: str = "energy", temp_refinement: int = 2
) -> DiscreteSystem:
    """Assemble the first-order system for ``spec`` on a uniform mesh.

    Temperature fields live on a linear mesh ``temp_refinement`` times finer
    than the beam mesh, so that the thermal coupling reaches (nearly) every
    bending mode the Hermite space carries.
    """
    if int(n_elements) != n_elements or n_elements < 2:
        raise ModelError(f"n_elements must be an integer >= 2, got {n_elements!r}")
    if coupling not in COUPLING_CONVENTIONS:
        raise ModelError(f"coupling must be one of {COUPLING_CONVENTIONS}, got {coupling!r}")
    if int(temp_refinement) != temp_refinement or temp_refinement < 1:
        raise ModelError(f"temp_refinement must be a positive integer, got {temp_refinement!r}")
    n, r = int(n_elements), int(temp_refinement)
    law = spec.law
    h = spec.length / n
    em = element_matrices(h, temp_refinement=r)

    def glob(key, rows="hermite", cols="hermite"):
        return _assemble_global(n, r, em[key], rows, cols)

    mass = glob("mass")
    bend = glob("bend")
    Nu = 2 * n
    stiff = law.alpha * bend
    if isinstance(law, NonsimpleThermo):
        stiff = stiff + law.mu * glob("stretch")
    inertia = spec.rho * mass
    damping = np.zeros((Nu, Nu))
    if isinstance(law, KelvinVoigt):
        damping += law.alpha0 * bend
    if spec.tip is not None:
        B, K = build_tip_matrices(spec.tip)
        inertia[:2, :2] += B
        damping[:2, :2] += K

    has_theta = isinstance(law, (ThermoTypeI, ThermoTypeII, NonsimpleThermo))
    has_rate = isinstance(law, ThermoTypeII)
    Nt = n * r - 1 if has_theta else 0
    layout = DofLayout(n, spec.length, Nu, Nt, has_theta, has_rate, r)
    size = layout.size
    E = np.zeros((size, size))
    S = np.zeros((size, size))
    u, v = layout.u, layout.v
    E[u, u] = stiff
    E[v, v] = inertia
    S[u, v] = stiff
    S[v, u] = -stiff
    S[v, v] = -damping
    parts = {"mass": mass, "bend": bend, "stiff": stiff, "inertia": inertia, "damping": damping}

    if has_theta:
        th = layout.theta
        hm = glob("heat_mass", "linear", "linear")
        hk = glob("heat_stiff", "linear", "linear")
        parts.update(heat_mass=hm, heat_stiff=hk)
        mc, c = law.m_couple, law.c_heat
        if isinstance(law, ThermoTypeI):
            # beam: int M phi'' with M = alpha u_xx + m theta
            S[v, th] = -mc * glob("curv_temp", "hermite", "linear")
            sign = 1.0 if coupling == "energy" else -1.0
            S[th, v] = sign * mc * glob("temp_curv", "linear", "hermite")
            S[th, th] = -law.kappa * hk
            E[th, th] = c * hm
        elif isinstance(law, NonsimpleThermo):
            # beam: + m int theta_x phi ; heat: + m int v_x psi
            S[v, th] = -mc * glob("disp_tgrad", "hermite", "linear")
            S[th, v] = -mc * glob("temp_slope", "linear", "hermite")
            S[th, th] = -law.kappa * hk
            E[th, th] = c * hm
        else:
            tr = layout.theta_rate
            # theta is the thermal displacement, Theta = theta_t the temperature
            E[th, th] = law.k_star * hk
            S[th, tr] = law.k_star * hk
            S[tr, th] = -law.k_star * hk
            E[tr, tr] = c * hm
            S[tr, v] = mc * glob("temp_curv", "linear", "hermite")
            moment_field = tr if coupling == "energy" else th
            S[v, moment_field] = -mc * glob("curv_temp", "hermite", "linear")

    sys = DiscreteSystem(spec, layout, E, S, coupling, parts)
    if not np.allclose(E, E.T, rtol=0, atol=1e-13 * np.abs(E).max()):
        raise AssemblyError("assembled E is not symmetric")
    sys.cholesky()
    return sys


def refine(spec: ModelSpec, levels, **kwargs) -> list[DiscreteSystem]:
    """Independent assemblies for each element count in ``levels``."""
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ModelError(f"refinement levels must be strictly increasing, got {levels}")
    return [assemble(spec, n, **kwargs) for n in levels]


def _check_state(sys: DiscreteSystem, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (sys.size,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.size},)")
    return x


def _quad(A, a, b=None):
    b = a if b is None else b
    return float(np.real(np.vdot(a, A @ b)))


def energy(sys: DiscreteSystem, x) -> float:
    """Total energy ``x.H x / 2``."""
    x = _check_state(sys, x)
    return 0.5 * _quad(sys.H, x)


def energy_parts(sys: DiscreteSystem, x) -> dict[str, float]:
    """Energy split into strain, beam kinetic, tip and thermal contributions.

    Computed from the physical operators rather than from ``H``; the parts
    sum to :func:`energy`.
    """
    x = _check_state(sys, x)
    lay, p, spec = sys.layout, sys.parts, sys.spec
    xu, xv = x[lay.u], x[lay.v]
    out = {
        "strain": 0.5 * _quad(p["stiff"], xu),
        "kinetic": 0.5 * spec.rho * _quad(p["mass"], xv),
        "tip": 0.0,
        "thermal": 0.0,
    }
    if spec.tip is not None:
        B, _ = build_tip_matrices(spec.tip)
        out["tip"] = 0.5 * _quad(B, xv[:2])
    law = spec.law
    if isinstance(law, ThermoTypeII):
        out["thermal"] = 0.5 * (
            law.k_star * _quad(p["heat_stiff"], x[lay.theta])
            + law.c_heat * _quad(p["heat_mass"], x[lay.theta_rate])
        )
    elif lay.has_theta:
        out["thermal"] = 0.5 * law.c_heat * _quad(p["heat_mass"], x[lay.theta])
    return out


def dissipation_rate(sys: DiscreteSystem, x) -> float:
    """Instantaneous energy rate from the physical dissipation formulas.

    Tip: ``-(gamma w^2 + d gamma w z + d gamma* z^2)``; Kelvin-Voigt adds
    ``-alpha0 int v_xx^2``; Fourier heat conduction adds ``-kappa int theta_x^2``.
    """
    x = _check_state(sys, x)
    lay, p, spec, law = sys.layout, sys.parts, sys.spec, sys.spec.law
    rate = 0.0
    if spec.tip is not None:
        _, K = build_tip_matrices(spec.tip)
        rate -= _quad(K, x[lay.v][:2])
    if isinstance(law, KelvinVoigt):
        rate -= law.alpha0 * _quad(p["bend"], x[lay.v])
    if isinstance(law, (ThermoTypeI, NonsimpleThermo)):
        rate -= law.kappa * _quad(p["heat_stiff"], x[lay.theta])
    return rate


def power(sys: DiscreteSystem, x) -> float:
    """``Re <A x, x>_H`` with ``A = E^{-1} S``, which reduces to ``Re x.S x``."""
    x = _check_state(sys, x)
    return _quad(sys.S, x)


def state_from_fields(sys: DiscreteSystem, u=None, u_x=None, v=None, v_x=None) -> np.ndarray:
    """Interpolate callables onto the Hermite dofs (value and slope at free nodes)."""
    x = np.zeros(sys.size)
    nodes = sys.layout.nodes[:-1]
    for blk, f, df in ((sys.layout.u, u, u_x), (sys.layout.v, v, v_x)):
        if f is not None:
            x[blk][0::2] = f(nodes)
        if df is not None:
            x[blk][1::2] = df(nodes)
    return x
