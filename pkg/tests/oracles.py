"""Closed-form reference values used as test oracles."""

import numpy as np
from scipy.optimize import brentq


def hermite_mass(h):
    """Consistent mass of a cubic Hermite beam element, unit density."""
    return h / 420.0 * np.array([
        [156, 22 * h, 54, -13 * h],
        [22 * h, 4 * h * h, 13 * h, -3 * h * h],
        [54, 13 * h, 156, -22 * h],
        [-13 * h, -3 * h * h, -22 * h, 4 * h * h],
    ])


def hermite_bending(h):
    """Bending stiffness int phi_i'' phi_j'' of a cubic Hermite element."""
    return 1.0 / h**3 * np.array([
        [12, 6 * h, -12, 6 * h],
        [6 * h, 4 * h * h, -6 * h, 2 * h * h],
        [-12, -6 * h, 12, -6 * h],
        [6 * h, 2 * h * h, -6 * h, 4 * h * h],
    ])


def hermite_stretch(h):
    """Geometric stiffness int phi_i' phi_j' of a cubic Hermite element."""
    return 1.0 / (30.0 * h) * np.array([
        [36, 3 * h, -36, 3 * h],
        [3 * h, 4 * h * h, -3 * h, -h * h],
        [-36, -3 * h, 36, -3 * h],
        [3 * h, -h * h, -3 * h, 4 * h * h],
    ])


def linear_mass(h):
    return h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def linear_stiffness(h):
    return 1.0 / h * np.array([[1.0, -1.0], [-1.0, 1.0]])


def cantilever_roots(count):
    """First ``count`` roots of cos(b) cosh(b) = -1."""
    f = lambda b: np.cos(b) * np.cosh(b) + 1.0
    roots = []
    for k in range(1, count + 1):
        guess = (k - 0.5) * np.pi
        roots.append(brentq(f, guess - 0.5, guess + 0.5, xtol=1e-15))
    return np.array(roots)


def cantilever_frequencies(count, alpha=1.0, rho=1.0, length=1.0):
    beta = cantilever_roots(count) / length
    return beta**2 * np.sqrt(alpha / rho)


def observed_orders(errors, levels):
    """Pairwise orders log(e_i / e_{i+1}) / log(n_{i+1} / n_i)."""
    e, n = np.asarray(errors, float), np.asarray(levels, float)
    return np.log(e[:-1] / e[1:]) / np.log(n[1:] / n[:-1])
