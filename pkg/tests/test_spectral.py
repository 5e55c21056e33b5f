import numpy as np
import pytest

from beamlab import (
    Elastic,
    KelvinVoigt,
    ModelSpec,
    TipBody,
    assemble,
    resolvent_norm,
    spectrum,
    sweep_resolvent,
)
from beamlab.spectral import NearSingularError, min_distance_to_spectrum, reduced_operator
from oracles import cantilever_frequencies


@pytest.fixture(scope="module")
def hybrid32():
    sys = assemble(ModelSpec(tip=TipBody()), 32)
    return sys, spectrum(sys)


def test_conservative_free_beam_frequencies():
    rep = spectrum(assemble(ModelSpec(), 32))
    up = rep.upper_branch(reliable_only=False)
    np.testing.assert_allclose(up.imag[:4], cantilever_frequencies(4), rtol=1e-5)
    assert np.all(np.abs(rep.eigenvalues.real) <= 1e-8 * np.abs(rep.eigenvalues.imag) + 1e-8)


def test_eigenvalues_sorted_by_frequency(any_spec):
    ev = spectrum(assemble(any_spec, 8)).eigenvalues
    assert np.all(np.diff(np.abs(ev.imag)) >= 0)


def test_conjugate_pairs(any_spec):
    ev = spectrum(assemble(any_spec, 16)).eigenvalues
    for lam in ev:
        assert np.abs(ev - np.conj(lam)).min() <= 1e-10 * max(1.0, abs(lam))


def test_eigen_residuals(any_spec):
    rep = spectrum(assemble(any_spec, 16))
    assert rep.residuals.max() <= 1e-8


def test_dissipative_abscissa_closed_left_half_plane(any_spec):
    assert spectrum(assemble(any_spec, 16)).abscissa <= 1e-8


def test_hybrid_elastic_branch(hybrid32):
    _, rep = hybrid32
    assert rep.abscissa < 0
    decay = -rep.upper_branch().real
    assert np.all(decay > 0)
    assert np.all(np.diff(decay) < 0)
    assert rep.branch_fit is not None and np.isfinite(rep.branch_fit.exponent)


def test_shift_invert_matches_dense_low_modes(hybrid32):
    sys, dense = hybrid32
    si = spectrum(sys, method="shift-invert", k=12)
    low = dense.eigenvalues[np.argsort(np.abs(dense.eigenvalues))][:12]
    np.testing.assert_allclose(np.sort_complex(si.eigenvalues), np.sort_complex(low), rtol=1e-9)
    assert si.ceiling <= dense.ceiling


def test_unknown_method_rejected(hybrid32):
    with pytest.raises(ValueError):
        spectrum(hybrid32[0], method="qz")


def test_resolvent_at_origin_is_inverse_norm(hybrid32):
    sys, _ = hybrid32
    Ar = reduced_operator(sys)
    assert resolvent_norm(sys, 0.0) == pytest.approx(np.linalg.norm(np.linalg.inv(Ar), 2), rel=1e-8)


def test_resolvent_in_energy_norm_by_definition(hybrid32):
    sys, _ = hybrid32
    lam = 7.3
    R = np.linalg.solve(1j * lam * sys.E - sys.S, sys.E)  # (i lam - A)^{-1}
    L = sys.cholesky()
    # energy norm of R equals the 2-norm of L^T R L^{-T}
    Rr = L.T @ R @ np.linalg.inv(L.T)
    assert resolvent_norm(sys, lam) == pytest.approx(np.linalg.norm(Rr, 2), rel=1e-6)


def test_resolvent_near_eigenvalue_is_flagged():
    sys = assemble(ModelSpec(), 16)
    w1 = spectrum(sys).upper_branch()[0].imag
    with pytest.raises(NearSingularError):
        resolvent_norm(sys, w1)


def test_resolvent_lower_bound_by_distance(hybrid32):
    sys, rep = hybrid32
    sw = sweep_resolvent(sys, 1.0, 100.0, 10, report=rep)
    for lam, norm in sw.samples:
        assert norm >= (1 - 1e-8) / min_distance_to_spectrum(rep.eigenvalues, lam)
    assert np.all(np.diff(sw.samples[:, 0]) > 0)
    assert np.all(sw.samples[:, 1] > 0)


def test_damping_lowers_abscissa():
    for n in (8, 16):
        damped = spectrum(assemble(ModelSpec(tip=TipBody()), n)).abscissa
        undamped = spectrum(assemble(ModelSpec(tip=TipBody(gamma=0, gamma_star=0)), n)).abscissa
        assert undamped >= damped - 1e-12


def test_conservative_sweep_refuses_fit():
    sys = assemble(ModelSpec(), 16)
    rep = spectrum(sys)
    sw = sweep_resolvent(sys, 1.0, 0.99 * rep.ceiling, 20, report=rep)
    assert sw.fitted_slope is None and sw.refused
    assert len(sw.singular) > 0


def test_sweep_window_checks(hybrid32):
    sys, rep = hybrid32
    with pytest.raises(ValueError, match="decades"):
        sweep_resolvent(sys, 10.0, 50.0, report=rep)
    with pytest.raises(ValueError, match="ceiling"):
        sweep_resolvent(sys, 1.0, 2 * rep.ceiling, report=rep)
    with pytest.raises(ValueError):
        sweep_resolvent(sys, 0.0, 10.0, report=rep)


def test_hybrid_elastic_resolvent_grows(hybrid32):
    sys, rep = hybrid32
    sw = sweep_resolvent(sys, 1.0, rep.ceiling, 20, report=rep)
    assert sw.fitted_slope is not None and sw.fitted_slope > 0.5
    # resonance peaks sit at 1/|Re lam_k|
    up = rep.upper_branch()
    for lam, norm in sw.envelope[:5]:
        k = np.argmin(np.abs(up.imag - lam))
        assert norm == pytest.approx(1.0 / abs(up[k].real), rel=0.05)


@pytest.mark.parametrize("tip", [None, TipBody()])
def test_kelvin_voigt_resolvent_bounded(tip):
    peaks = []
    for n in (16, 32):
        sys = assemble(ModelSpec(law=KelvinVoigt(), tip=tip), n)
        rep = spectrum(sys)
        w1 = rep.upper_branch()[0].imag
        sw = sweep_resolvent(sys, w1, 100 * w1, 20, report=rep)
        assert sw.fitted_slope is not None and sw.fitted_slope <= 0.3
        peaks.append(sw.samples[:, 1].max())
    assert peaks[1] == pytest.approx(peaks[0], rel=0.05)


def test_elastic_alpha_scales_spectrum():
    a = spectrum(assemble(ModelSpec(law=Elastic(alpha=1.0)), 8)).upper_branch().imag
    b = spectrum(assemble(ModelSpec(law=Elastic(alpha=4.0)), 8)).upper_branch().imag
    np.testing.assert_allclose(b[: len(a)], 2 * a, rtol=1e-10)
