import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import eval_hermite, factorial

import cavityef.lcao_dho as ld
from cavityef.efactor import PotentialCurve
from cavityef.errors import EmptyReportError, NumericError, UsageError
from cavityef.model import ModelParams, first_derivative_matrix, make_grid
from cavityef.resonance import delocalization_metric

from conftest import LOCATED, REFERENCE

P01 = ModelParams(lambda_c=0.1, omega_c=REFERENCE[0.1])
P05 = ModelParams(lambda_c=0.5, omega_c=REFERENCE[0.5])


def textbook_oscillator(n, centre, q, omega):
    """Hermite-function oscillator state from scipy, times the (-1)**n phase."""
    y = np.sqrt(omega) * (q - centre)
    norm = (omega / np.pi) ** 0.25 / np.sqrt(2.0**n * factorial(n))
    return (-1) ** n * norm * eval_hermite(n, y) * np.exp(-0.5 * y * y)


# -- orbitals and LCAO elements ----------------------------------------------


@pytest.mark.parametrize("side", [ld.LEFT, ld.RIGHT])
def test_orbital_normalization_and_peak(side):
    p = ModelParams()
    norm, _ = integrate.quad(lambda x: ld.atomic_orbital(side, x, p) ** 2, -np.inf, np.inf)
    assert norm == pytest.approx(1.0, abs=1e-12)
    assert ld.atomic_orbital(side, side * p.a, p) == pytest.approx((p.omega_e / np.pi) ** 0.25)


def test_orbital_product_peaks_at_origin():
    p = ModelParams()
    x = np.linspace(-4, 4, 801)
    prod = ld.atomic_orbital(ld.LEFT, x, p) * ld.atomic_orbital(ld.RIGHT, x, p)
    assert x[np.argmax(prod)] == 0.0


def test_orbital_overlap_matches_closed_form():
    p = ModelParams()
    s, _ = integrate.quad(
        lambda x: ld.atomic_orbital(ld.LEFT, x, p) * ld.atomic_orbital(ld.RIGHT, x, p),
        -np.inf, np.inf, epsabs=1e-16,
    )
    assert ld.lcao_elements(p).s == pytest.approx(s, rel=1e-9)


def test_onsite_and_hopping_elements():
    p = ModelParams()
    el = ld.lcao_elements(p)
    # the double-well potential never exceeds the single-well one
    assert el.alpha <= p.omega_e / 2
    assert el.alpha == pytest.approx(p.omega_e / 2, abs=1e-4)
    assert el.beta < 0
    far = ld.lcao_elements(ModelParams(a=6.0))
    assert far.alpha == pytest.approx(0.8, abs=1e-14)
    assert abs(far.beta) < 1e-20


def test_elements_agree_with_trapezoid_on_a_fine_grid():
    p = ModelParams()
    x = np.linspace(-14, 14, 5601)
    h = x[1] - x[0]
    phl, phr = ld.atomic_orbital(ld.LEFT, x, p), ld.atomic_orbital(ld.RIGHT, x, p)
    v = 0.5 * p.omega_e**2 * (np.abs(x) - p.a) ** 2
    # analytic second derivative of the right orbital
    d2r = phr * ((p.omega_e * (x - p.a)) ** 2 - p.omega_e)
    d2l = phl * ((p.omega_e * (x + p.a)) ** 2 - p.omega_e)
    alpha = np.sum(phl * (-0.5 * d2l + v * phl)) * h
    beta = np.sum(phl * (-0.5 * d2r + v * phr)) * h
    el = ld.lcao_elements(p)
    assert el.alpha == pytest.approx(alpha, abs=1e-8)
    assert el.beta == pytest.approx(beta, abs=1e-8)


# -- Laguerre and oscillator overlaps ----------------------------------------


@pytest.mark.parametrize("n", range(0, 9))
@pytest.mark.parametrize("k", [0, 1, 2.5])
def test_laguerre_recurrence_matches_power_sum(n, k):
    x = np.linspace(0, 6, 25)
    direct = ld.laguerre_direct(n, k, x)
    assert np.allclose(ld.laguerre(n, k, x), direct, rtol=1e-12, atol=1e-12)


def test_overlap_vanishes_without_coupling():
    p = ModelParams(lambda_c=0.0)
    for n in (1, 2, 3):
        assert ld.dho_overlap(n, p) == 0.0
        assert abs(ld.dho_overlap_quadrature(n, p)) < 1e-14


def test_q_element_without_coupling():
    p = ModelParams(lambda_c=0.0, omega_c=0.4)
    # sign follows the (-1)**n phase on the oscillator states
    assert ld.dho_q_element(1, p) == pytest.approx(-1 / math.sqrt(2 * p.omega_c), rel=1e-12)
    assert ld.dho_q_element(3, p) == pytest.approx(-math.sqrt(3 / (2 * p.omega_c)), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("lam", [0.05, 0.1, 0.5, 0.9])
def test_closed_form_overlap_matches_quadrature(n, lam):
    p = ModelParams(lambda_c=lam, omega_c=0.4)
    assert ld.dho_overlap(n, p) == pytest.approx(ld.dho_overlap_quadrature(n, p), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_overlap_and_q_element_against_independent_grid(n):
    p = P01
    q = np.linspace(-30, 30, 24001)
    h = q[1] - q[0]
    left = textbook_oscillator(n, -p.lambda_c * p.a / p.omega_c, q, p.omega_c)
    right = textbook_oscillator(n - 1, p.lambda_c * p.a / p.omega_c, q, p.omega_c)
    assert ld.dho_function(n, ld.LEFT, q, p) == pytest.approx(left, abs=1e-12)
    assert ld.dho_overlap(n, p) == pytest.approx(np.sum(left * right) * h, abs=1e-10)
    assert ld.dho_q_element(n, p) == pytest.approx(np.sum(left * q * right) * h, abs=1e-10)


def test_overlap_reference_values():
    assert ld.dho_overlap(1, P01) == pytest.approx(-0.4676, abs=1e-4)
    assert ld.dho_overlap(1, P01, form="printed") == pytest.approx(-0.827, abs=1e-3)
    assert ld.dho_overlap(1, P01) < 0
    with pytest.raises(UsageError):
        ld.dho_overlap(1, P01, form="other")
    with pytest.raises(UsageError):
        ld.dho_overlap(0, P01)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(1, 6), lam=st.floats(0, 1), w=st.floats(0.1, 2))
def test_overlap_magnitude_bounded(n, lam, w):
    assert abs(ld.dho_overlap(n, ModelParams(lambda_c=lam, omega_c=w))) <= 1 + 1e-12


def test_mirror_swaps_overlap_sign_but_not_q_element():
    p = P05
    q = np.linspace(-30, 30, 24001)
    h = q[1] - q[0]
    for n in (1, 2):
        swapped = ld.dho_function(n, ld.RIGHT, q, p) * ld.dho_function(n - 1, ld.LEFT, q, p)
        assert np.sum(swapped) * h == pytest.approx(-ld.dho_overlap(n, p), abs=1e-10)
        assert np.sum(swapped * q) * h == pytest.approx(ld.dho_q_element(n, p), abs=1e-10)


def test_dho_state_energy_and_centre():
    st_ = ld.DhoState(ld.RIGHT, 2, P01)
    assert st_.centre == pytest.approx(P01.lambda_c * P01.a / P01.omega_c)
    assert st_.energy == pytest.approx(P01.delta + 2.5 * P01.omega_c)
    assert st_(st_.centre + 0.3) == pytest.approx(ld.dho_function(2, ld.RIGHT, st_.centre + 0.3, P01))


# -- ground state -------------------------------------------------------------


def test_ground_eph_potential_values():
    p = P05
    assert ld.ground_eph_potential(-p.a, p) == pytest.approx(p.omega_c / 2)
    assert ld.ground_eph_potential(p.a, p) == pytest.approx(p.omega_c / 2 + 2 * p.lambda_c**2 * p.a**2)
    curve = ld.approx_ground_curve(np.linspace(-5, 5, 11), p)
    assert np.all(curve.mask) and np.all(curve.eph_kin == 0)


# -- polaritons ---------------------------------------------------------------


def test_polaritons_without_coupling_are_degenerate():
    p = ModelParams(lambda_c=1e-9, omega_c=0.4)
    el = ld.lcao_elements(p)
    for b in "-+":
        assert ld.approx_polariton(1, b, p).energy == pytest.approx(p.omega_c + el.alpha, abs=1e-9)


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
def test_lower_branch_is_lower(lam):
    p = ModelParams(lambda_c=lam, omega_c=REFERENCE[lam])
    lo, hi = ld.approx_polariton(1, "-", p), ld.approx_polariton(1, "+", p)
    assert lo.energy < hi.energy
    assert lo.coefficients[0] == pytest.approx(-lo.coefficients[1])


def test_weak_coupling_splitting_close_to_exact():
    from cavityef.eigensolver import solve_lowest
    from cavityef.model import assemble_coupled_hamiltonian

    p = ModelParams(lambda_c=0.1, omega_c=LOCATED[0.1])
    g = make_grid(p)
    exact = solve_lowest(assemble_coupled_hamiltonian(g, p), k=3).energies
    approx = ld.approx_polariton(1, "+", p).energy - ld.approx_polariton(1, "-", p).energy
    assert approx == pytest.approx(exact[2] - exact[1], rel=0.15)


@pytest.mark.parametrize("b", ["-", "+"])
def test_approx_wavefunction_is_normalized(b):
    g = make_grid(P05)
    psi = ld.approx_wavefunction(1, b, g, P05)
    assert np.sum(psi**2) * g.dx * g.dq == pytest.approx(1.0, abs=1e-8)


def test_third_level_warning():
    with pytest.warns(RuntimeWarning):
        pol = ld.approx_polariton(1, "+", P01, third_level=0.0)
    assert pol.warnings
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert ld.approx_polariton(1, "+", P01, third_level=10.0).warnings == []


def test_nonpositive_normalization_raises(monkeypatch):
    monkeypatch.setattr(ld, "dho_overlap", lambda n, p, form="exact": -1.0)
    monkeypatch.setattr(ld, "lcao_elements", lambda p: ld.LcaoElements(0.8, -0.1, 1.0))
    with pytest.raises(NumericError):
        ld.approx_polariton(1, "+", P01)


def test_bad_branch_and_manifold():
    with pytest.raises(UsageError):
        ld.approx_polariton(1, "sideways", P01)
    with pytest.raises(UsageError):
        ld.approx_polariton(1.5, "-", P01)


# -- marginal and potential terms ---------------------------------------------


@pytest.mark.parametrize("b", ["-", "+"])
def test_marginal_norm_tail_and_symmetry(b):
    x = np.linspace(-10, 10, 2001)
    phi = ld.approx_marginal(1, b, x, P05)
    nu = ld.approx_polariton(1, b, P05).nu
    assert np.sum(phi**2) * (x[1] - x[0]) == pytest.approx(1.0, abs=1e-10)
    far = np.abs(x + 6) < 1e-9
    tail = ld.atomic_orbital(ld.LEFT, x[far], P05) / np.sqrt(2 * nu)
    assert phi[far] == pytest.approx(tail, rel=1e-8)
    assert delocalization_metric(phi, x) < 1e-12


def test_radicand_violation_is_reported(monkeypatch):
    x = np.linspace(-3, 3, 61)
    assert ld.radicand_report(1, "-", x, P01).violations == 0
    monkeypatch.setattr(ld, "dho_overlap", lambda n, p, form="exact": -1.5)
    report = ld.radicand_report(1, "+", x, P01)
    assert report.violations > 0 and report.most_negative < 0
    monkeypatch.setattr(ld, "approx_polariton", lambda *a, **k: type("P", (), {"nu": 1.0})())
    with pytest.warns(RuntimeWarning):
        phi = ld.approx_marginal(1, "+", x, P01)
    assert np.all(phi >= 0) and np.all(np.isfinite(phi))


@pytest.mark.parametrize("p", [P01, P05])
@pytest.mark.parametrize("b", ["-", "+"])
def test_kinetic_term_peaks_at_origin_with_closed_form_height(p, b):
    x = np.linspace(-4, 4, 801)
    kin = ld.approx_kinetic_term(1, b, x, p)
    i, xp, height = ld.peak_location(x, kin, np.isfinite(kin), 2.0)
    assert xp == 0.0
    assert height == pytest.approx(ld.peak_height_at_origin(1, b, p), rel=1e-12)


def test_kinetic_peak_limit_for_vanishing_overlap():
    p = ModelParams(lambda_c=3.0, omega_c=0.4)
    assert abs(ld.dho_overlap(1, p)) < 1e-40
    limit = p.a**2 * p.omega_e**2 / 2
    assert limit == pytest.approx(7.0688)
    for b in "-+":
        assert ld.peak_height_at_origin(1, b, p) == pytest.approx(limit, rel=1e-12)


@pytest.mark.parametrize("b", ["-", "+"])
def test_kinetic_term_matches_numerical_differentiation(b):
    p = P05
    g = make_grid(p, nx=1601, nq=401)
    psi = ld.approx_wavefunction(1, b, g, p)
    phi = ld.approx_marginal(1, b, g.x_nodes, p)
    chi = psi / phi[:, None]
    dchi = first_derivative_matrix(g.nx, g.dx) @ chi
    numeric = 0.5 * np.sum(dchi**2, axis=1) * g.dq
    analytic = ld.approx_kinetic_term(1, b, g.x_nodes, p)
    inner = np.abs(g.x_nodes) < 4
    assert np.allclose(numeric[inner], analytic[inner], rtol=1e-4, atol=1e-12)


def test_step_term_has_height_omega():
    p = ModelParams(lambda_c=0.1, omega_c=REFERENCE[0.1])
    x = np.linspace(-8, 8, 161)
    for b in "-+":
        step = ld.step_term(1, b, x, p)
        nu = ld.approx_polariton(1, b, p).nu
        height = ld.plateau_step(x, step, np.isfinite(step))
        assert height == pytest.approx(p.omega_c * nu, rel=1e-6)
        assert step[80] == pytest.approx(0.0, abs=1e-14)


def test_em_term_reduces_to_step_without_coupling():
    p = ModelParams(lambda_c=1e-7, omega_c=0.4)
    x = np.linspace(-6, 6, 121)
    em = ld.approx_em_term(1, "-", x, p)
    valid = np.isfinite(em)
    assert valid[20:101].all()
    expected = p.omega_c + ld.step_term(1, "-", x, p)
    assert np.allclose(em[valid], expected[valid], atol=1e-10)


def test_excited_curve_fields():
    x = np.linspace(-8, 8, 161)
    curve = ld.approx_excited_curve(1, "-", x, P05)
    assert np.all(np.isfinite(curve.total[curve.mask]))
    assert np.all(np.isnan(curve.eph_kin[~curve.mask]))
    assert curve.mask[80]


# -- comparison ----------------------------------------------------------------


def test_compare_curve_with_itself():
    x = np.linspace(-8, 8, 161)
    curve = ld.approx_excited_curve(1, "+", x, P05)
    c = ld.compare_curves(curve, curve)
    assert c.max_abs_diff == 0.0 and c.rms_diff == 0.0
    assert c.peak_offset_nodes == 0 and c.peak_x_exact == 0.0
    assert c.step_exact == c.step_approx


def test_compare_rejects_mismatch_and_empty_overlap():
    x = np.linspace(-8, 8, 161)
    curve = ld.approx_excited_curve(1, "+", x, P05)
    other = ld.approx_excited_curve(1, "+", x + 0.01, P05)
    with pytest.raises(UsageError):
        ld.compare_curves(curve, other)
    empty = PotentialCurve(
        x, curve.bare, curve.eph_em, curve.eph_kin, np.zeros(x.size, dtype=bool)
    )
    with pytest.raises(EmptyReportError):
        ld.compare_curves(curve, empty)


def test_density_helpers():
    x = np.linspace(-8, 8, 321)
    rho = ld.ground_density_on_potential(x, 0.5 * x**2)
    assert np.sum(rho) * (x[1] - x[0]) == pytest.approx(1.0)
    assert ld.density_spread(x, rho, 0.0) == pytest.approx(0.5, rel=1e-4)
    assert ld.well_curvature(x, 0.5 * 3.0 * (x + 2) ** 2, np.ones_like(x, bool), ld.LEFT) == pytest.approx(3.0)
