import math
from dataclasses import replace

import numpy as np
import pytest

from mrtfit import (
    FrequencyGrid,
    LineShapes,
    MrtParams,
    convolve,
    rate_01,
    rate_03,
    simulate_curve,
    total_rate,
)
from mrtfit.errors import DomainError, ValidationError
from mrtfit.units import energy_to_flux, flux_to_energy, kelvin_to_ghz

import oracles
from conftest import REF


def make_params(**overrides):
    return MrtParams(**{**REF, **overrides})


# ---------------------------------------------------------------------------
# raw convolution operator

def test_convolve_identity_with_discrete_delta():
    grid = FrequencyGrid.build(-4.0, 4.0, 1e-3)
    nu = grid.values
    f = np.exp(-((nu - 0.4) ** 2) / (2 * 0.09))
    delta = np.zeros_like(nu)
    delta[grid.index_of_zero] = 1.0 / grid.step
    out = convolve(f, delta, grid)
    np.testing.assert_allclose(out, f, rtol=0, atol=1e-12 * f.max())


def test_convolve_gaussian_closure():
    grid = FrequencyGrid.build(-6.0, 6.0, 5e-4)
    nu = grid.values
    s1, s2, m1, m2 = 0.21, 0.34, 0.3, -0.11

    def gauss(x, mu, s):
        return np.exp(-((x - mu) ** 2) / (2 * s * s)) / (math.sqrt(2 * math.pi) * s)

    out = convolve(gauss(nu, m1, s1), gauss(nu, m2, s2), grid)
    s12 = math.hypot(s1, s2)
    expect = gauss(nu, m1 + m2, s12)
    i_peak = np.argmax(expect)
    assert out[i_peak] == pytest.approx(expect[i_peak], rel=1e-6)
    core = expect > expect.max() * 1e-6
    np.testing.assert_allclose(out[core], expect[core], rtol=1e-5)


def test_convolve_against_direct_quadrature():
    # tabulated envelope pair versus adaptive quadrature at sample points
    ip, t_k = REF["ip_a"], REF["temperature_k"]
    w = flux_to_energy(37.2, ip)
    g = flux_to_energy(5.0, ip)        # wide enough to resolve on this grid
    t = kelvin_to_ghz(t_k)
    grid = FrequencyGrid.build(-8 * w - 40 * t, 8 * w + 40 * t + 40 * g, g / 6)
    nu = grid.values
    ep = w * w / (2 * t)
    g_l = np.array([oracles.o_g_low(x, w, t) for x in nu])
    g_h = np.array([oracles.o_g_high(x, g, t) for x in nu])
    out = convolve(g_h, g_l, grid)
    samples = np.linspace(-1.2, 2.2, 20)
    for nu_s in samples:
        k = int(round((nu_s - grid.lo) / grid.step))
        expect = oracles.quad_g01(nu[k], w, g, t)
        assert out[k] == pytest.approx(expect, rel=1e-4)


def test_convolve_requires_matching_grids():
    grid = FrequencyGrid.build(-1.0, 1.0, 1e-3)
    with pytest.raises(ValidationError):
        convolve(np.zeros(len(grid) - 1), np.zeros(len(grid)), grid)


# ---------------------------------------------------------------------------
# zeroth peak

def test_rate01_gaussian_closed_form_at_peak():
    # no ohmic noise: the peak value has a closed form
    p = make_params(gamma_phi_uphi0=0.0, zeta_phi_uphi0=0.0)
    w = p.w_ghz()
    ep = w * w / (2 * p.temperature_ghz())
    phi_peak = energy_to_flux(ep, p.ip_a)
    expect = oracles.rate_coef(p.delta01_ghz) / (math.sqrt(2 * math.pi) * w)
    assert rate_01(phi_peak, p) == pytest.approx(expect, rel=1e-12)
    assert phi_peak == pytest.approx(38.9, abs=0.1)
    assert expect == pytest.approx(9.16e-2, rel=1e-2)   # about 9.2e4 1/s


def test_rate01_matches_quadrature_oracle(ref_params):
    p = ref_params
    shapes = LineShapes(p, -500.0, 3000.0)
    w, g, t = p.w_ghz(), p.gamma_ghz(), p.temperature_ghz()
    coef = oracles.rate_coef(p.delta01_ghz)
    for phi in (-150.0, 0.0, 38.9, 120.0, 400.0, 1200.0, 2500.0):
        eps = flux_to_energy(phi, p.ip_a)
        expect = coef * oracles.quad_g01(eps, w, g, t)
        got = shapes.rate01(phi)[0]
        assert got == pytest.approx(expect, rel=1e-3), phi


def test_rate01_bloch_redfield_limit():
    # vanishing Gaussian width, bias far above the ohmic width
    p = make_params(w_phi_uphi0=0.01, zeta_phi_uphi0=0.0)
    t = p.temperature_ghz()
    eta = 2 * p.gamma_ghz() / t
    for eps in (1.0, 2.0, 3.0):
        phi = energy_to_flux(eps, p.ip_a)
        got = rate_01(phi, p)
        expect = (p.delta01_ghz**2 / (4 * eps)) * eta * 2 * math.pi * 1e3 \
            / (-math.expm1(-eps / t))
        assert got == pytest.approx(expect, rel=1e-2), eps


def test_rate01_white_noise_lorentzian_peak():
    p = make_params(w_phi_uphi0=0.01, zeta_phi_uphi0=0.0)
    g = p.gamma_ghz()
    got = rate_01(0.0, p)
    expect = oracles.rate_coef(p.delta01_ghz) / (math.pi * g)
    assert got == pytest.approx(expect, rel=1e-2)


def test_rate01_scale_invariance_in_delta(ref_params):
    p = ref_params
    p2 = replace(p, delta01_ghz=3.0 * p.delta01_ghz)
    phis = np.array([-100.0, 40.0, 500.0, 2000.0])
    r1 = rate_01(phis, p)
    r2 = rate_01(phis, p2)
    np.testing.assert_allclose(r2, 9.0 * r1, rtol=1e-12)


# ---------------------------------------------------------------------------
# first peak

def test_rate03_delta_limit_is_translated_zeroth_peak(ref_params):
    p = replace(ref_params, zeta_phi_uphi0=0.0)
    shapes = LineShapes(p, -500.0, 2500.0)
    phis = np.linspace(1800.0, 2500.0, 41)
    r3 = shapes.rate03(phis)
    r1 = shapes.rate01(phis - p.phi31_uphi0)
    ratio = (p.delta03_ghz / p.delta01_ghz) ** 2
    np.testing.assert_allclose(r3, ratio * r1, rtol=1e-9)


def test_rate03_matches_2d_quadrature_oracle(ref_params):
    p = ref_params
    shapes = LineShapes(p, -500.0, 3000.0)
    w, g, z, t = p.w_ghz(), p.gamma_ghz(), p.zeta_ghz(), p.temperature_ghz()
    nu31 = p.nu31_ghz()
    coef = oracles.rate_coef(p.delta03_ghz)
    peak = coef * oracles.quad_g03(nu31 + w * w / (2 * t), w, g, z, t, nu31)
    cases = (100.0, 600.0, 1100.0, 1500.0, 1900.0, 2100.0, 2153.6, 2192.0,
             2500.0, 2950.0)
    for phi in cases:
        eps = flux_to_energy(phi, p.ip_a)
        expect = coef * oracles.quad_g03(eps, w, g, z, t, nu31)
        if expect < 1e-6 * peak:
            continue
        got = shapes.rate03(phi)[0]
        assert got == pytest.approx(expect, rel=1e-3), phi


def test_rate03_peak_location_near_resonance(ref_params):
    p = ref_params
    ep_phi = energy_to_flux(p.w_ghz() ** 2 / (2 * p.temperature_ghz()), p.ip_a)
    phis = np.linspace(p.phi31_uphi0 - 200, p.phi31_uphi0 + 250, 1801)
    r3 = rate_03(phis, p)
    drift = phis[np.argmax(r3)] - (p.phi31_uphi0 + ep_phi)
    assert abs(drift) < p.w_phi_uphi0 / 2


# ---------------------------------------------------------------------------
# total rate and curves

def test_mirror_symmetry_exact(ref_params):
    phis = np.linspace(-3000.0, 3000.0, 101)
    left = total_rate(phis, ref_params, init_well="L")
    right = total_rate(-phis, ref_params, init_well="R")
    np.testing.assert_array_equal(left, right)


def test_total_rate_spans_four_decades(ref_params):
    curve = simulate_curve(np.linspace(-500.0, 3000.0, 701), ref_params)
    assert curve.rate.max() / curve.rate.min() > 1e4


def test_valley_fill_monotone_in_zeta(ref_params):
    phi_valley = 1100.0
    rates = [total_rate(phi_valley, replace(ref_params, zeta_phi_uphi0=z))
             for z in (1.0, 2.0, 4.0, 8.0)]
    assert all(b > a for a, b in zip(rates, rates[1:]))
    assert rates[0] > rate_01(phi_valley, replace(ref_params, zeta_phi_uphi0=1.0))


def test_tail_asymmetry_beyond_three_widths(ref_params):
    p = ref_params
    ep_phi = energy_to_flux(p.w_ghz() ** 2 / (2 * p.temperature_ghz()), p.ip_a)
    for x in (4.0, 5.0, 6.0):
        up = rate_01(ep_phi + x * p.w_phi_uphi0, p)
        down = rate_01(ep_phi - x * p.w_phi_uphi0, p)
        assert up > down


def _fwhm(phis, rates):
    i = int(np.argmax(rates))
    half = rates[i] / 2.0
    left = np.interp(half, rates[: i + 1], phis[: i + 1])
    right = np.interp(half, rates[i:][::-1], phis[i:][::-1])
    return right - left


def test_fwhm_monotone_in_widths():
    base = dict(REF, zeta_phi_uphi0=0.0, temperature_k=5e-3,
                delta01_ghz=2e-3)
    phis = np.linspace(-250.0, 350.0, 1201)
    widths = []
    for w in (10.0, 20.0, 30.0, 40.0):
        p = make_params(**{**base, "w_phi_uphi0": w, "gamma_phi_uphi0": 1.0})
        widths.append(_fwhm(phis, rate_01(phis, p)))
    assert all(b > a for a, b in zip(widths, widths[1:]))
    widths_g = []
    for g in (0.5, 2.0, 8.0, 20.0):
        p = make_params(**{**base, "w_phi_uphi0": 20.0, "gamma_phi_uphi0": g})
        widths_g.append(_fwhm(phis, rate_01(phis, p)))
    assert all(b >= a for a, b in zip(widths_g, widths_g[1:]))


def test_simulate_single_point(ref_params):
    curve = simulate_curve(np.array([123.4]), ref_params)
    assert len(curve) == 1
    assert curve.rate[0] == pytest.approx(
        float(total_rate(123.4, ref_params)), rel=1e-12)


def test_simulate_grid_self_convergence(ref_params):
    phis = np.linspace(-500.0, 3000.0, 120)
    coarse = LineShapes(ref_params, -500.0, 3000.0)
    fine = LineShapes(ref_params, -500.0, 3000.0,
                      n_min=2 * (len(coarse.grid) - 1) + 1)
    r_coarse = coarse.total(phis)
    r_fine = fine.total(phis)
    mask = r_fine > r_fine.max() * 1e-6
    np.testing.assert_allclose(r_coarse[mask], r_fine[mask], rtol=1e-4)


def test_simulate_curve_validation(ref_params):
    with pytest.raises(ValidationError):
        simulate_curve(np.array([2.0, 1.0]), ref_params)
    with pytest.raises(ValidationError):
        total_rate(0.0, ref_params, init_well="X")


def test_eval_outside_tabulated_span_raises(ref_params):
    shapes = LineShapes(ref_params, -100.0, 100.0)
    with pytest.raises(DomainError):
        shapes.rate01(np.array([50000.0]))


def test_incoherent_validity_warning():
    with pytest.warns(Warning):
        make_params(delta01_ghz=0.2, w_phi_uphi0=37.2)


def test_zero_delta03_gives_pure_zeroth_curve(ref_params):
    p = replace(ref_params, delta03_ghz=0.0, zeta_phi_uphi0=0.0)
    phis = np.linspace(-200.0, 400.0, 31)
    np.testing.assert_allclose(total_rate(phis, p), rate_01(phis, p) + 0.0,
                               rtol=1e-12)


def test_relaxation_variant_switch_changes_first_peak_only(ref_params):
    phis = np.linspace(800.0, 2400.0, 25)
    std = rate_03(phis, ref_params, gr_form="standard")
    alt = rate_03(phis, ref_params, gr_form="half_width")
    assert np.all(alt > 0)
    # the narrower variant concentrates weight near resonance: lower valley
    i_val = np.argmin(np.abs(phis - 1100.0))
    assert alt[i_val] < std[i_val]
    np.testing.assert_allclose(rate_01(phis, ref_params, gr_form="half_width"),
                               rate_01(phis, ref_params), rtol=1e-12)
