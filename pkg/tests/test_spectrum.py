import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ballopt.errors import IndexExceedsSpectrum, ValidationError
from ballopt.model import ProblemParams, make_radial_density
from ballopt.radial import shooting_eigen
from ballopt.spectrum import (
    critical_index,
    fourier_coefficients,
    ground_state,
    l2_norm_squared,
    lagrange_multiplier,
    mode_monotonicity_check,
    mode_solution,
    mode_solution_fd,
    quadratic_form,
    stability_coefficients,
    truncation_bound,
)

P = ProblemParams(n=2, R=1.0, alpha=0.01, kappa=1.0, m0=0.5)


@pytest.fixture(scope="module")
def spec():
    return stability_coefficients(P, kmax=32)


def test_requires_two_dimensions():
    with pytest.raises(ValidationError):
        ground_state(P.replace(n=3))


def test_flux_identity():
    gs = ground_state(P.replace(alpha=0.3))
    assert gs.dphi_ext == pytest.approx(1.3 * gs.dphi_int, rel=1e-12)
    assert gs.jump_dr == pytest.approx(gs.dphi_ext - gs.dphi_int, rel=1e-12)


def test_lagrange_multiplier_is_volume_derivative():
    # d lambda / d r0 for m = kappa 1_{r < r0} equals 2 pi r0 times the multiplier
    p = P.replace(alpha=0.2)
    gs = ground_state(p)

    def lam(r0):
        m = make_radial_density((0.0, r0, 1.0), (1.0, 0.0), p, check_mean=False)
        return shooting_eigen(p, m).eigenvalue

    r0, h = gs.r0, 1e-5
    slope = (lam(r0 + h) - lam(r0 - h)) / (2 * h)
    assert slope == pytest.approx(2 * math.pi * r0 * lagrange_multiplier(p, gs), rel=1e-7)


def test_zeta_vanishes_without_drift():
    s = stability_coefficients(P.replace(alpha=0.0), kmax=64)
    assert all(z == 0.0 for z in s.zeta)
    assert not any(math.copysign(1.0, z) < 0 for z in s.zeta)


@pytest.mark.parametrize("k", [1, 2, 5, 9, 30])
def test_mode_satisfies_ode(k):
    p = P.replace(alpha=0.2)
    gs = ground_state(p)
    mode = mode_solution(p, gs, k)
    lam = gs.eigenvalue
    for r, sigma, m in ((0.4, 1.2, 1.0), (0.85, 1.0, 0.0)):
        h = 1e-4
        z = mode(np.array([r - h, r, r + h]))
        d1 = (z[2] - z[0]) / (2 * h)
        d2 = (z[2] - 2 * z[1] + z[0]) / h ** 2
        res = sigma * (d2 + d1 / r - k * k * z[1] / r ** 2) + (lam + m) * z[1]
        assert abs(res) < 1e-5 * max(1.0, abs(z[1]) * k * k)
    assert max(mode.residuals) < 1e-9


@pytest.mark.parametrize("k", [1, 4, 16])
def test_closed_form_matches_fd(k):
    gs = ground_state(P)
    a = mode_solution(P, gs, k)
    b = mode_solution_fd(P, gs, k)
    for attr in ("z_int", "z_ext", "dz_ext"):
        assert getattr(a, attr) == pytest.approx(getattr(b, attr), abs=1e-5)


def test_spectrum_shape(spec):
    ks = [k for k, _, _ in spec.entries]
    assert ks == list(range(1, 33))
    om = spec.omega
    assert om[0] > 0 and np.all(om >= om[0])
    assert spec.margin == min(o + z for _, o, z in spec.entries)


def test_parallel_matches_serial(spec):
    par = stability_coefficients(P, kmax=32, workers=2)
    assert par.entries == spec.entries


def test_quadratic_form_rules(spec):
    with pytest.raises(ValidationError):
        quadratic_form(spec, [(1.0, 0.0), (1.0, 0.0)])
    with pytest.raises(IndexExceedsSpectrum):
        quadratic_form(spec, {40: (1.0, 0.0)})
    assert quadratic_form(spec, {40: (1.0, 0.0)}, truncate=True) == 0.0
    assert truncation_bound(spec, {40: (1.0, 2.0)}) == pytest.approx(5 * spec.margin)
    val = quadratic_form(spec, {1: (1.0, 0.0), 3: (0.0, 2.0)})
    o = dict((k, o + z) for k, o, z in spec.entries)
    assert val == pytest.approx(o[1] + 4 * o[3], rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(coef=st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=8))
def test_fourier_roundtrip_and_norm(coef):
    N = 64
    th = 2 * np.pi * np.arange(N) / N
    g = sum(a * np.cos((k + 1) * th) + b * np.sin((k + 1) * th) for k, (a, b) in enumerate(coef))
    got = fourier_coefficients(g)
    assert abs(got[0][0]) < 1e-12
    for k, (a, b) in enumerate(coef):
        assert got[k + 1][0] == pytest.approx(a, abs=1e-12)
        assert got[k + 1][1] == pytest.approx(b, abs=1e-12)
    r0 = 0.7
    direct = r0 * 2 * np.pi / N * float(np.sum(g ** 2))
    assert l2_norm_squared(got, r0) == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_critical_index():
    assert critical_index(P, 3.0) == 3  # 9 > 4
    assert critical_index(P, 8.0) == 4  # 16 > 9
    assert critical_index(P, 7.99) == 3


def test_monotonicity_small_alpha(spec):
    rep = mode_monotonicity_check(P, spectrum=spec)
    assert rep["ok"]
    assert rep["N"] == critical_index(P, spec.ground.eigenvalue)


def test_no_drift_ground_state():
    p = P.replace(alpha=0.0)
    gs = ground_state(p)
    assert gs.jump_dr == 0.0 and gs.jump_energy == 0.0
    assert lagrange_multiplier(p, gs) == pytest.approx(-gs.phi_r0 ** 2, rel=1e-15) and lagrange_multiplier(p, gs) < 0
    mode = mode_solution(p, gs, 3)
    assert abs(mode.z_ext - mode.z_int) < 1e-12


def test_jumps_and_multiplier_are_order_alpha():
    gs0 = ground_state(P.replace(alpha=0.0))
    l0 = lagrange_multiplier(P.replace(alpha=0.0), gs0)
    ratios, mult = [], []
    for a in (1e-3, 1e-2, 1e-1):
        p = P.replace(alpha=a)
        gs = ground_state(p)
        ratios.append(gs.jump_energy / a)
        mult.append(abs(lagrange_multiplier(p, gs) - l0) / a)
    assert max(ratios) < 2 * min(ratios)
    assert max(mult) < 5.0


def test_ground_state_same_call_path():
    from ballopt.model import centered_ball_density
    from ballopt.radial import principal_eigen

    gs = ground_state(P)
    assert gs.eigenvalue == principal_eigen(P, centered_ball_density(P)).eigenvalue


def test_quadratic_form_scaling(spec):
    f = {1: (0.3, -0.2), 2: (0.1, 0.5), 7: (0.0, 1.0)}
    g = {k: (2.5 * a, 2.5 * b) for k, (a, b) in f.items()}
    assert quadratic_form(spec, g) == pytest.approx(6.25 * quadratic_form(spec, f), rel=1e-14)
    assert quadratic_form(spec, {1: (1.0, 0.0)}) == spec.omega[0] + spec.zeta[0]


def test_margin_degrades_with_alpha():
    margins = [stability_coefficients(P.replace(alpha=a), kmax=32).margin for a in (0.001, 0.01, 0.05)]
    assert margins[0] > margins[1] > margins[2]


def test_mode_traces_decay(spec):
    rep = mode_monotonicity_check(P, spectrum=spec)
    decay = rep["decay"]
    assert decay[-1] < 0.1 * decay[0]
