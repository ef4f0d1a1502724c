import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ballopt.errors import EndpointMeanMismatch, NonZeroMeanPerturbation, NotBangBang
from ballopt.model import (
    PiecewiseRadial,
    ProblemParams,
    centered_ball_density,
    density_from_support,
    hausdorff_distance,
    sphere_area,
)
from ballopt.radial import principal_eigen
from ballopt.rearrange import (
    concavity_probe,
    directional_derivative,
    distance_weighted_l1,
    finite_difference_derivative,
    harmonic_mean,
    homogenized_eigen,
    homogenized_path,
    improvement_step,
    level_set_rearrange,
    minimize_radial,
    path_derivative,
    relaxed_switching,
    switching_function,
)
from ballopt.sampling import (
    perturbed_centered,
    random_bang_bang,
    random_density,
    random_perturbation,
    rng_from_seed,
)


def test_switching_function_definition():
    p = ProblemParams(n=2, alpha=0.3)
    m = centered_ball_density(p)
    eig = principal_eigen(p, m)
    prof = switching_function(p, m, eig)
    r = np.array([0.2, 0.9])
    expected = 0.3 * eig.dphi_at(r) ** 2 - eig.phi_at(r) ** 2
    got = np.interp(r, prof.r, prof.psi)
    assert got == pytest.approx(expected, abs=1e-5)
    # psi jumps at the interface because phi' does
    assert prof.max_interface_jump() > 1e-3


def test_relaxed_switching_is_continuous():
    p = ProblemParams(n=3, alpha=0.4)
    m = random_bang_bang(p, rng_from_seed(5))
    eig = principal_eigen(p, m)
    prof = relaxed_switching(p, m, eig)
    assert prof.max_interface_jump() < 1e-10


@pytest.mark.parametrize("seed", range(4))
def test_directional_derivative_matches_difference(seed):
    rng = rng_from_seed(100 + seed)
    p = ProblemParams(n=1 + seed % 3, alpha=0.2)
    m = random_density(p, rng)
    h = random_perturbation(m, p, rng)
    d = directional_derivative(p, m, h)
    fd = finite_difference_derivative(p, m, h, eps=1e-4)
    assert d == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_directional_derivative_rejects_mass():
    p = ProblemParams(n=2)
    m = centered_ball_density(p)
    with pytest.raises(NonZeroMeanPerturbation):
        directional_derivative(p, m, PiecewiseRadial((0.0, 1.0), (1.0,)))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_without_drift_rearrangement_gives_centered_ball(n):
    # alpha = 0: psi = -phi^2 increases with r, its sublevel set is a centered ball
    p = ProblemParams(n=n, alpha=0.0)
    m = random_density(p, rng_from_seed(n))
    new, before, after = improvement_step(p, m)
    assert hausdorff_distance(new, centered_ball_density(p)) < 1e-12
    assert after < before


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 40), n=st.sampled_from([1, 2, 3]), alpha=st.sampled_from([0.0, 0.05, 0.3]))
def test_rearrangement_properties(seed, n, alpha):
    p = ProblemParams(n=n, alpha=alpha)
    m = random_density(p, rng_from_seed(seed))
    eig = principal_eigen(p, m)
    new = level_set_rearrange(p, switching_function(p, m, eig), m)
    assert new.is_bang_bang()
    assert abs(new.mean(n) - p.m0) <= 1e-12 * p.kappa
    assert principal_eigen(p, new).eigenvalue <= eig.eigenvalue + 1e-10


def test_minimize_from_centered_is_immediate():
    p = ProblemParams(n=2, alpha=0.02)
    trace = minimize_radial(p, centered_ball_density(p))
    assert trace.termination == "converged"
    assert len(trace.iterations) == 2
    assert trace.final.hausdorff == 0.0


def test_minimize_trace_is_nonincreasing():
    p = ProblemParams(n=3, alpha=0.05)
    m = random_bang_bang(p, rng_from_seed(21))
    trace = minimize_radial(p, m)
    lams = trace.eigenvalues
    assert all(b <= a + 1e-10 for a, b in zip(lams, lams[1:]))
    rows = list(trace.rows())
    assert rows[0][0] == 0 and math.isnan(rows[0][2])


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(0.0, 2.0), min_size=1, max_size=5), alpha=st.floats(0.0, 3.0))
def test_harmonic_below_arithmetic(vals, alpha):
    bps = tuple(np.linspace(0, 1, len(vals) + 1))
    m = PiecewiseRadial(bps, tuple(vals))
    lm, lp = harmonic_mean(m, alpha, kappa=2.0)
    assert all(a <= b * (1 + 1e-15) for a, b in zip(lm.values, lp.values))
    for v, a, b in zip(vals, lm.values, lp.values):
        if v in (0.0, 2.0):
            assert a == pytest.approx(b, rel=1e-15)


def test_homogenized_eigenvalue():
    p = ProblemParams(n=2, alpha=0.5)
    bb = centered_ball_density(p)
    assert homogenized_eigen(p, bb) == pytest.approx(principal_eigen(p, bb).eigenvalue, rel=1e-13)
    m = random_density(p, rng_from_seed(3))
    assert homogenized_eigen(p, m) < principal_eigen(p, m).eigenvalue


def test_path_endpoints_and_derivative():
    p = ProblemParams(n=2, alpha=0.05)
    ms = centered_ball_density(p)
    mt = perturbed_centered(p, rng_from_seed(8), 0.05)
    path = homogenized_path(p, ms, mt, [0.0, 0.5, 1.0])
    assert path.f[0] == pytest.approx(principal_eigen(p, ms).eigenvalue, abs=1e-9)
    assert path.f[-1] == pytest.approx(principal_eigen(p, mt).eigenvalue, abs=1e-9)
    assert np.allclose(path.fprime, path.fd_check, rtol=1e-5)
    assert path_derivative(p, ms, mt, 0.5) == pytest.approx(path.fprime[1], rel=1e-14)
    assert np.all(path.fprime > 0)


def test_path_endpoint_errors():
    p = ProblemParams(n=2, alpha=0.05)
    ms = centered_ball_density(p)
    with pytest.raises(NotBangBang):
        path_derivative(p, ms, random_density(p, rng_from_seed(1)), 0.5)
    other = density_from_support([(0.0, 0.5)], p, check_mean=False)
    with pytest.raises(EndpointMeanMismatch):
        path_derivative(p, ms, other, 0.5)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_distance_weighted_l1_quadrature(n):
    h = PiecewiseRadial((0.0, 0.3, 0.6, 0.8, 1.0), (0.5, -1.0, 2.0, 0.0))
    r0 = 0.55
    pts = [0.0, 0.3, 0.55, 0.6, 0.8, 1.0]
    ref = sum(integrate.quad(lambda r: abs(float(h(r))) * abs(r - r0) * r ** (n - 1), a, b)[0]
              for a, b in zip(pts[:-1], pts[1:]))
    assert distance_weighted_l1(ProblemParams(n=n), h, r0) == pytest.approx(sphere_area(n) * ref, rel=1e-12)


def test_concavity_along_segment():
    p = ProblemParams(n=2, alpha=0.1)
    rng = rng_from_seed(12)
    rep = concavity_probe(p, random_density(p, rng), random_density(p, rng), 7)
    assert len(rep.second_differences) == 5
    assert rep.max_relative_second_difference() < 0


def test_switching_function_limits():
    p = ProblemParams(n=2, alpha=0.4, kappa=1.0)
    m = centered_ball_density(p)
    eig = principal_eigen(p, m)
    prof = switching_function(p, m, eig)
    r_end, psi_end = prof.samples[-1][0][-1], prof.samples[-1][1][-1]
    assert r_end == 1.0 and psi_end == pytest.approx(0.4 * eig.dphi_at(1.0) ** 2, rel=1e-12)
    (r0, s_in, s_out), = prof.interface_limits
    d_in = eig.dphi_at(r0, "int")
    assert s_out - s_in == pytest.approx(0.4 * ((1.4 * d_in) ** 2 - d_in ** 2), rel=1e-10)
    relaxed = relaxed_switching(p, m, eig)
    phi = eig.phi_at(0.3)
    expected = 0.4 / 1.4 * 1.4 ** 2 * eig.dphi_at(0.3) ** 2 - phi ** 2
    assert np.interp(0.3, relaxed.r, relaxed.psi) == pytest.approx(expected, rel=1e-4)


def test_without_drift_switching_is_minus_phi_squared():
    p = ProblemParams(n=3, alpha=0.0)
    m = random_density(p, rng_from_seed(2))
    eig = principal_eigen(p, m)
    a, b = switching_function(p, m, eig), relaxed_switching(p, m, eig)
    assert np.all(a.psi <= 0) and a.max_interface_jump() < 1e-12
    assert np.allclose(a.psi, b.psi, atol=1e-15)
    assert np.allclose(a.psi, -eig.phi ** 2, atol=1e-14)


def test_zero_direction_and_centered_formula():
    p = ProblemParams(n=2, alpha=0.0)
    m = centered_ball_density(p)
    assert directional_derivative(p, m, PiecewiseRadial((0.0, 1.0), (0.0,))) == 0.0
    h = PiecewiseRadial((0.0, 0.5, 1.0), (1.0, -1.0 / 3.0))
    eig = principal_eigen(p, m)
    pts = (0.0, 0.5, p.r_star, 1.0)
    ref = sum(integrate.quad(lambda r: -float(h(r)) * eig.phi_at(r) ** 2 * r, a, b, epsabs=1e-13)[0]
              for a, b in zip(pts[:-1], pts[1:]))
    assert directional_derivative(p, m, h) == pytest.approx(2 * np.pi * ref, rel=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_centered_ball_is_rearrangement_fixed_point(n):
    p = ProblemParams(n=n, alpha=0.02)
    m = centered_ball_density(p)
    new, before, after = improvement_step(p, m)
    assert new == m and before == after


def test_harmonic_mean_example():
    m = PiecewiseRadial((0.0, 0.5, 0.7, 1.0), (1.0, 0.0, 2.0))
    lm, lp = harmonic_mean(m, 0.1, kappa=2.0)
    assert lm.values == pytest.approx((1.2 / 1.1, 1.0, 1.2), rel=1e-15)
    assert lp.values == pytest.approx((1.1, 1.0, 1.2), rel=1e-15)


def test_homogenized_constant_density():
    from ballopt.model import constant_density
    from ballopt.radial import dirichlet_eigenvalue

    p = ProblemParams(n=3, alpha=0.3, kappa=2.0, m0=0.8)
    expected = dirichlet_eigenvalue(3) * 1.6 / 1.36 - 0.8
    assert homogenized_eigen(p, constant_density(0.8, p)) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32), n=st.sampled_from([1, 2, 3]))
def test_homogenized_below_true_eigenvalue(seed, n):
    p = ProblemParams(n=n, alpha=0.5)
    m = random_density(p, rng_from_seed(seed))
    assert homogenized_eigen(p, m) <= principal_eigen(p, m).eigenvalue + 1e-9


def test_trivial_path_and_probe():
    p = ProblemParams(n=2, alpha=0.05)
    ms = centered_ball_density(p)
    assert path_derivative(p, ms, ms, 0.3) == 0.0
    rep = concavity_probe(p, ms, ms, 5)
    assert np.all(rep.values == rep.values[0])


def test_midpoint_above_chord():
    p = ProblemParams(n=1, alpha=0.2)
    rng = rng_from_seed(77)
    rep = concavity_probe(p, random_bang_bang(p, rng), random_density(p, rng), 3)
    assert rep.values[1] > 0.5 * (rep.values[0] + rep.values[2])
