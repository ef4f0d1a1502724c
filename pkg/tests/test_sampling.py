import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ballopt.errors import ValidationError
from ballopt.model import ProblemParams, centered_ball_density, hausdorff_distance
from ballopt.sampling import (
    perturbed_centered,
    random_bang_bang,
    random_density,
    random_perturbation,
    rng_from_seed,
)

seeds = st.integers(0, 2 ** 64 - 1)
dims = st.sampled_from([1, 2, 3])


def test_seed_range():
    with pytest.raises(ValidationError):
        rng_from_seed(2 ** 64)
    a = random_density(ProblemParams(), rng_from_seed(7))
    b = random_density(ProblemParams(), rng_from_seed(7))
    assert a == b


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=dims)
def test_random_density_admissible(seed, n):
    p = ProblemParams(n=n, kappa=2.0, m0=0.7)
    m = random_density(p, rng_from_seed(seed))
    assert abs(m.mean(n) - p.m0) <= 1e-12 * p.kappa
    assert all(0.0 < v < p.kappa for v in m.values)


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=dims)
def test_random_bang_bang_admissible(seed, n):
    p = ProblemParams(n=n, m0=0.3)
    m = random_bang_bang(p, rng_from_seed(seed))
    assert m.is_bang_bang()
    assert 1 <= len(m.support_intervals()) <= 6
    assert abs(m.mean(n) - p.m0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=dims, d=st.floats(0.01, 0.2))
def test_perturbation_stays_close(seed, n, d):
    p = ProblemParams(n=n)
    m = perturbed_centered(p, rng_from_seed(seed), d)
    assert hausdorff_distance(m, centered_ball_density(p)) <= d
    assert abs(m.mean(n) - p.m0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=seeds, n=dims, bang=st.booleans())
def test_random_perturbation_is_feasible(seed, n, bang):
    p = ProblemParams(n=n)
    rng = rng_from_seed(seed)
    m = random_bang_bang(p, rng) if bang else random_density(p, rng)
    h = random_perturbation(m, p, rng)
    assert abs(h.integral(n)) <= 1e-12 * max(1.0, sum(abs(v) for v in h.values))
    mids = 0.5 * (np.array(h.breakpoints[1:]) + np.array(h.breakpoints[:-1]))
    mv, hv = np.asarray(m(mids)), np.asarray(h.values)
    assert np.all(hv[mv == 0.0] >= 0) and np.all(hv[mv == p.kappa] <= 0)
