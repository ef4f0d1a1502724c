"""Switching functions, level-set rearrangement and the homogenized path.

The first variation of the principal eigenvalue in a zero-mean direction
``h`` is ``c_n int h psi r^(n-1)`` with the switching function
``psi = alpha phi'^2 - phi^2``.  Replacing ``m`` by ``kappa`` on a sublevel
set of ``psi`` of the admissible volume never increases the eigenvalue;
iterating this gives a simple descent method over bang-bang densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceFailure,
    DegenerateProfile,
    EndpointMeanMismatch,
    NonZeroMeanPerturbation,
    NotBangBang,
    ValidationError,
)
from .model import (
    PiecewiseRadial,
    ProblemParams,
    RadialDensity,
    RadialGrid,
    density_from_support,
    hausdorff_distance,
    linear_combination,
    make_radial_density,
    shell_volume,
    sphere_area,
)
from .output import dumps_compact, write_csv
from .radial import (
    DEFAULT_GRIDSIZE,
    EigenResult,
    merged_coefficients,
    principal_eigen,
    solve_coefficients,
)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


@dataclass
class SwitchingProfile:
    """Samples of a switching function, one array per coefficient interval.

    ``samples[i] = (r, psi)`` covers the closed interval i; its first and last
    entries are the one-sided limits at the interval ends.
    """

    grid: RadialGrid
    samples: list
    interface_limits: list  # (r, psi_int, psi_ext) per interior breakpoint
    kind: str = "switching"

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def psi(self) -> np.ndarray:
        """Values on the grid nodes (outer limit at interfaces)."""
        parts = [s[1][:-1] for s in self.samples] + [self.samples[-1][1][-1:]]
        return np.concatenate(parts)

    def max_interface_jump(self) -> float:
        if not self.interface_limits:
            return 0.0
        return max(abs(e - i) for _, i, e in self.interface_limits)


def _profile(eig: EigenResult, fn, kind) -> SwitchingProfile:
    samples = []
    for i, (r, phi, dphi) in enumerate(eig.interval_samples()):
        samples.append((r, fn(i, phi, dphi)))
    limits = [(float(samples[i][0][0]), float(samples[i - 1][1][-1]), float(samples[i][1][0]))
              for i in range(1, len(samples))]
    return SwitchingProfile(eig.grid, samples, limits, kind)


def switching_function(params: ProblemParams, m, eig: EigenResult) -> SwitchingProfile:
    """``psi = alpha phi'^2 - phi^2`` with exact one-sided limits at interfaces."""
    a = params.alpha
    return _profile(eig, lambda i, phi, dphi: a * dphi ** 2 - phi ** 2, "switching")


def relaxed_switching(params: ProblemParams, m, eig: EigenResult,
                      tol: float | None = None) -> SwitchingProfile:
    """Homogenized switching function ``alpha/(1+alpha kappa) sigma^2 phi'^2 - phi^2``.

    It only involves the continuous flux ``sigma phi'``, so it is continuous
    across interfaces; a jump above ``tol`` raises.
    """
    a, k = params.alpha, params.kappa
    sig = eig.coefficients.sigma
    c = a / (1.0 + a * k)
    prof = _profile(eig, lambda i, phi, dphi: c * (sig[i] * dphi) ** 2 - phi ** 2, "relaxed")
    if tol is None:
        tol = 1e-8 if eig.exact else 1e-3
    scale = max(1.0, float(np.max(np.abs(prof.psi))))
    if prof.max_interface_jump() > tol * scale:
        raise ConvergenceFailure(
            f"relaxed switching function jumps by {prof.max_interface_jump():.3e} at an interface")
    return prof


# --------------------------------------------------------------------------
# first variation


def _weighted_integral(params, f: PiecewiseRadial, eig: EigenResult, integrand) -> float:
    """``c_n int f(r) integrand(r) r^(n-1) dr`` with Gauss rules on every
    interval where both ``f`` and the coefficients are constant."""
    n = params.n
    pts = sorted(set(f.breakpoints) | set(eig.coefficients.breakpoints))
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 0:
            continue
        fv = float(f(0.5 * (a + b)))
        if fv == 0.0:
            continue
        r = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
        total += fv * 0.5 * (b - a) * float(np.sum(_GL_W * integrand(r) * r ** (n - 1)))
    return sphere_area(n) * total


def _check_zero_mean(params, h: PiecewiseRadial, tol=1e-10):
    mean = h.integral(params.n)
    scale = sum(abs(v) * float(shell_volume(a, b, params.n)) for a, b, v in h.intervals())
    if abs(mean) > tol * max(scale, 1e-300) and scale > 0:
        raise NonZeroMeanPerturbation(f"perturbation has integral {mean:.3e}")


def directional_derivative(params: ProblemParams, m: PiecewiseRadial, h: PiecewiseRadial,
                           method: str = "shooting", gridsize: int = DEFAULT_GRIDSIZE,
                           eig: EigenResult | None = None) -> float:
    """First variation ``c_n int h psi r^(n-1)`` of the eigenvalue at ``m`` along ``h``."""
    _check_zero_mean(params, h)
    if all(v == 0.0 for v in h.values):
        return 0.0
    if eig is None:
        eig = principal_eigen(params, m, method, gridsize)
    a = params.alpha

    def psi(r):
        return a * eig.dphi_at(r) ** 2 - eig.phi_at(r) ** 2

    return _weighted_integral(params, h, eig, psi)


def finite_difference_derivative(params, m, h, eps=1e-4, method="shooting",
                                 gridsize=DEFAULT_GRIDSIZE) -> float:
    """Central difference ``(lambda(m + eps h) - lambda(m - eps h)) / (2 eps)``."""
    lp = principal_eigen(params, linear_combination([(1.0, m), (eps, h)]), method, gridsize)
    lm = principal_eigen(params, linear_combination([(1.0, m), (-eps, h)]), method, gridsize)
    return (lp.eigenvalue - lm.eigenvalue) / (2 * eps)


# --------------------------------------------------------------------------
# level-set rearrangement


def _cell_arrays(profile: SwitchingProfile):
    """Flatten into cells: left/right radius and psi (linear model per cell)."""
    ra, rb, pa, pb = [], [], [], []
    for r, psi in profile.samples:
        ra.append(r[:-1])
        rb.append(r[1:])
        pa.append(psi[:-1])
        pb.append(psi[1:])
    return (np.concatenate(ra), np.concatenate(rb), np.concatenate(pa), np.concatenate(pb))


def _pieces_below(ra, rb, pa, pb, mu, strict=True):
    """Per cell, the sub-interval where the linear model is below ``mu``."""
    below_a = pa < mu if strict else pa <= mu
    below_b = pb < mu if strict else pb <= mu
    lo = np.where(below_a, ra, rb)
    hi = np.where(below_b, rb, ra)
    cross = below_a != below_b
    with np.errstate(divide="ignore", invalid="ignore"):
        x = ra + (mu - pa) / (pb - pa) * (rb - ra)
    x = np.clip(np.where(cross, x, ra), ra, rb)
    # below at a only: [ra, x]; below at b only: [x, rb]
    lo = np.where(cross & below_b, x, lo)
    hi = np.where(cross & below_a, x, hi)
    lo = np.where(~below_a & ~below_b, ra, lo)
    hi = np.where(~below_a & ~below_b, ra, hi)
    return lo, hi


def _volume(lo, hi, n):
    return float(np.sum(shell_volume(lo, hi, n)))


def _merge(intervals, min_len):
    """Join intervals separated by gaps shorter than ``min_len``; drop slivers."""
    out = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a - out[-1][1] <= min_len:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return [(a, b) for a, b in out if b - a > min_len]


def level_set_rearrange(params: ProblemParams, profile: SwitchingProfile,
                        m_reference: PiecewiseRadial | None = None,
                        max_halvings: int = 200) -> RadialDensity:
    """Bang-bang density ``kappa 1_B`` with ``{psi < mu} <= B <= {psi <= mu}``.

    ``mu`` is found by bisection on the (nondecreasing) volume of sublevel
    sets.  Parts of the level set ``{psi = mu}`` are added innermost first.
    Boundaries within 1e-12 R of a breakpoint of ``m_reference`` are snapped
    onto it, and the volume is then made exact by moving one boundary.
    """
    n, R = params.n, params.R
    target = params.resource_volume
    full = params.volume
    ra, rb, pa, pb = _cell_arrays(profile)
    lo_mu = float(min(pa.min(), pb.min())) - 1.0
    hi_mu = float(max(pa.max(), pb.max())) + 1.0
    tol = 1e-12 * full
    mu = 0.5 * (lo_mu + hi_mu)
    pieces = None
    for _ in range(max_halvings):
        mu = 0.5 * (lo_mu + hi_mu)
        lo, hi = _pieces_below(ra, rb, pa, pb, mu, strict=True)
        v_lt = _volume(lo, hi, n)
        if abs(v_lt - target) <= tol:
            pieces = list(zip(lo, hi))
            break
        if v_lt > target:
            hi_mu = mu
            continue
        lo2, hi2 = _pieces_below(ra, rb, pa, pb, mu, strict=False)
        v_le = _volume(lo2, hi2, n)
        if v_le < target - tol:
            lo_mu = mu
            continue
        # the level set {psi = mu} carries the missing volume: fill innermost first
        pieces = list(zip(lo, hi))
        missing = target - v_lt
        extra = sorted((a2, b2) for a1, b1, a2, b2 in zip(lo, hi, lo2, hi2)
                       if (b2 - a2) > (b1 - a1))
        for a2, b2 in extra:
            if missing <= 0:
                break
            v = float(shell_volume(a2, b2, n))
            if v <= missing:
                pieces.append((a2, b2))
                missing -= v
            else:
                pieces.append((a2, (a2 ** n + missing * n / sphere_area(n)) ** (1.0 / n)))
                missing = 0.0
        break
    if pieces is None:
        lo, hi = _pieces_below(ra, rb, pa, pb, mu, strict=True)
        pieces = list(zip(lo, hi))
    support = _merge([(float(a), float(b)) for a, b in pieces], 1e-10 * R)
    if not support:
        raise DegenerateProfile("sublevel set collapsed to nothing")

    if m_reference is not None:
        refs = np.asarray(m_reference.breakpoints)
        snapped = []
        for a, b in support:
            ia, ib = np.argmin(np.abs(refs - a)), np.argmin(np.abs(refs - b))
            a = float(refs[ia]) if abs(refs[ia] - a) <= 1e-12 * R else a
            b = float(refs[ib]) if abs(refs[ib] - b) <= 1e-12 * R else b
            snapped.append((a, b))
        support = snapped
    else:
        refs = np.array([])

    vol = sum(float(shell_volume(a, b, n)) for a, b in support)
    if abs(vol - target) > 1e-13 * full:
        # move an outer boundary that is not pinned to a reference breakpoint
        def pinned(x):
            return x >= R or (refs.size and np.min(np.abs(refs - x)) == 0.0)

        for j in range(len(support) - 1, -1, -1):
            a, b = support[j]
            nxt = support[j + 1][0] if j + 1 < len(support) else R
            if not pinned(b):
                nb = (b ** n + (target - vol) * n / sphere_area(n)) ** (1.0 / n)
                if a < nb <= nxt:
                    support[j] = (a, nb)
                    break
            prv = support[j - 1][1] if j > 0 else 0.0
            if not pinned(a) and a > 0:
                na_n = a ** n - (target - vol) * n / sphere_area(n)
                if na_n >= 0 and prv <= na_n ** (1.0 / n) < b:
                    support[j] = (na_n ** (1.0 / n), b)
                    break
        else:
            raise DegenerateProfile("cannot restore the admissible volume")
    return density_from_support(support, params)


# --------------------------------------------------------------------------
# descent loop


def improvement_step(params: ProblemParams, m: PiecewiseRadial, method: str = "shooting",
                     gridsize: int = DEFAULT_GRIDSIZE):
    """One rearrangement step; returns ``(new_density, lambda_before, lambda_after)``.

    A step that would raise the eigenvalue by more than 1e-10 is rejected and
    ``m`` is returned unchanged.
    """
    eig = principal_eigen(params, m, method, gridsize)
    prof = switching_function(params, m, eig)
    new = level_set_rearrange(params, prof, m)
    after = principal_eigen(params, new, method, gridsize).eigenvalue
    if after > eig.eigenvalue + 1e-10:
        return m, eig.eigenvalue, eig.eigenvalue
    return new, eig.eigenvalue, after


@dataclass
class TraceEntry:
    density: RadialDensity
    eigenvalue: float
    hausdorff: float


@dataclass
class OptimizeTrace:
    iterations: list = field(default_factory=list)
    termination: str = ""

    @property
    def final(self) -> TraceEntry:
        return self.iterations[-1]

    @property
    def eigenvalues(self) -> list:
        return [e.eigenvalue for e in self.iterations]

    def rows(self):
        for i, e in enumerate(self.iterations):
            sup = e.density.support_intervals() if e.density.is_bang_bang() else None
            yield (i, e.eigenvalue, e.hausdorff,
                   dumps_compact([list(s) for s in sup]) if sup is not None else "null")

    def write_csv(self, path) -> None:
        write_csv(path, ("iter", "lambda", "hausdorff", "support_intervals_json"), self.rows())


def minimize_radial(params: ProblemParams, init: RadialDensity, max_iters: int = 50,
                    tol: float = 1e-9, method: str = "shooting",
                    gridsize: int = DEFAULT_GRIDSIZE) -> OptimizeTrace:
    """Iterate :func:`improvement_step` until consecutive supports are within
    Hausdorff distance ``tol``.  Entry 0 of the trace is the initial density."""
    lam0 = principal_eigen(params, init, method, gridsize).eigenvalue
    trace = OptimizeTrace([TraceEntry(init, lam0, math.nan)])
    m = init
    for _ in range(max_iters):
        new, _, after = improvement_step(params, m, method, gridsize)
        d = hausdorff_distance(new, m) if m.is_bang_bang() else math.inf
        trace.iterations.append(TraceEntry(new, after, d))
        m = new
        if d < tol:
            trace.termination = "converged"
            return trace
    trace.termination = "iteration-limit"
    return trace


# --------------------------------------------------------------------------
# homogenization


def harmonic_mean(m: PiecewiseRadial, alpha: float, kappa: float | None = None):
    """Harmonic and arithmetic mean coefficients ``(Lambda_minus, Lambda_plus)``."""
    if kappa is None:
        kappa = getattr(m, "kappa", None)
        if kappa is None:
            raise ValidationError("kappa is required for a plain piecewise function")
    v = np.asarray(m.values, dtype=float)
    lm = (1.0 + alpha * kappa) / (1.0 + alpha * (kappa - v))
    lp = 1.0 + alpha * v
    return (PiecewiseRadial(m.breakpoints, tuple(float(x) for x in lm)),
            PiecewiseRadial(m.breakpoints, tuple(float(x) for x in lp)))


def _harmonic_sigma(params):
    a, k = params.alpha, params.kappa
    return lambda v: (1.0 + a * k) / (1.0 + a * (k - v))


def homogenized_eigenpair(params: ProblemParams, m: PiecewiseRadial,
                          gridsize: int = DEFAULT_GRIDSIZE, method: str = "shooting") -> EigenResult:
    """Eigenpair of ``-(r^(n-1) Lambda_minus(m) u')' = (zeta + m) u r^(n-1)``."""
    coef = merged_coefficients(params, m, m, sigma_fn=_harmonic_sigma(params))
    return solve_coefficients(params, coef, method, gridsize)


def homogenized_eigen(params: ProblemParams, m: PiecewiseRadial,
                      gridsize: int = DEFAULT_GRIDSIZE, method: str = "shooting") -> float:
    return homogenized_eigenpair(params, m, gridsize, method).eigenvalue


def _path_endpoints(params, m_star, m_tilde):
    for d in (m_star, m_tilde):
        if not d.is_bang_bang():
            raise NotBangBang("path endpoints must be bang-bang")
    if abs(m_star.mean(params.n) - m_tilde.mean(params.n)) > 1e-12 * params.kappa:
        raise EndpointMeanMismatch("endpoints have different means")
    return linear_combination([(1.0, m_tilde), (-1.0, m_star)])


def path_density(m_star, h, t) -> PiecewiseRadial:
    return linear_combination([(1.0, m_star), (float(t), h)])


def path_value(params, m_star, h, t, gridsize=DEFAULT_GRIDSIZE, method="shooting") -> float:
    """``f(t) = zeta(m_t, Lambda_minus(m_t))``; defined for t slightly outside [0, 1] too."""
    return homogenized_eigen(params, path_density(m_star, h, t), gridsize, method)


def _path_derivative_h(params, m_star, h, t, gridsize, method):
    mt = path_density(m_star, h, t)
    eig = homogenized_eigenpair(params, mt, gridsize, method)
    a, k = params.alpha, params.kappa
    c = a / (1.0 + a * k)
    lam_minus = _harmonic_sigma(params)

    def integrand(r):
        coef = lam_minus(np.asarray(mt(r), dtype=float))
        return c * coef ** 2 * eig.dphi_at(r) ** 2 - eig.phi_at(r) ** 2

    return _weighted_integral(params, h, eig, integrand), eig.eigenvalue


def path_derivative(params: ProblemParams, m_star: RadialDensity, m_tilde: RadialDensity,
                    t: float, gridsize: int = DEFAULT_GRIDSIZE, method: str = "shooting") -> float:
    """Derivative of the homogenized path ``t -> zeta(m_t, Lambda_minus(m_t))``.

    ``m_t = m_star + t (m_tilde - m_star)``; the value is
    ``c_n int h (alpha/(1+alpha kappa) Lambda_minus(m_t)^2 u_t'^2 - u_t^2) r^(n-1)``.
    """
    h = _path_endpoints(params, m_star, m_tilde)
    if all(v == 0.0 for v in h.values):
        return 0.0
    return _path_derivative_h(params, m_star, h, t, gridsize, method)[0]


@dataclass
class HomogPath:
    m_star: RadialDensity
    m_tilde: RadialDensity
    t: np.ndarray
    f: np.ndarray
    fprime: np.ndarray
    fd_check: np.ndarray

    def rows(self):
        return zip(self.t, self.f, self.fprime, self.fd_check)

    def write_csv(self, path) -> None:
        write_csv(path, ("t", "f", "fprime", "fd_check"), self.rows())


def homogenized_path(params: ProblemParams, m_star: RadialDensity, m_tilde: RadialDensity,
                     t_samples, eps: float = 1e-4, gridsize: int = DEFAULT_GRIDSIZE,
                     method: str = "shooting") -> HomogPath:
    """Sample ``f``, ``f'`` and a central-difference check of ``f'`` along the path."""
    h = _path_endpoints(params, m_star, m_tilde)
    ts = np.asarray(t_samples, dtype=float)
    f, fp, fd = [], [], []
    zero = all(v == 0.0 for v in h.values)
    for t in ts:
        if zero:
            val = homogenized_eigen(params, m_star, gridsize, method)
            f.append(val)
            fp.append(0.0)
            fd.append(0.0)
            continue
        d, val = _path_derivative_h(params, m_star, h, t, gridsize, method)
        f.append(val)
        fp.append(d)
        fd.append((path_value(params, m_star, h, t + eps, gridsize, method)
                   - path_value(params, m_star, h, t - eps, gridsize, method)) / (2 * eps))
    return HomogPath(m_star, m_tilde, ts, np.array(f), np.array(fp), np.array(fd))


def distance_weighted_l1(params: ProblemParams, h: PiecewiseRadial, r0: float) -> float:
    """``c_n int |h| |r - r0| r^(n-1) dr`` (exact)."""
    n = params.n

    def prim(r):
        return r ** (n + 1) / (n + 1) - r0 * r ** n / n

    total = 0.0
    for a, b, v in h.intervals():
        if v == 0.0:
            continue
        part = 0.0
        if a < r0:
            c = min(b, r0)
            part += -(prim(c) - prim(a))
        if b > r0:
            c = max(a, r0)
            part += prim(b) - prim(c)
        total += abs(v) * part
    return sphere_area(n) * total


# --------------------------------------------------------------------------
# concavity


@dataclass
class ConcavityReport:
    t: np.ndarray
    values: np.ndarray
    second_differences: np.ndarray

    def max_relative_second_difference(self) -> float:
        """Largest ``d2 / (|lambda| + 1)`` (negative means strictly concave)."""
        if len(self.second_differences) == 0:
            return -math.inf
        scale = np.abs(self.values[1:-1]) + 1.0
        return float(np.max(self.second_differences / scale))


def concavity_probe(params: ProblemParams, m1: PiecewiseRadial, m2: PiecewiseRadial,
                    t_samples=9, method: str = "shooting",
                    gridsize: int = DEFAULT_GRIDSIZE) -> ConcavityReport:
    """Eigenvalues along ``(1 - t) m1 + t m2`` and their centered second differences."""
    ts = np.linspace(0.0, 1.0, t_samples) if np.ndim(t_samples) == 0 else np.asarray(t_samples, float)
    vals = []
    for t in ts:
        mt = linear_combination([(1.0 - t, m1), (t, m2)])
        vals.append(principal_eigen(params, mt, method, gridsize).eigenvalue)
    vals = np.array(vals)
    if len(ts) >= 3:
        h1 = np.diff(ts)
        # second divided difference scaled back to a uniform-step second difference
        d2 = 2 * ((vals[2:] - vals[1:-1]) / h1[1:] - (vals[1:-1] - vals[:-2]) / h1[:-1]) / (h1[1:] + h1[:-1])
        d2 = d2 * h1[1:] * h1[:-1]
    else:
        d2 = np.array([])
    return ConcavityReport(ts, vals, d2)
