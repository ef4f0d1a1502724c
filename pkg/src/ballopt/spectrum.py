"""Second-order shape stability of the centered disk (n = 2).

The centered density ``m* = kappa 1_{B(0, r*)}`` is perturbed by moving its
boundary along ``V . nu = sum_k gamma_k cos(k theta) + beta_k sin(k theta)``.
The second shape derivative of the Lagrangian diagonalizes in Fourier modes
with coefficients ``omega_k + zeta_k``.  Each coefficient needs the mode
profile ``z_k`` solving, in each phase,

    sigma (z'' + z'/r - k^2 z / r^2) + (lambda_0 + m*) z = 0,

with ``z(R) = 0``, ``[sigma z'] = -kappa u0(r*)`` and ``[z] = -[du0/dr]``
at ``r*`` (jumps are exterior minus interior).  The interior solution is
``A J_k(w_in r)`` and the exterior one ``B J_k(w_out r) + C Y_k(w_out r)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import specfun
from .errors import IndexExceedsSpectrum, SingularModeSystem, ValidationError
from .model import ProblemParams, RadialGrid, centered_ball_density
from .output import write_csv, write_json
from .radial import DEFAULT_GRIDSIZE, EigenResult, principal_eigen

DEFAULT_KMAX = 64


def _require_2d(params: ProblemParams):
    if params.n != 2:
        raise ValidationError("shape stability is implemented for n = 2 only")


@dataclass
class GroundState2D:
    """Radial eigenpair at the centered density and its interface traces."""

    params: ProblemParams
    eigenvalue: float
    r0: float
    phi_r0: float
    dphi_int: float
    dphi_ext: float
    jump_dr: float  # [du0/dr] = alpha kappa phi'_int
    jump_energy: float  # [sigma |grad u0|^2] = alpha kappa (1 + alpha kappa) phi'_int^2
    eig: EigenResult = field(repr=False, default=None)

    def flux_identity_error(self) -> float:
        s = 1.0 + self.params.alpha * self.params.kappa
        return abs(self.dphi_ext - s * self.dphi_int)


def ground_state(params: ProblemParams, gridsize: int = DEFAULT_GRIDSIZE,
                 method: str = "shooting") -> GroundState2D:
    """Solve at ``m*`` and extract ``u0(r*)``, one-sided slopes and jump terms."""
    _require_2d(params)
    m = centered_ball_density(params)
    eig = principal_eigen(params, m, method, gridsize)
    r0 = m.breakpoints[1]
    a, k = params.alpha, params.kappa
    dint = eig.dphi_at(r0, "int")
    dext = eig.dphi_at(r0, "ext")
    gs = GroundState2D(params, eig.eigenvalue, r0, eig.phi_at(r0, "int"), dint, dext,
                       a * k * dint + 0.0, a * k * (1.0 + a * k) * dint * dint + 0.0, eig)
    scale = max(1.0, abs(dint))
    tol = 1e-10 if eig.exact else 1e-4
    if gs.flux_identity_error() > tol * scale:
        raise SingularModeSystem("flux continuity violated at the interface")
    return gs


def lagrange_multiplier(params: ProblemParams, gs: GroundState2D) -> float:
    """``-kappa u0(r*)^2 + [sigma (du0/dr)^2]``."""
    _require_2d(params)
    return -params.kappa * gs.phi_r0 ** 2 + gs.jump_energy


# --------------------------------------------------------------------------
# mode profiles


def _radial_basis(k, w2, r):
    """Regular and singular solutions of ``z'' + z'/r + (w2 - k^2/r^2) z = 0``
    with their derivatives: returns (f, f', g, g')."""
    r = np.asarray(r, dtype=float)
    if w2 > 0:
        w = math.sqrt(w2)
        x = w * r
        f, fp = specfun.bessel_j(k, x), w * specfun.bessel_j_prime(k, x)
        with np.errstate(all="ignore"):
            g = specfun.bessel_y(k, x) if np.all(x > 0) else None
            gp = w * specfun.bessel_y_prime(k, x) if g is not None else None
        return f, fp, g, gp
    if w2 < 0:
        w = math.sqrt(-w2)
        x = w * r
        f = specfun.modified_bessel("I", k, x)
        fp = w * specfun.modified_bessel("I", k, x, derivative=True)
        if np.all(x > 0):
            return f, fp, specfun.modified_bessel("K", k, x), w * specfun.modified_bessel("K", k, x, derivative=True)
        return f, fp, None, None
    f, fp = r ** k, k * r ** (k - 1)
    if np.all(r > 0):
        return f, fp, r ** (-float(k)), -k * r ** (-float(k) - 1)
    return f, fp, None, None


@dataclass
class ModeSolution:
    """Profile ``z_k``: ``A f_in`` inside, ``B f_out + C g_out`` outside."""

    k: int
    A: float
    B: float
    C: float
    z_int: float
    z_ext: float
    dz_int: float
    dz_ext: float
    residuals: tuple
    method: str = "closed-form"
    w2_in: float = 0.0
    w2_out: float = 0.0
    r0: float = 0.0
    R: float = 1.0

    def __call__(self, r, side: str = "ext"):
        """Evaluate ``z_k``; at ``r0`` pick the interior or exterior limit."""
        r = np.asarray(r, dtype=float)
        inside = (r < self.r0) | ((r == self.r0) & (side == "int"))
        out = np.empty(r.shape)
        if np.any(inside):
            f, _, _, _ = _radial_basis(self.k, self.w2_in, r[inside])
            out[inside] = self.A * np.asarray(f)
        if np.any(~inside):
            f, _, g, _ = _radial_basis(self.k, self.w2_out, r[~inside])
            out[~inside] = self.B * np.asarray(f) + self.C * np.asarray(g)
        return float(out) if out.ndim == 0 else out


def mode_solution(params: ProblemParams, gs: GroundState2D, k: int) -> ModeSolution:
    """Closed-form mode profile from the three interface/boundary conditions.

    Basis functions are normalized by their value at ``r*`` before the 3x3
    system is row-equilibrated and solved by LU with partial pivoting; the
    returned amplitudes refer to the unnormalized Bessel functions.
    """
    _require_2d(params)
    if int(k) != k or k < 1:
        raise ValidationError(f"mode index must be a positive integer, got {k}")
    k = int(k)
    specfun._check_order(k)
    a, kap, R, r0 = params.alpha, params.kappa, params.R, gs.r0
    s_in = 1.0 + a * kap
    lam = gs.eigenvalue
    w2_in = (lam + kap) / s_in
    w2_out = lam
    f_in, fp_in, _, _ = (float(np.asarray(v)) if v is not None else None
                         for v in _radial_basis(k, w2_in, r0))
    f0, fp0, g0, gp0 = (float(np.asarray(v)) for v in _radial_basis(k, w2_out, r0))
    fR, _, gR, _ = (float(np.asarray(v)) for v in _radial_basis(k, w2_out, R))
    if f_in == 0.0 or f0 == 0.0 or g0 == 0.0:
        raise SingularModeSystem(f"basis vanishes at the interface for k={k}")
    # unknowns: (B, C, A) scaled by the basis values at r0
    mat = np.array([
        [fR / f0, gR / g0, 0.0],
        [fp0 / f0, gp0 / g0, -s_in * fp_in / f_in],
        [1.0, 1.0, -1.0],
    ])
    rhs = np.array([0.0, -kap * gs.phi_r0, -gs.jump_dr])
    rscale = np.max(np.abs(mat), axis=1)
    ms, bs = mat / rscale[:, None], rhs / rscale
    lu, piv = linalg.lu_factor(ms)
    if np.min(np.abs(np.diag(lu))) < 1e-14 * np.max(np.abs(lu)):
        raise SingularModeSystem(f"mode system for k={k} is numerically singular")
    xb, xc, xa = linalg.lu_solve((lu, piv), bs)
    res = mat @ np.array([xb, xc, xa]) - rhs
    scale = max(1.0, float(np.max(np.abs(rhs))))
    residuals = tuple(float(abs(v)) / scale for v in res)
    z_ext = xb + xc
    dz_ext = xb * fp0 / f0 + xc * gp0 / g0
    return ModeSolution(k, xa / f_in, xb / f0, xc / g0, float(xa), float(z_ext),
                        float(xa * fp_in / f_in), float(dz_ext), residuals,
                        "closed-form", w2_in, w2_out, r0, R)


def _mode_cell_integrals(a, b):
    """``int N_i N_j / r`` over each cell [a, b] for the two P1 hats.

    Exact logarithmic formulas near the origin, 3-point Gauss further out
    (where the closed forms would cancel badly).  The first cell only keeps
    the right hat since ``z(0) = 0`` is imposed.
    """
    h = b - a
    gx = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 18.0
    i00 = np.zeros_like(h)
    i01 = np.zeros_like(h)
    i11 = np.zeros_like(h)
    for x, w in zip(gx, gw):
        r = a + h * x
        wr = w * h / r
        i00 += wr * (1 - x) ** 2
        i01 += wr * (1 - x) * x
        i11 += wr * x * x
    near = (a > 0) & (a < 50 * h)
    an, bn, hn = a[near], b[near], h[near]
    L = np.log(bn / an)
    h2 = hn * hn
    i00[near] = (bn * bn * L - 2 * bn * hn + (bn * bn - an * an) / 2) / h2
    i01[near] = ((an + bn) * hn - (bn * bn - an * an) / 2 - an * bn * L) / h2
    i11[near] = ((bn * bn - an * an) / 2 - 2 * an * hn + an * an * L) / h2
    first = a == 0.0
    i00[first], i01[first], i11[first] = 0.0, 0.0, 0.5
    return i00, i01, i11


def mode_solution_fd(params: ProblemParams, gs: GroundState2D, k: int,
                     gridsize: int = 8192) -> ModeSolution:
    """P1 finite-element solve of the mode problem (independent check).

    ``z = y + J l`` where ``l`` is the hat-like lifting equal to 1 at the
    exterior side of ``r*`` and 0 at ``R``; ``y`` is continuous, vanishes at
    0 and R, and the flux jump enters as a point load ``r* kappa u0(r*)``.
    """
    _require_2d(params)
    a, kap, R, r0 = params.alpha, params.kappa, params.R, gs.r0
    s_in = 1.0 + a * kap
    lam = gs.eigenvalue
    grid = RadialGrid.build((0.0, r0, R), gridsize, 2)
    x = grid.nodes
    cells = grid.cell_interval
    sig = np.where(cells == 0, s_in, 1.0)
    pot = np.where(cells == 0, kap, 0.0) + lam
    N = len(x)
    iface = int(grid.interface_nodes[0])
    jump = -gs.jump_dr
    lift = np.zeros(N)
    lift[iface:] = jump * (R - x[iface:]) / (R - r0)
    ra, rb = x[:-1], x[1:]
    h = rb - ra
    kst = sig * (rb * rb - ra * ra) / 2 / h ** 2
    i00, i01, i11 = _mode_cell_integrals(ra, rb)
    gx = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 18.0
    m00 = np.zeros_like(h)
    m01 = np.zeros_like(h)
    m11 = np.zeros_like(h)
    for t, w in zip(gx, gw):
        wr = w * h * (ra + h * t)
        m00 += wr * (1 - t) ** 2
        m01 += wr * (1 - t) * t
        m11 += wr * t * t
    kk = sig * k * k
    e00 = kst + kk * i00 - pot * m00
    e01 = -kst + kk * i01 - pot * m01
    e11 = kst + kk * i11 - pot * m11
    diag = np.zeros(N)
    diag[:-1] += e00
    diag[1:] += e11
    A = np.zeros((3, N))  # banded: upper, diag, lower
    A[0, 1:] = e01
    A[1] = diag
    A[2, :-1] = e01
    # the lifting lives on exterior cells only (its value at r0 is the exterior limit)
    ext = np.arange(N - 1) >= iface
    la, lb = lift[:-1] * ext, lift[1:] * ext
    rhs = np.zeros(N)
    rhs[:-1] -= e00 * la + e01 * lb
    rhs[1:] -= e01 * la + e11 * lb
    rhs[iface] += r0 * kap * gs.phi_r0
    # Dirichlet at 0 and R
    inner = slice(1, N - 1)
    ab = A[:, inner].copy()
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    y = np.zeros(N)
    y[inner] = linalg.solve_banded((1, 1), ab, rhs[inner])
    z = y + lift
    z_int = y[iface]
    z_ext = y[iface] + jump
    h_out = x[iface + 1] - x[iface]
    h_in = x[iface] - x[iface - 1]
    dz_ext = (-3 * z_ext + 4 * z[iface + 1] - z[iface + 2]) / (2 * h_out)
    dz_int = (3 * z_int - 4 * y[iface - 1] + y[iface - 2]) / (2 * h_in)
    res = (abs(z[-1]), abs(dz_ext - s_in * dz_int + kap * gs.phi_r0), abs(z_ext - z_int - jump))
    sol = ModeSolution(k, math.nan, math.nan, math.nan, float(z_int), float(z_ext),
                       float(dz_int), float(dz_ext), tuple(float(v) for v in res),
                       "finite-difference", (lam + kap) / s_in, lam, r0, R)
    sol.grid = x
    sol.values = z
    return sol


# --------------------------------------------------------------------------
# coefficients


def _coefficients_for_k(args):
    params, gs, k = args
    mode = mode_solution(params, gs, k)
    omega = 0.5 * gs.r0 * params.kappa * gs.phi_r0 * (-gs.dphi_int - mode.z_int)
    zeta = -2.0 * gs.jump_energy + mode.dz_ext * gs.jump_dr  # sigma = 1 outside
    return k, float(omega) + 0.0, float(zeta) + 0.0, mode


@dataclass
class StabilitySpectrum:
    params: ProblemParams
    kmax: int
    entries: list  # (k, omega_k, zeta_k)
    lagrange: float
    ground: GroundState2D = field(repr=False, default=None)
    modes: list = field(repr=False, default_factory=list)
    alpha_bar_estimate: float | None = None

    @property
    def margin(self) -> float:
        return min(o + z for _, o, z in self.entries)

    @property
    def omega(self) -> np.ndarray:
        return np.array([o for _, o, _ in self.entries])

    @property
    def zeta(self) -> np.ndarray:
        return np.array([z for _, _, z in self.entries])

    def rows(self):
        return [(k, o, z, o + z) for k, o, z in self.entries]

    def write_csv(self, path) -> None:
        write_csv(path, ("k", "omega", "zeta", "omega_plus_zeta"), self.rows())

    def summary(self) -> dict:
        return {"Lambda_alpha": self.lagrange, "margin": self.margin,
                "alpha_bar_estimate": self.alpha_bar_estimate, "kmax": self.kmax,
                "alpha": self.params.alpha, "lambda0": self.ground.eigenvalue,
                "r0": self.ground.r0,
                "l2_conversion": "||V.nu||^2 = pi * r0 * sum_k (gamma_k^2 + beta_k^2)"}

    def write_json(self, path) -> None:
        write_json(path, self.summary())


def stability_coefficients(params: ProblemParams, kmax: int = DEFAULT_KMAX,
                           gridsize: int = DEFAULT_GRIDSIZE, workers: int = 1) -> StabilitySpectrum:
    """``omega_k`` and ``zeta_k`` for ``k = 1..kmax`` (ordered by k).

    With ``workers > 1`` the modes are solved in a process pool; the result
    does not depend on the schedule.
    """
    _require_2d(params)
    if int(kmax) < 1 or kmax > specfun.MAX_ORDER:
        raise ValidationError(f"kmax must be in [1, {specfun.MAX_ORDER}], got {kmax}")
    gs = ground_state(params, gridsize)
    jobs = [(params, gs, k) for k in range(1, int(kmax) + 1)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_coefficients_for_k, jobs))
    else:
        out = [_coefficients_for_k(j) for j in jobs]
    entries = [(k, o, z) for k, o, z, _ in out]
    return StabilitySpectrum(params, int(kmax), entries, lagrange_multiplier(params, gs), gs,
                             [m for *_, m in out])


def _fourier_items(fourier):
    if isinstance(fourier, dict):
        return sorted((int(k), tuple(v)) for k, v in fourier.items())
    return [(k, tuple(v)) for k, v in enumerate(fourier)]


def quadratic_form(spectrum: StabilitySpectrum, fourier, truncate: bool = False) -> float:
    """``sum_k (omega_k + zeta_k)(gamma_k^2 + beta_k^2)``.

    ``fourier`` is a sequence indexed from k = 0 or a mapping ``k -> (gamma, beta)``.
    ``gamma_0`` must vanish (volume preservation).  Modes beyond ``kmax``
    raise unless ``truncate`` is set, in which case they are dropped (see
    :func:`truncation_bound`).
    """
    coef = {k: o + z for k, o, z in spectrum.entries}
    total = 0.0
    for k, (g, b) in _fourier_items(fourier):
        if k == 0:
            if g != 0.0:
                raise ValidationError("gamma_0 must be zero for a volume-preserving field")
            continue
        if k > spectrum.kmax:
            if g == 0.0 and b == 0.0:
                continue
            if truncate:
                continue
            raise IndexExceedsSpectrum(f"mode {k} beyond kmax={spectrum.kmax}")
        total += coef[k] * (g * g + b * b)
    return total


def truncation_bound(spectrum: StabilitySpectrum, fourier) -> float:
    """``margin * sum_{k > kmax} (gamma_k^2 + beta_k^2)``."""
    tail = sum(g * g + b * b for k, (g, b) in _fourier_items(fourier) if k > spectrum.kmax)
    return spectrum.margin * tail


def fourier_coefficients(samples) -> list:
    """``(gamma_k, beta_k)`` of ``g(theta_j)`` sampled at ``theta_j = 2 pi j / N``.

    ``g = gamma_0 / 2 + sum_k gamma_k cos(k theta) + beta_k sin(k theta)``.
    """
    g = np.asarray(samples, dtype=float)
    N = len(g)
    c = np.fft.rfft(g) * 2.0 / N
    out = [(float(c[0].real), 0.0)]
    for k in range(1, len(c)):
        fac = 0.5 if (N % 2 == 0 and k == N // 2) else 1.0
        out.append((float(c[k].real) * fac, float(-c[k].imag) * fac))
    return out


def l2_norm_squared(fourier, r0: float) -> float:
    """``||V . nu||^2`` on the circle of radius ``r0`` for a zero-mean field."""
    return math.pi * r0 * sum(g * g + b * b for k, (g, b) in _fourier_items(fourier) if k >= 1)


# --------------------------------------------------------------------------
# diagnostics


def critical_index(params: ProblemParams, lam0: float) -> int:
    """Smallest k with ``k^2 > R^2 (lambda_0 + kappa)``."""
    bound = params.R ** 2 * (lam0 + params.kappa)
    k = max(0, int(math.floor(math.sqrt(max(bound, 0.0)))))
    while k * k <= bound:
        k += 1
    return max(k, 1)


def mode_monotonicity_check(params: ProblemParams, kmax: int = DEFAULT_KMAX,
                            samples: int = 2001, gridsize: int = DEFAULT_GRIDSIZE,
                            spectrum: StabilitySpectrum | None = None) -> dict:
    """Sign and comparison properties of the mode profiles.

    Checks ``z_1 >= 0``, ``z_k <= z_1`` on both sides of the interface,
    ``z_k'(r*)_ext < 0`` for ``k >= N`` and reports ``max |z_k'(r*)_ext|``
    for ``k < N``.  Violations are reported, never raised.
    """
    if spectrum is None:
        spectrum = stability_coefficients(params, kmax, gridsize)
    gs = spectrum.ground
    r0, R = gs.r0, params.R
    rin = np.linspace(0.0, r0, samples)
    rout = np.linspace(r0, R, samples)
    modes = spectrum.modes
    z1_in, z1_out = modes[0](rin, "int"), modes[0](rout, "ext")
    scale = max(1.0, float(np.max(np.abs(np.concatenate([z1_in, z1_out])))))
    z1_min = float(min(z1_in.min(), z1_out.min()))
    worst_cmp = -math.inf
    for mode in modes[1:]:
        d_in = mode(rin, "int") - z1_in
        d_out = mode(rout, "ext") - z1_out
        worst_cmp = max(worst_cmp, float(d_in.max()), float(d_out.max()))
    N = critical_index(params, gs.eigenvalue)
    large = [m.dz_ext for m in modes if m.k >= N]
    small = [abs(m.dz_ext) for m in modes if m.k < N]
    report = {
        "alpha": params.alpha,
        "z1_min": z1_min,
        "z1_nonnegative": bool(z1_min >= -1e-10 * scale),
        "max_zk_minus_z1": worst_cmp if len(modes) > 1 else 0.0,
        "comparison_holds": bool(len(modes) < 2 or worst_cmp <= 1e-10 * scale),
        "N": N,
        "max_dz_ext_large_k": max(large) if large else None,
        "large_k_sign_holds": bool(all(v < 0 for v in large)),
        "max_abs_dz_ext_small_k": max(small) if small else 0.0,
        "decay": [abs(m.z_int) for m in modes],
    }
    report["ok"] = report["z1_nonnegative"] and report["comparison_holds"] and report["large_k_sign_holds"]
    return report


def estimate_alpha_bar(params: ProblemParams, kmax: int = DEFAULT_KMAX,
                       alphas=None, gridsize: int = DEFAULT_GRIDSIZE):
    """Largest alpha of a descending sweep at which every sign condition holds.

    Conditions: the monotonicity report is clean, ``omega_k >= omega_1 > 0``
    and the coercivity margin is positive.  Returns ``None`` if none passes.
    """
    if alphas is None:
        alphas = np.geomspace(0.5, 1e-3, 13)
    for a in sorted((float(x) for x in alphas), reverse=True):
        p = params.replace(alpha=a)
        spec = stability_coefficients(p, kmax, gridsize)
        rep = mode_monotonicity_check(p, kmax, spectrum=spec)
        om = spec.omega
        if rep["ok"] and om[0] > 0 and np.all(om >= om[0] - 1e-12 * abs(om[0])) and spec.margin > 0:
            return a
    return None
