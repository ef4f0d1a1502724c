"""Principal eigenpair of the radial problem with piecewise-constant coefficients.

The radial equation is

    -(r^(n-1) sigma phi')' = (lambda + v) phi r^(n-1)  on (0, R),
    phi'(0) = 0,  phi(R) = 0,

with ``sigma`` and ``v`` constant on each interval of a breakpoint list.
For the drifted operator ``sigma = 1 + alpha m`` and ``v = m``.

Two independent solvers are provided:

* a conservative P1 finite-element scheme on an interface-fitted grid
  (exact ``r^(n-1)`` weights, consistent mass), solved by shifted inverse
  iteration with optional Richardson extrapolation;
* a shooting method that propagates ``(phi, r^(n-1) sigma phi')`` through the
  intervals with closed-form fundamental systems (trigonometric, Bessel or
  spherical Bessel, and their modified forms), with the eigenvalue located
  as the first root of ``phi(R; lambda)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import specfun
from .errors import (
    ConvergenceFailure,
    GridTooCoarse,
    RootBracketFailure,
    ValidationError,
    ZeroDenominator,
)
from .output import write_csv
from .model import PiecewiseRadial, ProblemParams, RadialGrid, sphere_area

DEFAULT_GRIDSIZE = 2048
MIN_GRIDSIZE = 64
SEED_GRIDSIZE = 256
MAX_INTERFACES = 64

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class Coefficients:
    """Per-interval diffusion ``sigma`` and potential ``v`` on ``breakpoints``."""

    breakpoints: tuple
    sigma: tuple
    potential: tuple

    def locate(self, r, side: str = "ext") -> np.ndarray:
        """Interval index of each radius.  At a breakpoint ``side`` picks the
        inner (``"int"``) or outer (``"ext"``) interval."""
        b = np.asarray(self.breakpoints)
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(b, r, side="left" if side == "int" else "right") - 1
        return np.clip(idx, 0, len(self.sigma) - 1)


def merged_coefficients(params: ProblemParams, m_diff: PiecewiseRadial,
                        m_pot: PiecewiseRadial, sigma_fn=None) -> Coefficients:
    """Coefficients on the union of the breakpoints of both densities.

    ``sigma_fn`` maps diffusion-density values to ``sigma``; the default is
    ``1 + alpha m``.
    """
    if abs(m_diff.R - params.R) > 1e-12 * params.R or abs(m_pot.R - params.R) > 1e-12 * params.R:
        raise ValidationError("densities must live on [0, R]")
    pts = np.union1d(np.asarray(m_diff.breakpoints), np.asarray(m_pot.breakpoints))
    # drop near-duplicates produced by rounding of R
    keep = np.concatenate([[True], np.diff(pts) > 1e-14 * params.R])
    pts = pts[keep]
    pts[-1] = params.R
    mids = 0.5 * (pts[1:] + pts[:-1])
    md = np.asarray(m_diff(mids), dtype=float)
    mp = np.asarray(m_pot(mids), dtype=float)
    if sigma_fn is None:
        sig = 1.0 + params.alpha * md
    else:
        sig = np.asarray(sigma_fn(md), dtype=float)
    if np.any(sig <= 0):
        raise ValidationError("diffusion coefficient must stay positive")
    return Coefficients(tuple(float(p) for p in pts), tuple(float(s) for s in sig),
                        tuple(float(v) for v in mp))


def density_coefficients(params: ProblemParams, m: PiecewiseRadial) -> Coefficients:
    return merged_coefficients(params, m, m)


# --------------------------------------------------------------------------
# result container


@dataclass
class EigenResult:
    """Principal eigenpair on a radial grid.

    ``phi`` holds nodal values on ``grid.nodes`` and ``flux`` holds
    ``sigma phi'`` at cell midpoints ``flux_r``.  The eigenfunction is
    nonnegative and normalized by ``c_n int r^(n-1) phi^2 = 1``.
    """

    eigenvalue: float
    grid: RadialGrid
    phi: np.ndarray
    flux: np.ndarray
    flux_r: np.ndarray
    method: str
    coefficients: Coefficients
    diagnostics: dict = field(default_factory=dict)
    _pieces: list = field(default=None, repr=False)
    _node_flux: list = field(default=None, repr=False)

    # exact (shooting) or interpolated (finite-difference) evaluation
    def phi_at(self, r, side: str = "ext"):
        r = np.asarray(r, dtype=float)
        if self._pieces is not None:
            idx = self.coefficients.locate(r, side)
            out = np.empty(r.shape)
            for i in np.unique(idx):
                sel = idx == i
                out[sel] = self._pieces[i].value(r[sel])
        else:
            out = np.interp(r, self.grid.nodes, self.phi)
        return float(out) if out.ndim == 0 else out

    def dphi_at(self, r, side: str = "ext"):
        """Radial derivative; at an interface ``side`` selects the one-sided limit."""
        r = np.asarray(r, dtype=float)
        idx = self.coefficients.locate(r, side)
        out = np.empty(r.shape)
        nodes = self.grid.nodes
        starts = np.concatenate([[0], np.cumsum(self.grid.counts)])
        for i in np.unique(idx):
            sel = idx == i
            if self._pieces is not None:
                out[sel] = self._pieces[i].deriv(r[sel])
            else:
                seg = slice(starts[i], starts[i + 1] + 1)
                out[sel] = np.interp(r[sel], nodes[seg], self._node_flux[i]) / self.coefficients.sigma[i]
        return float(out) if out.ndim == 0 else out

    def interval_samples(self, per_interval: int | None = None):
        """Per coefficient interval, ``(r, phi, dphi)`` on the grid nodes of
        that interval; endpoint derivatives are one-sided limits."""
        nodes = self.grid.nodes
        starts = np.concatenate([[0], np.cumsum(self.grid.counts)])
        out = []
        for i in range(len(self.grid.counts)):
            r = nodes[starts[i]:starts[i + 1] + 1]
            if self._pieces is not None:
                p = self._pieces[i]
                out.append((r, p.value(r), p.deriv(r)))
            else:
                out.append((r, self.phi[starts[i]:starts[i + 1] + 1],
                            self._node_flux[i] / self.coefficients.sigma[i]))
        return out

    @property
    def exact(self) -> bool:
        return self._pieces is not None

    def to_dict(self) -> dict:
        return {
            "lambda": float(self.eigenvalue),
            "method": self.method,
            "grid": self.grid.nodes.tolist(),
            "phi": np.asarray(self.phi).tolist(),
            "flux_r": np.asarray(self.flux_r).tolist(),
            "flux": np.asarray(self.flux).tolist(),
            "diagnostics": dict(self.diagnostics),
        }

    def write_phi_csv(self, path) -> None:
        write_csv(path, ("r", "phi"), zip(self.grid.nodes, self.phi))


# --------------------------------------------------------------------------
# finite elements


def _cell_matrices(nodes: np.ndarray, n: int):
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    w_int = (b ** n - a ** n) / n  # exact int r^(n-1) over the cell
    # consistent mass entries by 3-point Gauss (exact for the degree <= 4 integrand)
    gx = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 18.0
    m00 = np.zeros_like(h)
    m01 = np.zeros_like(h)
    m11 = np.zeros_like(h)
    for x, w in zip(gx, gw):
        r = a + h * x
        wr = w * h * r ** (n - 1)
        m00 += wr * (1 - x) ** 2
        m01 += wr * (1 - x) * x
        m11 += wr * x * x
    return h, w_int / h ** 2, m00, m01, m11


def _assemble(grid: RadialGrid, coef: Coefficients):
    nodes = grid.nodes
    cell = grid.cell_interval
    sig = np.asarray(coef.sigma)[cell]
    pot = np.asarray(coef.potential)[cell]
    h, kfac, m00, m01, m11 = _cell_matrices(nodes, grid.n)
    N = len(nodes)
    kd = np.zeros(N)
    ke = np.zeros(N - 1)
    md = np.zeros(N)
    me = np.zeros(N - 1)
    pd = np.zeros(N)
    pe = np.zeros(N - 1)
    k = sig * kfac
    kd[:-1] += k
    kd[1:] += k
    ke -= k
    md[:-1] += m00
    md[1:] += m11
    me += m01
    pd[:-1] += pot * m00
    pd[1:] += pot * m11
    pe += pot * m01
    # Dirichlet at R: drop the last node
    mats = (kd[:-1], ke[:-1], md[:-1], me[:-1], pd[:-1], pe[:-1], k, pot, m00, m01, m11)
    return mats, h, sig


def _tri_mv(d, e, x):
    y = d * x
    y[:-1] += e * x[1:]
    y[1:] += e * x[:-1]
    return y


def _energies(x, k, pot, m00, m01, m11):
    """Element-wise quadratic forms (no cancellation between nodes)."""
    xf = np.append(x, 0.0)
    xa, xb = xf[:-1], xf[1:]
    mass_cell = m00 * xa * xa + 2.0 * m01 * xa * xb + m11 * xb * xb
    grad = float(np.sum(k * (xb - xa) ** 2))
    return grad - float(np.sum(pot * mass_cell)), float(np.sum(mass_cell))


def _inverse_iteration(mats, shift, maxiter=500):
    kd, ke, md, me, pd, pe, k, pot, m00, m01, m11 = mats
    ad = kd - pd - shift * md
    ae = ke - pe - shift * me
    ab = np.zeros((2, len(ad)))
    ab[0, 1:] = ae
    ab[1, :] = ad
    try:
        chol = linalg.cholesky_banded(ab, lower=False)
    except linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"shifted operator not positive definite: {exc}") from None
    x = np.ones(len(ad))
    lam_prev = math.inf
    for it in range(1, maxiter + 1):
        y = linalg.cho_solve_banded((chol, False), _tri_mv(md, me, x))
        x = y / np.linalg.norm(y)
        num, den = _energies(x, k, pot, m00, m01, m11)
        lam = num / den
        if abs(lam - lam_prev) < 1e-12 * (abs(lam) + 1.0) and it > 1:
            mx = _tri_mv(md, me, x)
            sx = _tri_mv(kd - pd, ke - pe, x)
            resid = float(np.linalg.norm(sx - lam * mx) / np.linalg.norm(mx))
            return lam, x, it, resid
        lam_prev = lam
    raise ConvergenceFailure(f"inverse iteration did not converge in {maxiter} steps")


def _node_flux_per_interval(grid: RadialGrid, flux_mid: np.ndarray):
    """Reconstruct ``sigma phi'`` at the nodes of each interval from midpoint values.

    Interior nodes average the two neighbouring midpoints; interval ends use
    linear extrapolation inside the interval, and the flux vanishes at r=0.
    """
    out = []
    start = 0
    for i, c in enumerate(grid.counts):
        f = flux_mid[start:start + c]
        nf = np.empty(c + 1)
        if c == 1:
            nf[:] = f[0]
        else:
            nf[1:-1] = 0.5 * (f[:-1] + f[1:])
            nf[0] = 1.5 * f[0] - 0.5 * f[1]
            nf[-1] = 1.5 * f[-1] - 0.5 * f[-2]
        if i == 0:
            nf[0] = 0.0
        out.append(nf)
        start += c
    return out


def _fd_single(params: ProblemParams, coef: Coefficients, grid: RadialGrid):
    mats, h, sig = _assemble(grid, coef)
    shift = -max(coef.potential) - 1.0
    lam, x, its, resid = _inverse_iteration(mats, shift)
    norm = sphere_area(params.n) * _energies(x, *mats[6:])[1]
    x = x / math.sqrt(norm)
    if x.sum() < 0:
        x = -x
    phi = np.append(x, 0.0)
    flux = sig * np.diff(phi) / h
    return lam, phi, flux, its, resid


def _check_grid(gridsize):
    if int(gridsize) < MIN_GRIDSIZE:
        raise GridTooCoarse(f"gridsize must be at least {MIN_GRIDSIZE}, got {gridsize}")


def solve_coefficients_fd(params: ProblemParams, coef: Coefficients,
                          gridsize: int = DEFAULT_GRIDSIZE, richardson: bool = True) -> EigenResult:
    """Finite-element solve for explicit per-interval coefficients."""
    _check_grid(gridsize)
    grid = RadialGrid.build(coef.breakpoints, int(gridsize), params.n)
    diag = {"gridsize": grid.size}
    lam_c, phi, flux, its, resid = _fd_single(params, coef, grid)
    lam = lam_c
    diag.update(iterations=its, residual=resid)
    if richardson:
        grid = grid.refined(2)
        lam_f, phi, flux, its_f, resid_f = _fd_single(params, coef, grid)
        lam = (4.0 * lam_f - lam_c) / 3.0
        diag.update(gridsize=grid.size, iterations=its + its_f, residual=resid_f,
                    lambda_coarse=lam_c, lambda_fine=lam_f, richardson=True)
    else:
        diag.update(lambda_fine=lam_c, richardson=False)
    nodes = grid.nodes
    flux_r = 0.5 * (nodes[1:] + nodes[:-1])
    return EigenResult(lam, grid, phi, flux, flux_r, "finite-difference", coef, diag,
                       _node_flux=_node_flux_per_interval(grid, flux))


# --------------------------------------------------------------------------
# shooting


class _Piece:
    """Closed-form solution ``A f1 + B f2`` on one interval."""

    def __init__(self, n, a, b, sigma, v, lam, regular):
        self.n, self.a, self.b, self.sigma = n, a, b, sigma
        self.w2 = (lam + v) / sigma
        self.regular = regular
        self.A, self.B = 1.0, 0.0

    def basis(self, r):
        """Values and derivatives ``(f1, f1', f2, f2')`` at ``r``."""
        n, w2 = self.n, self.w2
        r = np.asarray(r, dtype=float)
        if n == 1:
            rho = r - self.a
            if w2 > 0:
                w = math.sqrt(w2)
                c, s = np.cos(w * rho), np.sin(w * rho)
                return c, -w * s, s / w, c
            if w2 < 0:
                w = math.sqrt(-w2)
                c, s = np.cosh(w * rho), np.sinh(w * rho)
                return c, w * s, s / w, c
            return np.ones_like(r), np.zeros_like(r), rho, np.ones_like(r)
        if n == 2:
            if w2 > 0:
                w = math.sqrt(w2)
                x = w * r
                f1, d1 = specfun.bessel_j(0, x), -w * specfun.bessel_j(1, x)
                if self.regular:
                    return f1, d1, None, None
                return f1, d1, specfun.bessel_y(0, x), -w * specfun.bessel_y(1, x)
            if w2 < 0:
                w = math.sqrt(-w2)
                x = w * r
                f1, d1 = specfun.modified_bessel("I", 0, x), w * specfun.modified_bessel("I", 1, x)
                if self.regular:
                    return f1, d1, None, None
                return f1, d1, specfun.modified_bessel("K", 0, x), -w * specfun.modified_bessel("K", 1, x)
            if self.regular:
                return np.ones_like(r), np.zeros_like(r), None, None
            return np.ones_like(r), np.zeros_like(r), np.log(r), 1.0 / r
        # n == 3: solutions are j0-type functions
        if w2 != 0:
            w = math.sqrt(abs(w2))
            x = w * r
            trig = w2 > 0
            sn = np.sin(x) if trig else np.sinh(x)
            cs = np.cos(x) if trig else np.cosh(x)
            if self.regular:
                # sin(x)/x and its r-derivative, with a series near the origin
                x_safe = np.where(x == 0, 1.0, x)
                f1 = np.where(x < 1e-4, 1 - (1 if trig else -1) * x * x / 6, sn / x_safe)
                sgn = -1.0 if trig else 1.0
                dser = w * sgn * (x / 3 - (1 if trig else -1) * x ** 3 / 30)
                d1 = np.where(x < 1e-4, dser, w * (x * cs - sn) / x_safe ** 2)
                return f1, d1, None, None
            f1 = sn / r
            d1 = (w * cs * r - sn) / r ** 2
            f2 = cs / r
            d2 = ((-w if trig else w) * sn * r - cs) / r ** 2
            return f1, d1, f2, d2
        if self.regular:
            return np.ones_like(r), np.zeros_like(r), None, None
        return np.ones_like(r), np.zeros_like(r), 1.0 / r, -1.0 / r ** 2

    def value(self, r):
        f1, _, f2, _ = self.basis(r)
        return self.A * f1 if f2 is None else self.A * f1 + self.B * f2

    def deriv(self, r):
        _, d1, _, d2 = self.basis(r)
        return self.A * d1 if d2 is None else self.A * d1 + self.B * d2

    def match(self, phi_a, flux_a):
        """Choose ``A, B`` so that ``phi(a)`` and ``a^(n-1) sigma phi'(a)`` match."""
        f1, d1, f2, d2 = (float(v) for v in self.basis(self.a))
        wgt = self.a ** (self.n - 1) * self.sigma
        mat = np.array([[f1, f2], [wgt * d1, wgt * d2]])
        self.A, self.B = np.linalg.solve(mat, [phi_a, flux_a])

    def end_state(self):
        b = self.b
        return float(self.value(b)), float(b ** (self.n - 1) * self.sigma * self.deriv(b))


def _propagate(n, coef: Coefficients, lam: float):
    pieces = []
    bps = coef.breakpoints
    state = None
    for i, (s, v) in enumerate(zip(coef.sigma, coef.potential)):
        p = _Piece(n, bps[i], bps[i + 1], s, v, lam, regular=(i == 0))
        if i > 0:
            p.match(*state)
        state = p.end_state()
        pieces.append(p)
    return pieces, state


def _boundary_value(n, coef, lam):
    pieces, (phi_R, _) = _propagate(n, coef, lam)
    return phi_R


def solve_coefficients_shooting(params: ProblemParams, coef: Coefficients,
                                gridsize: int = DEFAULT_GRIDSIZE,
                                seed_gridsize: int = SEED_GRIDSIZE) -> EigenResult:
    """Shooting solve for explicit per-interval coefficients."""
    if len(coef.sigma) - 1 > MAX_INTERFACES:
        raise ValidationError(f"at most {MAX_INTERFACES} interfaces supported by shooting")
    n = params.n
    seed = solve_coefficients_fd(params, coef, seed_gridsize, richardson=False).eigenvalue
    half = 0.1 * (abs(seed) + 1.0)
    g = lambda lam: _boundary_value(n, coef, lam)
    lo, hi = seed - half, seed + half
    glo, ghi = g(lo), g(hi)
    widen = 0
    while glo * ghi > 0:
        widen += 1
        if widen > 8:
            raise RootBracketFailure(f"no sign change of phi(R) around {seed}")
        half *= 2.0
        lo, hi = seed - half, seed + half
        glo, ghi = g(lo), g(hi)
    lam, info = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                maxiter=300, full_output=True)
    if not info.converged:
        raise ConvergenceFailure("shooting root search did not converge")
    pieces, (phi_R, _) = _propagate(n, coef, lam)

    cn = sphere_area(n)
    norm = 0.0
    for p in pieces:
        r = 0.5 * (p.b + p.a) + 0.5 * (p.b - p.a) * _GL_X
        norm += 0.5 * (p.b - p.a) * float(np.sum(_GL_W * r ** (n - 1) * p.value(r) ** 2))
    scale = 1.0 / math.sqrt(cn * norm)
    for p in pieces:
        p.A *= scale
        p.B *= scale

    grid = RadialGrid.build(coef.breakpoints, max(int(gridsize), MIN_GRIDSIZE), n)
    nodes = grid.nodes
    starts = np.concatenate([[0], np.cumsum(grid.counts)])
    phi = np.empty(len(nodes))
    flux_r = 0.5 * (nodes[1:] + nodes[:-1])
    flux = np.empty(len(flux_r))
    for i, p in enumerate(pieces):
        phi[starts[i]:starts[i + 1]] = p.value(nodes[starts[i]:starts[i + 1]])
        flux[starts[i]:starts[i + 1]] = p.sigma * p.deriv(flux_r[starts[i]:starts[i + 1]])
    phi[-1] = 0.0
    if np.min(phi) < -1e-10 * np.max(phi):
        raise ConvergenceFailure("shooting root is not the principal eigenvalue")
    regimes = [("oscillatory" if p.w2 > 0 else "evanescent" if p.w2 < 0 else "flat")
               for p in pieces]
    diag = {"gridsize": grid.size, "seed_lambda": seed, "bracket_widenings": widen,
            "iterations": int(info.iterations), "boundary_residual": abs(phi_R * scale),
            "regimes": regimes, "nonpositive_lambda": bool(lam <= 0)}
    return EigenResult(float(lam), grid, phi, flux, flux_r, "shooting", coef, diag,
                       _pieces=pieces)


# --------------------------------------------------------------------------
# public API

METHODS = ("fd", "shooting")


def solve_coefficients(params, coef, method="shooting", gridsize=DEFAULT_GRIDSIZE,
                       richardson=True) -> EigenResult:
    if method == "fd":
        return solve_coefficients_fd(params, coef, gridsize, richardson)
    if method == "shooting":
        return solve_coefficients_shooting(params, coef, gridsize)
    raise ValidationError(f"unknown method {method!r}")


def solve_principal(params: ProblemParams, m: PiecewiseRadial,
                    gridsize: int = DEFAULT_GRIDSIZE, richardson: bool = True) -> EigenResult:
    """Finite-element principal eigenpair of the drifted operator for density ``m``.

    With ``richardson`` the eigenvalue is extrapolated from the grid and its
    uniform refinement; the eigenfunction comes from the refined grid.
    """
    return solve_coefficients_fd(params, density_coefficients(params, m), gridsize, richardson)


def shooting_eigen(params: ProblemParams, m: PiecewiseRadial,
                   gridsize: int = DEFAULT_GRIDSIZE) -> EigenResult:
    """Principal eigenpair by shooting; evaluation of ``phi`` is exact."""
    return solve_coefficients_shooting(params, density_coefficients(params, m), gridsize)


def principal_eigen(params, m, method="shooting", gridsize=DEFAULT_GRIDSIZE) -> EigenResult:
    return solve_coefficients(params, density_coefficients(params, m), method, gridsize)


def principal_eigenvalue(params, m, method="shooting", gridsize=DEFAULT_GRIDSIZE) -> float:
    return principal_eigen(params, m, method, gridsize).eigenvalue


def solve_two_density(params: ProblemParams, m1: PiecewiseRadial, m2: PiecewiseRadial,
                      gridsize: int = DEFAULT_GRIDSIZE, method: str = "fd") -> EigenResult:
    """Eigenpair of ``-(r^(n-1)(1 + alpha m1) phi')' = (lambda + m2) phi r^(n-1)``."""
    return solve_coefficients(params, merged_coefficients(params, m1, m2), method, gridsize)


def rayleigh_quotient(params: ProblemParams, m: PiecewiseRadial, r, phi) -> float:
    """Rayleigh quotient of the piecewise-linear interpolant of ``phi`` at nodes ``r``.

    The integrals are exact for the interpolant: cells are split at the
    density breakpoints so ``sigma`` and ``m`` are constant on each piece.
    """
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if r.shape != phi.shape or r.ndim != 1 or len(r) < 2:
        raise ValidationError("r and phi must be 1-D arrays of equal length >= 2")
    if np.any(np.diff(r) <= 0):
        raise ValidationError("nodes must be strictly increasing")
    pts = np.union1d(r, [b for b in m.breakpoints if r[0] < b < r[-1]])
    vals = np.interp(pts, r, phi)
    a, b = pts[:-1], pts[1:]
    fa, fb = vals[:-1], vals[1:]
    n = params.n
    mid = 0.5 * (a + b)
    mv = np.asarray(m(mid), dtype=float)
    sig = 1.0 + params.alpha * mv
    h = b - a
    slope = (fb - fa) / h
    w_int = (b ** n - a ** n) / n
    grad = float(np.sum(sig * slope ** 2 * w_int))
    # exact int r^(n-1) (linear)^2 by 3-point Gauss
    gx = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
    gw = np.array([5.0, 8.0, 5.0]) / 18.0
    mass = np.zeros_like(h)
    for x, w in zip(gx, gw):
        rr = a + h * x
        mass += w * h * rr ** (n - 1) * (fa + x * (fb - fa)) ** 2
    denom = float(np.sum(mass))
    if denom <= 0 or not math.isfinite(denom):
        raise ZeroDenominator("phi vanishes identically")
    return (grad - float(np.sum(mv * mass))) / denom


def _one_sided_second(result: EigenResult, i_iface: int, side: str):
    """One-sided second derivative of phi at the interface with index ``i_iface``."""
    b = result.coefficients.breakpoints[i_iface]
    piece = i_iface - 1 if side == "int" else i_iface
    if result.exact:
        p = result._pieces[piece]
        sig = p.sigma
        v = result.coefficients.potential[piece]
        d1 = float(p.deriv(b))
        # from the ODE inside the interval
        return -((result.eigenvalue + v) * float(p.value(b)) + (result.grid.n - 1) / b * sig * d1) / sig
    nodes = result.grid.nodes
    j = int(np.cumsum(result.grid.counts)[i_iface - 1])
    c = result.grid.counts[piece]
    if c >= 3:
        idx = [j, j - 1, j - 2, j - 3] if side == "int" else [j, j + 1, j + 2, j + 3]
        h = abs(nodes[idx[1]] - nodes[idx[0]])
        f = result.phi[idx]
        return float((2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / h ** 2)
    return float("nan")


def check_jump_conditions(result: EigenResult, m: PiecewiseRadial, tol: float | None = None):
    """Transmission conditions at each interface of ``m``.

    Returns one dict per interface with ``|[phi]|``, ``|[sigma phi']|`` and
    ``|[sigma phi''] + [m] phi|`` (the jump of the second derivative forced
    by the equation), plus an ``ok`` flag against ``tol``.
    """
    if tol is None:
        tol = 1e-10 if result.exact else 1e-4
    bps = result.coefficients.breakpoints
    report = []
    for b in m.interfaces:
        i = int(np.argmin(np.abs(np.asarray(bps) - b)))
        if abs(bps[i] - b) > 1e-12 * bps[-1]:
            raise ValidationError(f"interface {b} is not a breakpoint of the solution")
        s_in, s_out = result.coefficients.sigma[i - 1], result.coefficients.sigma[i]
        v_in, v_out = result.coefficients.potential[i - 1], result.coefficients.potential[i]
        phi_in, phi_out = result.phi_at(b, "int"), result.phi_at(b, "ext")
        d_in, d_out = result.dphi_at(b, "int"), result.dphi_at(b, "ext")
        dd_in, dd_out = _one_sided_second(result, i, "int"), _one_sided_second(result, i, "ext")
        jphi = abs(phi_out - phi_in)
        jflux = abs(s_out * d_out - s_in * d_in)
        jcurv = abs(s_out * dd_out - s_in * dd_in + (v_out - v_in) * 0.5 * (phi_in + phi_out))
        report.append({"r": float(b), "phi_jump": jphi, "flux_jump": jflux,
                       "curvature_residual": jcurv,
                       "ok": bool(jphi <= tol and jflux <= tol and jcurv <= tol)})
    return report


def dirichlet_eigenvalue(n: int, R: float = 1.0) -> float:
    """First Dirichlet eigenvalue of the Laplacian on the ball of radius ``R``."""
    if n == 1:
        return (math.pi / (2 * R)) ** 2
    if n == 2:
        return (specfun.bessel_j_zero(0, 1) / R) ** 2
    if n == 3:
        return (math.pi / R) ** 2
    raise ValidationError(f"n must be 1, 2 or 3, got {n}")
