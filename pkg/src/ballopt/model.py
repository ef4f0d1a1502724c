"""Problem parameters, radial piecewise-constant densities and grids.

Everything radial lives on the radius axis ``[0, R]``.  A density is a
piecewise-constant function described by breakpoints
``0 = r_0 < r_1 < ... < r_M = R`` and one value per interval.  Volumes are
true Lebesgue measures of the corresponding balls/annuli in dimension ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    MeanConstraintViolated,
    NonMonotoneBreakpoints,
    NotBangBang,
    ValidationError,
    ValueOutOfRange,
)

MEAN_TOL = 1e-12  # relative to kappa
VALUE_TOL = 1e-13  # relative to kappa, values this close to 0/kappa are snapped

SPHERE_AREA = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}


def sphere_area(n: int) -> float:
    """Surface area ``c_n`` of the unit sphere in R^n (c_1 = 2 counts both endpoints)."""
    try:
        return SPHERE_AREA[n]
    except KeyError:
        raise ValidationError(f"dimension must be 1, 2 or 3, got {n}") from None


def shell_volume(a, b, n: int):
    """Measure of the annulus ``{a <= |x| <= b}`` in R^n."""
    return sphere_area(n) * (np.power(b, n) - np.power(a, n)) / n


@dataclass(frozen=True)
class ProblemParams:
    """Global constants of the problem on the ball ``B(0, R)`` in R^n."""

    n: int = 2
    R: float = 1.0
    alpha: float = 0.0
    kappa: float = 1.0
    m0: float = 0.5

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValidationError(f"n must be 1, 2 or 3, got {self.n}")
        if not self.R > 0:
            raise ValidationError(f"R must be positive, got {self.R}")
        if not self.alpha >= 0:
            raise ValidationError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.m0 < self.kappa:
            raise ValidationError(
                f"need 0 < m0 < kappa, got m0={self.m0}, kappa={self.kappa}")

    @property
    def volume(self) -> float:
        """Measure of the ball ``B(0, R)``."""
        return float(shell_volume(0.0, self.R, self.n))

    @property
    def resource_volume(self) -> float:
        """Measure of ``{m = kappa}`` for an admissible bang-bang density."""
        return self.m0 * self.volume / self.kappa

    @property
    def r_star(self) -> float:
        """Radius of the centered ball carrying all the resources."""
        return self.R * (self.m0 / self.kappa) ** (1.0 / self.n)

    def replace(self, **changes) -> "ProblemParams":
        fields = dict(n=self.n, R=self.R, alpha=self.alpha, kappa=self.kappa, m0=self.m0)
        fields.update(changes)
        return ProblemParams(**fields)

    def to_dict(self) -> dict:
        return {"n": self.n, "R": self.R, "alpha": self.alpha,
                "kappa": self.kappa, "m0": self.m0}

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemParams":
        try:
            return cls(n=int(data["n"]), R=float(data["R"]), alpha=float(data["alpha"]),
                       kappa=float(data["kappa"]), m0=float(data["m0"]))
        except KeyError as exc:
            raise ValidationError(f"missing parameter {exc.args[0]!r}") from None


@dataclass(frozen=True)
class PiecewiseRadial:
    """A piecewise-constant radial function (no range or mean constraints).

    Used directly for perturbations ``h`` and as the base of
    :class:`RadialDensity`.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) + 1:
            raise ValidationError("need exactly one value per interval")
        b = self.breakpoints
        if any(not b[i] < b[i + 1] for i in range(len(b) - 1)):
            raise NonMonotoneBreakpoints(f"breakpoints not strictly increasing: {b}")

    @property
    def R(self) -> float:
        return self.breakpoints[-1]

    @property
    def num_intervals(self) -> int:
        return len(self.values)

    @property
    def interfaces(self) -> tuple:
        """Interior breakpoints (where the value changes)."""
        return self.breakpoints[1:-1]

    def intervals(self):
        b = self.breakpoints
        return [(b[i], b[i + 1], self.values[i]) for i in range(len(self.values))]

    def __call__(self, r):
        """Evaluate at ``r``; at a breakpoint the value of the outer interval is used."""
        idx = np.searchsorted(self.breakpoints, r, side="right") - 1
        idx = np.clip(idx, 0, self.num_intervals - 1)
        return np.asarray(self.values)[idx]

    def integral(self, n: int) -> float:
        """Integral over the ball in R^n."""
        return float(sum(v * shell_volume(a, b, n) for a, b, v in self.intervals()))

    def refine(self, points: Iterable[float]) -> "PiecewiseRadial":
        """Same function with extra breakpoints inserted (not canonical)."""
        pts = sorted(set(self.breakpoints) | {float(p) for p in points
                                              if 0.0 < p < self.R})
        mids = [(pts[i] + pts[i + 1]) / 2 for i in range(len(pts) - 1)]
        return PiecewiseRadial(tuple(pts), tuple(float(v) for v in self(np.array(mids))))

    def scaled(self, c: float) -> "PiecewiseRadial":
        return PiecewiseRadial(self.breakpoints, tuple(c * v for v in self.values))

    def to_dict(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "values": list(self.values)}


def linear_combination(terms) -> PiecewiseRadial:
    """``sum c_i f_i`` for ``terms = [(c_i, f_i), ...]`` on the union of breakpoints."""
    terms = list(terms)
    R = terms[0][1].R
    pts = sorted({float(b) for _, f in terms for b in f.breakpoints if b < R} | {R})
    mids = np.array([(pts[i] + pts[i + 1]) / 2 for i in range(len(pts) - 1)])
    vals = sum(c * np.asarray(f(mids), dtype=float) for c, f in terms)
    return PiecewiseRadial(tuple(pts), tuple(float(v) for v in vals))


@dataclass(frozen=True)
class RadialDensity(PiecewiseRadial):
    """Canonical piecewise-constant resource density with values in ``[0, kappa]``.

    Build instances through :func:`make_radial_density`, which validates and
    canonicalizes; the constructor itself only checks the shape.
    """

    kappa: float = field(default=1.0, compare=False)

    def is_bang_bang(self) -> bool:
        return all(v == 0.0 or v == self.kappa for v in self.values)

    def support_intervals(self) -> list:
        """Closed radius intervals where the density equals kappa."""
        if not self.is_bang_bang():
            raise NotBangBang("support intervals are only defined for bang-bang densities")
        return [(a, b) for a, b, v in self.intervals() if v == self.kappa]

    def mean(self, n: int) -> float:
        """Average over the ball of radius ``R`` in R^n."""
        total = sum(v * (b ** n - a ** n) for a, b, v in self.intervals())
        return total / self.R ** n


def _snap_value(v: float, kappa: float) -> float:
    if v < -VALUE_TOL * kappa or v > kappa * (1 + VALUE_TOL):
        raise ValueOutOfRange(f"density value {v} outside [0, {kappa}]")
    if abs(v) <= VALUE_TOL * kappa:
        return 0.0
    if abs(v - kappa) <= VALUE_TOL * kappa:
        return float(kappa)
    return float(v)


def canonicalize(breakpoints: Sequence[float], values: Sequence[float]):
    """Merge adjacent intervals carrying equal values."""
    bps = [float(breakpoints[0])]
    vals: list = []
    for i, v in enumerate(values):
        if vals and vals[-1] == v:
            bps[-1] = float(breakpoints[i + 1])
        else:
            vals.append(v)
            bps.append(float(breakpoints[i + 1]))
    return tuple(bps), tuple(vals)


def make_radial_density(breakpoints, values, params: ProblemParams,
                        check_mean: bool = True) -> RadialDensity:
    """Validate and canonicalize a radial density.

    Parameters
    ----------
    breakpoints : sequence of float
        Strictly increasing, starting at 0 and ending at ``params.R``.
    values : sequence of float
        One value per interval, each in ``[0, kappa]``.
    check_mean : bool
        Reject densities whose mean differs from ``m0`` by more than
        ``1e-12 * kappa``.  Disable for intermediate path densities or for
        plain eigenvalue solves.
    """
    bps = [float(b) for b in breakpoints]
    if len(bps) != len(values) + 1 or len(values) == 0:
        raise ValidationError("need at least one interval and one value per interval")
    if any(not bps[i] < bps[i + 1] for i in range(len(bps) - 1)):
        raise NonMonotoneBreakpoints(f"breakpoints not strictly increasing: {bps}")
    if bps[0] != 0.0:
        raise ValidationError(f"first breakpoint must be 0, got {bps[0]}")
    if abs(bps[-1] - params.R) > 1e-12 * params.R:
        raise ValidationError(f"last breakpoint must equal R={params.R}, got {bps[-1]}")
    bps[-1] = params.R
    vals = [_snap_value(float(v), params.kappa) for v in values]
    bps_c, vals_c = canonicalize(bps, vals)
    density = RadialDensity(bps_c, vals_c, kappa=params.kappa)
    if check_mean:
        mean = density.mean(params.n)
        if abs(mean - params.m0) > MEAN_TOL * params.kappa:
            raise MeanConstraintViolated(
                f"mean {mean!r} differs from m0={params.m0!r}")
    return density


def constant_density(value: float, params: ProblemParams, check_mean: bool = False) -> RadialDensity:
    return make_radial_density((0.0, params.R), (value,), params, check_mean=check_mean)


def centered_ball_density(params: ProblemParams) -> RadialDensity:
    """The density ``kappa`` on the centered ball of admissible volume, 0 outside."""
    return RadialDensity((0.0, params.r_star, params.R), (float(params.kappa), 0.0),
                         kappa=params.kappa)


def density_from_support(intervals, params: ProblemParams, check_mean: bool = True) -> RadialDensity:
    """Bang-bang density equal to kappa on the given disjoint radius intervals."""
    pts = [0.0]
    vals: list = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if a > pts[-1]:
            vals.append(0.0)
            pts.append(a)
        elif a < pts[-1]:
            raise ValidationError("support intervals overlap")
        vals.append(params.kappa)
        pts.append(b)
    if pts[-1] < params.R:
        vals.append(0.0)
        pts.append(params.R)
    return make_radial_density(pts, vals, params, check_mean=check_mean)


def _point_set_distance(points: np.ndarray, intervals) -> np.ndarray:
    """Distance from each point to a union of closed intervals."""
    d = np.full(points.shape, np.inf)
    for a, b in intervals:
        d = np.minimum(d, np.maximum(0.0, np.maximum(a - points, points - b)))
    return d


def _directed_hausdorff(src, dst) -> float:
    # sup over src of dist(., dst) is reached at an endpoint of src or at the
    # midpoint of a gap of dst, clipped into src
    cands = [p for ab in src for p in ab]
    dst_sorted = sorted(dst)
    gaps = [(dst_sorted[i][1], dst_sorted[i + 1][0]) for i in range(len(dst_sorted) - 1)]
    for a, b in src:
        for g0, g1 in gaps:
            mid = 0.5 * (g0 + g1)
            if a <= mid <= b:
                cands.append(mid)
    return float(np.max(_point_set_distance(np.array(cands), dst)))


def set_hausdorff(s1, s2) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    if not s1 and not s2:
        return 0.0
    if not s1 or not s2:
        return math.inf
    return max(_directed_hausdorff(s1, s2), _directed_hausdorff(s2, s1))


def hausdorff_distance(d1: RadialDensity, d2: RadialDensity) -> float:
    """Hausdorff distance between the supports ``{m = kappa}`` of two bang-bang densities.

    For radial sets around a common center the distance in R^n equals the
    distance between their radius profiles, so it is computed on ``[0, R]``.
    """
    return set_hausdorff(d1.support_intervals(), d2.support_intervals())


@dataclass(frozen=True)
class RadialGrid:
    """Interface-fitted grid on ``[0, R]``.

    ``counts[i]`` uniform cells are placed in the i-th interval of
    ``breakpoints``, so every breakpoint is a node.  Doubling all counts
    halves every cell, which is what Richardson extrapolation relies on.
    """

    breakpoints: tuple
    counts: tuple
    n: int

    @classmethod
    def build(cls, breakpoints, gridsize: int, n: int) -> "RadialGrid":
        bps = np.asarray(breakpoints, dtype=float)
        lengths = np.diff(bps)
        raw = gridsize * lengths / bps[-1]
        counts = np.maximum(1, np.rint(raw)).astype(int)
        return cls(tuple(float(b) for b in bps), tuple(int(c) for c in counts), n)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.breakpoints, tuple(c * factor for c in self.counts), self.n)

    @property
    def size(self) -> int:
        return int(sum(self.counts))

    @property
    def nodes(self) -> np.ndarray:
        parts = []
        for i, c in enumerate(self.counts):
            a, b = self.breakpoints[i], self.breakpoints[i + 1]
            parts.append(a + (b - a) * np.arange(c) / c)
        parts.append(np.array([self.breakpoints[-1]]))
        return np.concatenate(parts)

    @property
    def cell_interval(self) -> np.ndarray:
        """Index of the breakpoint interval containing each cell."""
        return np.repeat(np.arange(len(self.counts)), self.counts)

    @property
    def interface_nodes(self) -> np.ndarray:
        """Node indices of the interior breakpoints."""
        return np.cumsum(self.counts)[:-1]

    @property
    def weights(self) -> np.ndarray:
        """Radial weight ``r^(n-1)`` at each node."""
        return self.nodes ** (self.n - 1)
