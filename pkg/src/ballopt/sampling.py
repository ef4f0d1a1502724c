"""Seeded generators of admissible radial densities."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import (
    ProblemParams,
    RadialDensity,
    density_from_support,
    make_radial_density,
    shell_volume,
    sphere_area,
)


def rng_from_seed(seed) -> np.random.Generator:
    if seed is None:
        seed = 0
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.default_rng(seed)


def _fix_mean(values, bps, params: ProblemParams):
    """Blend values toward 0 or kappa so the mean equals ``m0`` (stays in range)."""
    v = np.asarray(values, dtype=float)
    w = (bps[1:] ** params.n - bps[:-1] ** params.n) / params.R ** params.n
    mu = float(v @ w)
    k, m0 = params.kappa, params.m0
    if mu > m0:
        v = v * (m0 / mu)
    elif mu < m0:
        v = k - (k - v) * ((k - m0) / (k - mu))
    return np.clip(v, 0.0, k)


def random_density(params: ProblemParams, rng: np.random.Generator, max_pieces: int = 6,
                   min_gap: float = 0.02) -> RadialDensity:
    """Piecewise-constant density with 2..max_pieces intervals and values strictly inside (0, kappa).

    Breakpoints are kept at least ``min_gap * R`` apart.
    """
    R = params.R
    for _ in range(1000):
        K = int(rng.integers(2, max_pieces + 1))
        inner = np.sort(rng.uniform(0.0, R, K - 1))
        bps = np.concatenate([[0.0], inner, [R]])
        if np.min(np.diff(bps)) < min_gap * R:
            continue
        vals = rng.uniform(0.05, 0.95, K) * params.kappa
        vals = _fix_mean(vals, bps, params)
        if np.any(vals <= 1e-3 * params.kappa) or np.any(vals >= (1 - 1e-3) * params.kappa):
            continue
        try:
            return make_radial_density(bps, vals, params)
        except ValidationError:
            continue
    raise ValidationError("could not sample a density")


def _outer_radius(inner: float, vol: float, n: int) -> float:
    return (inner ** n + vol * n / sphere_area(n)) ** (1.0 / n)


def random_bang_bang(params: ProblemParams, rng: np.random.Generator, max_pieces: int = 6,
                     min_gap: float = 0.01) -> RadialDensity:
    """Bang-bang density with 1..max_pieces annular pieces.

    Radii are drawn uniformly; the admissible volume is then restored by
    moving the outermost breakpoint.
    """
    R, n = params.R, params.n
    target = params.resource_volume
    for _ in range(10000):
        K = int(rng.integers(1, max_pieces + 1))
        pts = np.sort(rng.uniform(0.0, R, 2 * K))
        if rng.random() < 0.5:
            pts[0] = 0.0
        intervals = [(pts[2 * i], pts[2 * i + 1]) for i in range(K)]
        vol = sum(float(shell_volume(a, b, n)) for a, b in intervals[:-1])
        rest = target - vol
        a_last = intervals[-1][0]
        if rest <= 0:
            continue
        b_last = _outer_radius(a_last, rest, n)
        if b_last >= R - min_gap * R:
            continue
        intervals[-1] = (a_last, b_last)
        flat = [p for ab in intervals for p in ab]
        if np.min(np.diff(flat)) < min_gap * R:
            continue
        try:
            return density_from_support(intervals, params)
        except ValidationError:
            continue
    raise ValidationError("could not sample a bang-bang density")


def perturbed_centered(params: ProblemParams, rng: np.random.Generator, max_dist: float,
                       min_width: float = 1e-3) -> RadialDensity:
    """Volume-preserving bang-bang perturbation of the centered ball.

    Resources are removed from up to two annular holes inside
    ``[r* - d, r*]`` and placed in up to two shells inside ``[r*, r* + d]``,
    so the Hausdorff distance to the centered ball is at most ``d``.
    """
    R, n = params.R, params.n
    r0 = params.r_star
    d = min(max_dist, r0, R - r0) * (1 - 1e-9)
    for _ in range(10000):
        nh = int(rng.integers(1, 3))
        ns = int(rng.integers(1, 3))
        hole_pts = np.sort(rng.uniform(r0 - d, r0, 2 * nh))
        if rng.random() < 0.3:
            hole_pts[-1] = r0
        holes = [(hole_pts[2 * i], hole_pts[2 * i + 1]) for i in range(nh)]
        vol = sum(float(shell_volume(a, b, n)) for a, b in holes)
        shell_pts = np.sort(rng.uniform(r0, r0 + d, 2 * ns - 1))
        if hole_pts[-1] < r0 and rng.random() < 0.3:
            shell_pts[0] = r0
        shells = [(shell_pts[2 * i], shell_pts[2 * i + 1]) for i in range(ns - 1)]
        rest = vol - sum(float(shell_volume(a, b, n)) for a, b in shells)
        if rest <= 0:
            continue
        a_last = shell_pts[-1]
        b_last = _outer_radius(a_last, rest, n)
        if b_last > r0 + d:
            continue
        shells.append((a_last, b_last))
        # support = [0, r0] minus holes, plus shells
        support = []
        start = 0.0
        for a, b in holes:
            support.append((start, a))
            start = b
        support.append((start, r0))
        support += shells
        support = [(a, b) for a, b in support if b > a]
        merged = []
        for a, b in support:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(b, merged[-1][1]))
            else:
                merged.append((a, b))
        flat = [p for ab in merged for p in ab]
        if len(flat) > 1 and np.min(np.diff(flat)) < min_width * R:
            continue
        if merged[-1][1] >= R:
            continue
        try:
            return density_from_support(merged, params)
        except ValidationError:
            continue
    raise ValidationError("could not sample a perturbation")


def random_perturbation(m: RadialDensity, params: ProblemParams, rng: np.random.Generator,
                        pieces: int = 4):
    """Zero-mean piecewise-constant direction that keeps ``m + t h`` in range for small t."""
    from .model import PiecewiseRadial

    R = params.R
    inner = np.sort(rng.uniform(0.0, R, pieces - 1))
    base = PiecewiseRadial(tuple(np.concatenate([[0.0], inner, [R]])), tuple([0.0] * pieces))
    grid = base.refine(m.breakpoints)
    bps = np.asarray(grid.breakpoints)
    vals = rng.normal(size=len(grid.values))
    mids = 0.5 * (bps[1:] + bps[:-1])
    mv = np.asarray(m(mids))
    # only push inward at the bounds
    vals = np.where(mv <= 0.0, np.abs(vals), vals)
    vals = np.where(mv >= params.kappa, -np.abs(vals), vals)
    w = bps[1:] ** params.n - bps[:-1] ** params.n
    # remove the weighted mean using only cells where both signs are allowed,
    # falling back to all cells
    free = (mv > 0.0) & (mv < params.kappa)
    if np.any(free):
        vals = vals - free * (vals @ w) / float(w[free].sum())
    else:
        # bang-bang: rescale the positive part against the negative part
        pos, neg = vals > 0, vals < 0
        sp, sn = float(vals[pos] @ w[pos]), float(-vals[neg] @ w[neg])
        if sp == 0.0 or sn == 0.0:
            raise ValidationError("density admits no two-sided perturbation")
        vals = np.where(pos, vals * np.sqrt(sn / sp), vals * np.sqrt(sp / sn))
    return PiecewiseRadial(tuple(float(b) for b in bps), tuple(float(v) for v in vals))
