"""Bessel functions of integer order, their derivatives and zeros.

Thin validated layer over :mod:`scipy.special`.  All evaluators accept
scalars or arrays for ``x`` and return the same shape.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

from .errors import DomainError, OrderTooLarge, ValidationError

MAX_ORDER = 64


def _check_order(k) -> int:
    if int(k) != k or k < 0:
        raise ValidationError(f"order must be a nonnegative integer, got {k}")
    if k > MAX_ORDER:
        raise OrderTooLarge(f"order {k} exceeds the configured maximum {MAX_ORDER}")
    return int(k)


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError(f"{name} requires x > 0")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def bessel_j(k: int, x):
    k = _check_order(k)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_j requires x >= 0")
    return _out(special.jv(k, x))


def bessel_j_prime(k: int, x):
    k = _check_order(k)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("bessel_j_prime requires x >= 0")
    return _out(special.jvp(k, x))


def bessel_y(k: int, x):
    k = _check_order(k)
    return _out(special.yv(k, _positive(x, "bessel_y")))


def bessel_y_prime(k: int, x):
    k = _check_order(k)
    return _out(special.yvp(k, _positive(x, "bessel_y_prime")))


def modified_bessel(kind: str, k: int, x, derivative: bool = False):
    """Modified Bessel function ``I_k`` (kind ``"I"``) or ``K_k`` (kind ``"K"``)."""
    k = _check_order(k)
    if kind == "I":
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("I_k requires x >= 0")
        return _out(special.ivp(k, x) if derivative else special.iv(k, x))
    if kind == "K":
        x = _positive(x, "K_k")
        return _out(special.kvp(k, x) if derivative else special.kv(k, x))
    raise ValidationError(f"kind must be 'I' or 'K', got {kind!r}")


def bessel_j_zero(k: int, idx: int) -> float:
    """The ``idx``-th positive zero of ``J_k``.

    Zeros are bracketed by scanning sign changes of ``J_k`` on a step
    shorter than half the zero spacing (which is always above ``pi/2`` for
    the first gap and tends to ``pi``), then refined to 1e-14 absolute.
    """
    k = _check_order(k)
    if int(idx) != idx or idx < 1:
        raise ValidationError(f"zero index must be a positive integer, got {idx}")
    step = 0.5
    x = max(k, 1e-3)  # all positive zeros of J_k exceed k
    f_prev = special.jv(k, x)
    found = 0
    while True:
        x_next = x + step
        f_next = special.jv(k, x_next)
        if f_prev == 0.0 and x > 0:
            found += 1
            if found == idx:
                return float(x)
        elif f_prev * f_next < 0:
            found += 1
            if found == idx:
                return float(optimize.brentq(lambda t: special.jv(k, t), x, x_next,
                                             xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                             maxiter=200))
        x, f_prev = x_next, f_next


def selftest(orders=(0, 1, 2, 5, 10, 20, 40, 64), num_x: int = 60):
    """Run the invariant suite; return a list of ``(name, max_error, tol, passed)``."""
    xs = np.geomspace(0.1, 50.0, num_x)
    rows = []

    worst = 0.0
    for k in orders:
        j, jp = bessel_j(k, xs), bessel_j_prime(k, xs)
        y, yp = bessel_y(k, xs), bessel_y_prime(k, xs)
        w = j * yp - jp * y
        ref = 2.0 / (math.pi * xs)
        worst = max(worst, float(np.max(np.abs(w - ref) / ref)))
    rows.append(("wronskian J/Y", worst, 1e-12, worst <= 1e-12))

    worst = 0.0
    for k in orders:
        if k == 0 or k >= MAX_ORDER:
            continue
        lhs = bessel_j(k - 1, xs) + bessel_j(k + 1, xs)
        rhs = 2.0 * k / xs * bessel_j(k, xs)
        scale = np.abs(bessel_j(k - 1, xs)) + np.abs(bessel_j(k + 1, xs))
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
    rows.append(("recurrence J", worst, 1e-11, worst <= 1e-11))

    worst = 0.0
    for k in orders:
        xm = np.geomspace(0.1, 30.0, num_x)
        w = (modified_bessel("I", k, xm) * modified_bessel("K", k, xm, derivative=True)
             - modified_bessel("I", k, xm, derivative=True) * modified_bessel("K", k, xm))
        worst = max(worst, float(np.max(np.abs(w * xm + 1.0))))
    rows.append(("wronskian I/K", worst, 1e-12, worst <= 1e-12))

    # observed order of the central difference of J_k against J_k'
    x0 = 1.7
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        fd = (bessel_j(3, x0 + h) - bessel_j(3, x0 - h)) / (2 * h)
        errs.append(abs(fd - bessel_j_prime(3, x0)))
    order = min(math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2]))
    rows.append(("derivative order", order, 1.9, order >= 1.9))

    z = bessel_j_zero(0, 1)
    err = abs(bessel_j(0, z))
    rows.append(("J_0 first zero residual", err, 1e-12, err < 1e-12))
    return rows
