"""Transcendental exponent equations for the corner sector.

Solves the characteristic equations whose roots give the strength of the
corner singularity for the penalized elastic operator and for the Stokes
operator, and locates the critical opening angle where the Stokes root
structure changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "MaterialParams",
    "ExponentTable",
    "NoRootInBracket",
    "MultipleRootsInBracket",
    "lame_exponents",
    "stokes_exponents",
    "critical_angle",
]

_SCAN_SAMPLES = 2048


class NoRootInBracket(Exception):
    """A bracket expected to contain exactly one root contained none."""


class MultipleRootsInBracket(Exception):
    """A bracket expected to contain exactly one root showed several sign changes."""


@dataclass(frozen=True)
class MaterialParams:
    """Viscosity / penalty pair with the derived elastic constants.

    For eps > 0 the penalized problem is equivalent to an elastic system with
    second constant nu = 1/eps - mu, and the combination
    C = (3*mu + nu)/(mu + nu) collapses to 1 + 2*mu*eps.
    """

    mu: float
    eps: float

    def __post_init__(self) -> None:
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.eps < 0.0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")

    @property
    def nu(self) -> float:
        if self.eps == 0.0:
            raise ValueError("nu is defined only for eps > 0")
        return 1.0 / self.eps - self.mu

    @property
    def C(self) -> float:
        """Constant of the angular eigen-equation; equals 1 in the eps=0 limit."""
        if self.eps == 0.0:
            return 1.0
        return 1.0 + 2.0 * self.mu * self.eps


@dataclass(frozen=True)
class ExponentTable:
    """First three positive roots of a sector characteristic equation."""

    family: str                  # "lame" | "stokes"
    omega: float
    C: float                     # 1.0 for the Stokes family
    exponents: tuple[float, float, float]
    mode_count: int              # N=2 for lame, M in {1,2} for stokes
    brackets: tuple[tuple[float, float], ...]
    residuals: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self) -> None:
        e1, e2, e3 = self.exponents
        if not (e1 < e2 < e3):
            raise ValueError(f"exponents out of order: {self.exponents}")


def _lame_eq(lam: float, omega: float, C: float) -> float:
    return C * C * math.sin(lam * omega) ** 2 - lam * lam * math.sin(omega) ** 2


def _scan_and_bisect(f, a: float, b: float, what: str) -> float:
    """Locate the single root of f in (a, b).

    Pre-scans the open interval on a uniform grid and refines every sign
    change by bisection; zero or several sign changes abort loudly instead of
    silently picking a root.
    """
    xs = np.linspace(a, b, _SCAN_SAMPLES + 1)
    # Stay strictly inside: the endpoints may themselves be roots of the
    # defining equation (e.g. the unit exponent of the Stokes family).
    shrink = (b - a) / (4.0 * _SCAN_SAMPLES)
    xs[0] += shrink
    xs[-1] -= shrink
    # Roots can sit arbitrarily close to a bracket endpoint (e.g. within
    # O(eps) of 1 for small penalty parameters), so supplement the uniform
    # grid with geometrically spaced samples near both ends.
    k = np.arange(12, 46)
    geo = (b - a) * 0.5 ** k
    xs = np.unique(np.concatenate([xs, a + geo, b - geo]))
    vals = np.array([f(x) for x in xs])
    # Values below the rounding-noise floor carry no reliable sign (this
    # happens next to endpoints that are exact roots of the equation).
    floor = 1e-13 * float(np.max(np.abs(vals)))
    signs = np.where(np.abs(vals) <= floor, 0.0, np.sign(vals))
    nz = np.flatnonzero(signs)
    changes = [
        (nz[k], nz[k + 1]) for k in range(len(nz) - 1)
        if signs[nz[k]] != signs[nz[k + 1]]
    ]
    pattern = "".join(
        "+" if s > 0 else ("-" if s < 0 else "0") for s in signs[:: len(signs) // 64]
    )
    if not changes:
        zeros = np.flatnonzero(signs == 0)
        if len(zeros):
            best = zeros[np.argmin(np.abs(vals[zeros]))]
            return float(xs[best])
        raise NoRootInBracket(
            f"{what}: no sign change in ({a}, {b}); scan pattern {pattern}")
    if len(changes) > 1:
        raise MultipleRootsInBracket(
            f"{what}: {len(changes)} sign changes in ({a}, {b}); scan pattern {pattern}")
    lo, hi = changes[0]
    return float(brentq(f, xs[lo], xs[hi], xtol=1e-15, rtol=9e-16))


def lame_exponents(omega: float, C: float) -> ExponentTable:
    """First three roots of C^2 sin^2(lam*omega) = lam^2 sin^2(omega).

    The roots are bracketed by (1/2, pi/omega), (pi/omega, 1), (1, 2*pi/omega)
    and satisfy the strict ordering 1/2 < e1 < pi/omega < e2 < 1 < e3 < 2*pi/omega
    for C > 1.  At C = 1 the equation degenerates to the Stokes one, where an
    exponent sits exactly at 1; that case is delegated to the Stokes solver.
    """
    if not (math.pi < omega < 2.0 * math.pi):
        raise ValueError(f"omega must be in (pi, 2*pi), got {omega}")
    if C < 1.0:
        raise ValueError(f"C must be >= 1, got {C}")
    if C == 1.0:
        st = stokes_exponents(omega)
        return ExponentTable(
            family="lame", omega=omega, C=1.0, exponents=st.exponents,
            mode_count=2, brackets=st.brackets, residuals=st.residuals)

    def f(lam: float) -> float:
        return _lame_eq(lam, omega, C)

    brackets = ((0.5, math.pi / omega), (math.pi / omega, 1.0), (1.0, 2.0 * math.pi / omega))
    roots = tuple(
        _scan_and_bisect(f, a, b, f"lame exponent {k + 1}")
        for k, (a, b) in enumerate(brackets)
    )
    residuals = tuple(abs(f(x)) for x in roots)
    table = ExponentTable(
        family="lame", omega=omega, C=C, exponents=roots,
        mode_count=2, brackets=brackets, residuals=residuals)
    _check_lame_ordering(table)
    return table


def _check_lame_ordering(table: ExponentTable) -> None:
    e1, e2, e3 = table.exponents
    om = table.omega
    ok = 0.5 < e1 < math.pi / om < e2 < 1.0 + 1e-15 and e2 <= 1.0 + 1e-15 \
        and 1.0 - 1e-15 <= e3 < 2.0 * math.pi / om
    if not ok:
        raise NoRootInBracket(f"exponent ordering violated: {table.exponents}")


def stokes_exponents(omega: float) -> ExponentTable:
    """First three roots of sin^2(k*omega) = k^2 sin^2(omega).

    k = 1 solves the equation identically at every opening angle and is
    returned exactly.  Below the critical angle it is the second root and a
    single singular mode is active (M = 1); above it a root appears in
    (pi/omega, 1), pushing the unit root to third place (M = 2).
    """
    if not (math.pi < omega < 2.0 * math.pi):
        raise ValueError(f"omega must be in (pi, 2*pi), got {omega}")

    def f(k: float) -> float:
        return math.sin(k * omega) ** 2 - k * k * math.sin(omega) ** 2

    om_star = critical_angle()
    b1 = (0.5, math.pi / omega)
    k1 = _scan_and_bisect(f, *b1, "stokes exponent 1")
    if omega <= om_star:
        b3 = (1.0, 2.0 * math.pi / omega)
        k3 = _scan_and_bisect(f, *b3, "stokes exponent 3")
        exponents = (k1, 1.0, k3)
        brackets = (b1, (1.0, 1.0), b3)
        mode_count = 1
    else:
        b2 = (math.pi / omega, 1.0)
        k2 = _scan_and_bisect(f, *b2, "stokes exponent 2")
        exponents = (k1, k2, 1.0)
        brackets = (b1, b2, (1.0, 1.0))
        mode_count = 2
    residuals = tuple(abs(f(x)) for x in exponents)
    return ExponentTable(
        family="stokes", omega=omega, C=1.0, exponents=exponents,
        mode_count=mode_count, brackets=brackets, residuals=residuals)


def critical_angle() -> float:
    """Root of tan(w) = w in (pi, 3*pi/2), approximately 1.4303*pi."""
    # tan has a pole at 3*pi/2; work with sin - w*cos which is smooth.
    f = lambda w: math.sin(w) - w * math.cos(w)
    lo, hi = math.pi + 1e-9, 1.5 * math.pi - 1e-9
    return float(brentq(f, lo, hi, xtol=1e-14, rtol=9e-16))
