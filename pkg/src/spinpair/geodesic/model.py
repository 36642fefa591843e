"""State, first integrals and orbit classification for the spin metric.

The metric, in coordinates ``(t, r, theta, phi)``:

    ds^2 = cos^2(theta) dt^2 - dr^2 - r^2 dtheta^2
           - r^2 sin^2(theta) dphi^2 + 2 r sin^2(theta) dphi dt

is axially symmetric; the cross term fixes the model's spin sense.
Geodesics admit four first integrals:

    P = cos^2(theta) U^t + r sin^2(theta) U^phi
    X = r sin^2(theta) (U^t - r U^phi)
    A = (r^2 U^theta)^2 + [r sin(theta) (U^t - r U^phi)]^2
    W = g_ij U^i U^j

with ``A >= X^2`` and ``W`` restricted to {-1, 0, 1} (scale fixing).
The squared radial velocity is quadratic in ``1/r``:

    (U^r)^2 = -(A - X^2)/r^2 + 2 P X / r + P^2 - W

whose positive roots are the turning radii used to classify orbits.
The tilt ``S = X / sqrt(A)`` confines the motion to ``sin(theta) >= |S|``,
and the sign of ``X`` (for future-directed ``P > 0``) maps to the
up/down outcome of a spin component measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "GeodesicConstants",
    "GeodesicState",
    "OrbitClass",
    "LatitudeForbidden",
    "RadiusForbidden",
    "NoTurningPoint",
    "TimeReversed",
    "DegenerateSpin",
    "UndefinedTilt",
    "constants_from_state",
    "state_from_constants",
    "eom_rhs",
    "classify_orbit",
    "tilt",
    "energy_residual",
    "spin_outcome",
    "metric_norm",
]


class LatitudeForbidden(ValueError):
    """Requested latitude violates sin(theta) >= |X| / sqrt(A)."""


class RadiusForbidden(ValueError):
    """Requested radius has (U^r)^2 < 0 for these constants."""


class NoTurningPoint(ValueError):
    """The constants admit no real positive turning radius."""


class TimeReversed(ValueError):
    """P < 0: the geodesic runs from future to past."""


class DegenerateSpin(ValueError):
    """X = 0 carries no spin sign."""


class UndefinedTilt(ValueError):
    """A = 0 leaves the tilt undefined."""


@dataclass(frozen=True)
class GeodesicConstants:
    P: float
    X: float
    A: float
    W: float

    def __post_init__(self):
        if self.A < 0:
            raise ValueError("A must be nonnegative")
        if self.X * self.X > self.A * (1.0 + 1e-12):
            raise ValueError("X^2 <= A is required for geodesics to exist")
        if self.W not in (-1.0, 0.0, 1.0):
            raise ValueError("W is restricted to -1, 0, 1")


@dataclass(frozen=True)
class GeodesicState:
    """Affine parameter, coordinates and 4-velocity of one sample."""

    s: float
    t: float
    r: float
    theta: float
    phi: float
    u_t: float
    u_r: float
    u_theta: float
    u_phi: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be positive")
        if not 0.0 < self.theta < math.pi:
            raise ValueError("theta must lie strictly inside (0, pi)")

    def as_tuple(self):
        return (
            self.t,
            self.r,
            self.theta,
            self.phi,
            self.u_t,
            self.u_r,
            self.u_theta,
            self.u_phi,
        )


def metric_norm(state: GeodesicState) -> float:
    """g_ij U^i U^j for the state (equals W along a geodesic)."""
    st = math.sin(state.theta)
    ct = math.cos(state.theta)
    r = state.r
    return (
        (ct * state.u_t) ** 2
        - state.u_r**2
        - (r * state.u_theta) ** 2
        - (r * st * state.u_phi) ** 2
        + 2.0 * r * st * st * state.u_t * state.u_phi
    )


def constants_from_state(state: GeodesicState) -> tuple[float, float, float, float]:
    """Evaluate the four first integrals ``(P, X, A, W)`` at a state."""
    st = math.sin(state.theta)
    ct = math.cos(state.theta)
    r = state.r
    rel = state.u_t - r * state.u_phi
    p = ct * ct * state.u_t + r * st * st * state.u_phi
    x = r * st * st * rel
    a = (r * r * state.u_theta) ** 2 + (r * st * rel) ** 2
    w = metric_norm(state)
    return p, x, a, w


def state_from_constants(
    c: GeodesicConstants,
    r0: float,
    theta0: float,
    sign_ur: int = 1,
    sign_utheta: int = 1,
) -> GeodesicState:
    """Construct a state at ``(r0, theta0)`` (with ``t = phi = 0``).

    Velocities follow the first-integral solution; tiny negative
    squared velocities from rounding are clamped to zero so exact
    turning points are constructible.  Raises :class:`LatitudeForbidden`
    or :class:`RadiusForbidden` where the motion cannot reach.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if not 0.0 < theta0 < math.pi:
        raise ValueError("theta0 must lie strictly inside (0, pi)")
    st = math.sin(theta0)
    ct = math.cos(theta0)
    u_t = c.P + c.X / r0
    u_phi = (c.P - c.X * (ct * ct / (st * st)) / r0) / r0
    ut2 = (c.A - c.X * c.X / (st * st)) / r0**4
    lat_scale = (abs(c.A) + c.X * c.X / (st * st)) / r0**4
    if ut2 < -1e-12 * max(1.0, lat_scale):
        raise LatitudeForbidden(
            f"sin(theta0) = {st:.6g} below |X|/sqrt(A); latitude unreachable"
        )
    ur2 = -(c.A - c.X * c.X) / r0**2 + 2.0 * c.P * c.X / r0 + c.P * c.P - c.W
    rad_scale = (
        abs(c.A - c.X * c.X) / r0**2
        + 2.0 * abs(c.P * c.X) / r0
        + c.P * c.P
        + abs(c.W)
    )
    if ur2 < -1e-12 * max(1.0, rad_scale):
        raise RadiusForbidden(f"(U^r)^2 = {ur2:.6g} < 0 at r0 = {r0:.6g}")
    u_theta = (1 if sign_utheta >= 0 else -1) * math.sqrt(max(ut2, 0.0))
    u_r = (1 if sign_ur >= 0 else -1) * math.sqrt(max(ur2, 0.0))
    return GeodesicState(
        s=0.0, t=0.0, r=r0, theta=theta0, phi=0.0,
        u_t=u_t, u_r=u_r, u_theta=u_theta, u_phi=u_phi,
    )


def eom_rhs(state: GeodesicState) -> tuple[float, ...]:
    """Right-hand side of the geodesic equations, d(state)/ds.

    Returns the eight derivatives ``(t', r', theta', phi', U^t', U^r',
    U^theta', U^phi')``.  The recurring bracket is
    ``B = sin(theta) (U^t - r U^phi)``.
    """
    _, r, theta, _, u_t, u_r, u_th, u_ph = state.as_tuple()
    st = math.sin(theta)
    ct = math.cos(theta)
    b = st * (u_t - r * u_ph)
    f4 = -u_r * st * b / r
    f5 = ((r * u_th) * (r * u_th) - (r * u_ph * st) * b) / r
    f6 = (-2.0 * u_r * (r * u_th) + (ct / st) * b * b) / (r * r)
    f7 = (
        -u_r * (r * u_ph * st) + u_r * ct * ct * b + 2.0 * (ct / st) * (r * u_th) * b
    ) / (r * r * st)
    return (u_t, u_r, u_th, u_ph, f4, f5, f6, f7)


@dataclass(frozen=True)
class OrbitClass:
    """Orbit kind plus turning radii.

    ``kind`` is one of ``bound``, ``circular``, ``unbound``,
    ``barely-unbound``.  Circular orbits have ``r_min == r_max``;
    unbound orbits have no ``r_max``.
    """

    kind: str
    r_min: float
    r_max: float | None = None


def classify_orbit(c: GeodesicConstants) -> OrbitClass:
    """Classify by the positive roots of the radial quadratic.

    With ``x = 1/r`` the turning condition reads
    ``-(A - X^2) x^2 + 2 P X x + P^2 - W = 0``.  Two positive roots
    give a bound orbit, a positive double root a circular one, one
    positive root an unbound one (barely unbound when the second root
    is zero).  Raises :class:`NoTurningPoint` when no real positive
    turning radius exists.
    """
    a2 = c.A - c.X * c.X
    scale = abs(c.A * c.P * c.P) + abs(c.A * c.W) + abs(c.X * c.X * c.W) + 1e-300
    if abs(a2) <= 1e-14 * max(c.A, 1.0):
        # equatorial degenerate case: linear in 1/r
        if c.P * c.X == 0.0:
            raise NoTurningPoint("degenerate constants admit no turning radius")
        x = (c.W - c.P * c.P) / (2.0 * c.P * c.X)
        if x > 0.0:
            if c.P * c.P > c.W:
                return OrbitClass("unbound", r_min=1.0 / x)
            return OrbitClass("bound", r_min=0.0, r_max=1.0 / x)
        if x == 0.0:
            return OrbitClass("barely-unbound", r_min=0.0)
        raise NoTurningPoint("turning radius is negative for these constants")

    disc = c.A * c.P * c.P - c.A * c.W + c.X * c.X * c.W
    if abs(disc) <= 1e-12 * scale:
        # double root up to rounding: circular within classification tol
        disc = 0.0
    if disc < 0.0:
        raise NoTurningPoint(
            f"P^2 = {c.P**2:.6g} < W (1 - X^2/A) = {c.W * (1 - c.X**2 / c.A):.6g}"
        )
    root = math.sqrt(disc)
    x1 = (c.P * c.X + root) / a2
    x2 = (c.P * c.X - root) / a2
    xs = sorted((x1, x2), reverse=True)  # larger x = smaller r first
    x_hi, x_lo = xs
    tol0 = 1e-14 * max(abs(x_hi), abs(x_lo), 1.0)
    if x_hi <= tol0:
        raise NoTurningPoint("no positive turning radius for these constants")
    if abs(x_hi - x_lo) <= 1e-12 * max(abs(x_hi), 1.0):
        r = 1.0 / x_hi
        return OrbitClass("circular", r_min=r, r_max=r)
    if x_lo > tol0:
        return OrbitClass("bound", r_min=1.0 / x_hi, r_max=1.0 / x_lo)
    if abs(x_lo) <= tol0:
        return OrbitClass("barely-unbound", r_min=1.0 / x_hi)
    return OrbitClass("unbound", r_min=1.0 / x_hi)


def tilt(c: GeodesicConstants) -> float:
    """Tilt S = X / sqrt(A) in [-1, 1]; |S| = 1 marks equatorial orbits."""
    if c.A <= 0.0:
        raise UndefinedTilt("A = 0 leaves the tilt undefined")
    s = c.X / math.sqrt(c.A)
    return min(1.0, max(-1.0, s))


def energy_residual(state: GeodesicState) -> float:
    """Deviation from the energy decomposition, an exact identity.

    ``(P^2 - W)/2`` must equal kinetic (radial plus tangential) energy
    minus the long-range ``X P / r`` and short-range ``X^2 / (2 r^2)``
    potential terms, with all constants recomputed from the state.
    """
    p, x, _, w = constants_from_state(state)
    st = math.sin(state.theta)
    r = state.r
    u_perp2 = (r * state.u_theta) ** 2 + st * st * (state.u_t - r * state.u_phi) ** 2
    lhs = 0.5 * (p * p - w)
    rhs = 0.5 * (state.u_r**2 + u_perp2) - x * p / r - x * x / (2.0 * r * r)
    return abs(lhs - rhs)


def spin_outcome(c: GeodesicConstants) -> str:
    """Map the sign of X to a measurement outcome, for future-directed P.

    Convention: ``P > 0`` and ``X > 0`` is "up"; ``P > 0`` and ``X < 0``
    is "down".  ``P < 0`` raises :class:`TimeReversed`; ``X = 0`` raises
    :class:`DegenerateSpin`.
    """
    if c.P < 0:
        raise TimeReversed("P < 0 reverses the direction of time")
    if c.P == 0:
        raise TimeReversed("P = 0 carries no time direction")
    if c.X == 0:
        raise DegenerateSpin("X = 0 carries no spin sign")
    return "up" if c.X > 0 else "down"
