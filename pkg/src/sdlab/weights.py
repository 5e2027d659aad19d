"""Singular planar weights, their drifts and exact radial integrals.

The weight is built from a radial profile ``a`` and a cone pattern: the
plane is split into ``2N`` cones of opening ``pi/N``; inside the cutoff
disk odd cones carry ``1/a(|x|)`` and even cones carry ``a(|x|)``, and
the weight is 1 outside.  ``N = 2`` is the four-quadrant weight.

Every discrete quantity downstream (conductances, masses) is an integral
of ``rho^s * r^p`` along a ray, so this module evaluates those integrals
in closed form where one exists.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, DomainError, NumericalError, UnsupportedPointError

_LOG2 = math.log(2.0)


class ProfileKind(str, enum.Enum):
    POWER = "power"
    LOG = "log"
    UNIT = "unit"


class Family(str, enum.Enum):
    TWO_QUADRANT = "two_quadrant"
    MULTI_CONE = "multi_cone"
    UNIT_CONTROL = "unit_control"


@dataclass(frozen=True)
class RadialProfile:
    """Radial profile ``a(r)``.

    ``POWER``: ``r**alpha`` with ``0 < alpha < 2``.
    ``LOG``: ``log(2/r)**(-alpha)`` with ``alpha > 1``.
    ``UNIT``: ``1`` (alpha ignored).
    """

    kind: ProfileKind
    alpha: float = 1.0

    def __post_init__(self):
        kind = ProfileKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ProfileKind.POWER and not 0.0 < self.alpha < 2.0:
            raise ConfigurationError(f"power profile needs 0 < alpha < 2, got {self.alpha}")
        if kind is ProfileKind.LOG and not self.alpha > 1.0:
            raise ConfigurationError(f"log profile needs alpha > 1, got {self.alpha}")

    @classmethod
    def power(cls, alpha: float) -> "RadialProfile":
        return cls(ProfileKind.POWER, alpha)

    @classmethod
    def log(cls, alpha: float) -> "RadialProfile":
        return cls(ProfileKind.LOG, alpha)

    @classmethod
    def unit(cls) -> "RadialProfile":
        return cls(ProfileKind.UNIT, 1.0)


@dataclass(frozen=True)
class WeightSpec:
    family: Family
    profile: RadialProfile = field(default_factory=RadialProfile.unit)
    cones: int = 2
    cutoff_radius: float = 1.0

    def __post_init__(self):
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if family is Family.TWO_QUADRANT:
            object.__setattr__(self, "cones", 2)
        if self.cones < 2:
            raise ConfigurationError(f"need at least 2 cone pairs, got {self.cones}")
        if not self.cutoff_radius > 0:
            raise ConfigurationError("cutoff_radius must be positive")
        if self.profile.kind is not ProfileKind.UNIT and self.cutoff_radius > 1.0:
            raise ConfigurationError("singular profiles are defined on ]0, 1]; cutoff_radius must be <= 1")

    @classmethod
    def two_quadrant(cls, profile: RadialProfile, cutoff_radius: float = 1.0) -> "WeightSpec":
        return cls(Family.TWO_QUADRANT, profile, 2, cutoff_radius)

    @classmethod
    def multi_cone(cls, n: int, profile: RadialProfile, cutoff_radius: float = 1.0) -> "WeightSpec":
        return cls(Family.MULTI_CONE, profile, n, cutoff_radius)

    @classmethod
    def unit_control(cls, cutoff_radius: float = 1.0) -> "WeightSpec":
        return cls(Family.UNIT_CONTROL, RadialProfile.unit(), 2, cutoff_radius)

    @property
    def n_cones(self) -> int:
        """Total number of cones (``2N``)."""
        return 2 * self.cones

    @property
    def cone_angle(self) -> float:
        return math.pi / self.cones

    @property
    def is_regular(self) -> bool:
        """True when rho is bounded above and below near the origin."""
        return self.family is Family.UNIT_CONTROL or self.profile.kind is ProfileKind.UNIT

    def cone_of_angle(self, theta: float) -> int:
        """1-based cone index of an angle (any real; reduced mod 2pi)."""
        t = math.fmod(theta, 2 * math.pi)
        if t < 0:
            t += 2 * math.pi
        return min(int(t // self.cone_angle), self.n_cones - 1) + 1

    def rho_sign(self, cone: int) -> int:
        """Exponent ``s`` with ``rho = a**s`` inside the cutoff on this cone."""
        if self.family is Family.UNIT_CONTROL:
            return 0
        return -1 if cone % 2 == 1 else 1


@dataclass(frozen=True)
class AssumptionReport:
    integral_a_over_r: float
    integral_r_over_a: float
    onerank_sup: float
    passed: bool
    onerank_values: tuple = ()
    bound: float = 10.0


def profile_value(p: RadialProfile, r: float) -> float:
    if not r > 0:
        raise DomainError(f"profile evaluated at r={r}; need r > 0")
    if p.kind is ProfileKind.UNIT:
        return 1.0
    if r > 1.0:
        raise DomainError(f"profile {p.kind.value} defined on ]0, 1], got r={r}")
    if p.kind is ProfileKind.POWER:
        return r ** p.alpha
    return math.log(2.0 / r) ** (-p.alpha)


def weight_value(w: WeightSpec, x: Sequence[float]) -> float:
    x1, x2 = float(x[0]), float(x[1])
    r = math.hypot(x1, x2)
    if r == 0.0:
        raise DomainError("weight is not defined at the origin")
    if w.family is Family.UNIT_CONTROL or r > w.cutoff_radius:
        return 1.0
    s = w.rho_sign(w.cone_of_angle(math.atan2(x2, x1)))
    return profile_value(w.profile, r) ** s


def drift_value(w: WeightSpec, x: Sequence[float]) -> np.ndarray:
    """Drift ``grad(rho)/rho`` of the diffusion associated with the weight."""
    x1, x2 = float(x[0]), float(x[1])
    r2 = x1 * x1 + x2 * x2
    if r2 == 0.0:
        raise UnsupportedPointError("drift is singular at the origin")
    r = math.sqrt(r2)
    if w.family is Family.UNIT_CONTROL or r > w.cutoff_radius:
        return np.zeros(2)
    if r == w.cutoff_radius:
        raise UnsupportedPointError("drift is discontinuous on the cutoff circle")
    if w.profile.kind is ProfileKind.UNIT:
        return np.zeros(2)
    if w.profile.kind is not ProfileKind.POWER:
        raise UnsupportedPointError("closed-form drift only for power profiles")
    theta = math.atan2(x2, x1)
    k = theta / w.cone_angle
    if abs(k - round(k)) < 1e-12:
        raise UnsupportedPointError(f"x={x} lies on a cone boundary")
    s = w.rho_sign(w.cone_of_angle(theta))
    return s * w.profile.alpha * np.array([x1, x2]) / r2


# ---------------------------------------------------------------------------
# radial integrals


def _power_integral(e: float, lo: float, hi: float) -> float:
    """int_lo^hi r**e dr for 0 <= lo < hi (may be +inf)."""
    k = e + 1.0
    if lo == 0.0:
        return hi ** k / k if k > 0 else math.inf
    if k == 0.0:
        return math.log(hi / lo)
    # expm1 keeps short intervals accurate
    return lo ** k * math.expm1(k * math.log(hi / lo)) / k


def _log_profile_integral(alpha: float, s: int, p: int, lo: float, hi: float) -> float:
    """int_lo^hi a(r)**s r**p dr for a(r) = log(2/r)**(-alpha), 0 <= lo < hi <= 1."""
    t_hi = math.log(2.0 / hi)
    t_lo = math.inf if lo == 0.0 else math.log(2.0 / lo)
    if p == -1:
        # dr/r = -dt; integrand t**(-s*alpha)
        k = 1.0 - s * alpha
        if math.isinf(t_lo):
            return -(t_hi ** k) / k if k < 0 else math.inf
        return t_lo ** k * math.expm1(k * math.log(t_hi / t_lo)) / -k if k != 0 else math.log(t_lo / t_hi)
    if p == 1:
        # r dr = -4 exp(-2t) dt
        if s == -1:
            g = special.gamma(alpha + 1.0)
            upper = special.gammaincc(alpha + 1.0, 2.0 * t_hi)
            lower = 0.0 if math.isinf(t_lo) else special.gammaincc(alpha + 1.0, 2.0 * t_lo)
            return float(4.0 * 2.0 ** (-(alpha + 1.0)) * g * (upper - lower))
        val, _ = integrate.quad(lambda t: t ** (-alpha) * 4.0 * math.exp(-2.0 * t),
                                t_hi, t_lo, epsabs=1e-10, epsrel=1e-12, limit=200)
        return val
    raise ValueError(f"unsupported radial power {p}")


def profile_integral(profile: RadialProfile, s: int, p: int, lo: float, hi: float) -> float:
    """int_lo^hi a(r)**s * r**p dr inside the profile's domain."""
    if s == 0 or profile.kind is ProfileKind.UNIT:
        return _power_integral(float(p), lo, hi)
    if profile.kind is ProfileKind.POWER:
        return _power_integral(s * profile.alpha + p, lo, hi)
    return _log_profile_integral(profile.alpha, s, p, lo, hi)


def weight_radial_integral(w: WeightSpec, cone: int, rho_power: int, p: int,
                           lo: float, hi: float) -> float:
    """int_lo^hi rho(r, cone)**rho_power * r**p dr, split at the cutoff."""
    if not 0.0 <= lo < hi:
        raise DomainError(f"need 0 <= r_lo < r_hi, got [{lo}, {hi}]")
    c = w.cutoff_radius
    total = 0.0
    if lo < c:
        total += profile_integral(w.profile, rho_power * w.rho_sign(cone), p, lo, min(hi, c))
    if hi > c:
        total += _power_integral(float(p), max(lo, c), hi)
    return total


def radial_resistance(w: WeightSpec, cone_index: int, r_lo: float, r_hi: float,
                      dtheta: float) -> float:
    """Resistance of a radial strip of opening ``dtheta``; +inf means no conductance."""
    if not dtheta > 0:
        raise DomainError("dtheta must be positive")
    return weight_radial_integral(w, cone_index, -1, -1, r_lo, r_hi) / dtheta


# ---------------------------------------------------------------------------
# standing assumptions


def _closed_form_integrals(p: RadialProfile) -> tuple[float, float]:
    if p.kind is ProfileKind.UNIT:
        return math.inf, 0.5
    if p.kind is ProfileKind.POWER:
        return 1.0 / p.alpha, 1.0 / (2.0 - p.alpha)
    a = p.alpha
    return (_LOG2 ** (1.0 - a) / (a - 1.0),
            float(_log_profile_integral(a, -1, 1, 0.0, 1.0)))


def onerank_expression(p: RadialProfile, eps: float) -> float:
    """(1/eps^2) int_0^eps r/a(r) int_0^r a(s)/s ds dr, in closed form."""
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    if p.kind is ProfileKind.UNIT:
        return math.inf
    if p.kind is ProfileKind.POWER:
        return 0.5 / p.alpha
    # inner integral is t**(1-alpha)/(alpha-1) with t = log(2/r); times 1/a = t**alpha
    return (0.5 * math.log(2.0 / eps) + 0.25) / (p.alpha - 1.0)


def _log_a(p: RadialProfile, x: float) -> float:
    """log a(exp(-x)), safe for large x."""
    if p.kind is ProfileKind.UNIT:
        return 0.0
    if p.kind is ProfileKind.POWER:
        return -p.alpha * x
    return -p.alpha * math.log(_LOG2 + x)


def numeric_assumption_integrals(p: RadialProfile, limit: int = 200) -> tuple[float, float]:
    """Adaptive-quadrature values of int a/r and int r/a on (0, 1].

    Integrates in ``x = -log r`` so the singular end becomes a half line.
    Returns +inf when the integrand does not decay along the tail.
    """
    out = []
    for f in (lambda x: math.exp(_log_a(p, x)), lambda x: math.exp(-2 * x - _log_a(p, x))):
        if f(700.0) > 1e-12 and f(700.0) >= 0.5 * f(350.0):
            out.append(math.inf)
            continue
        val, _ = integrate.quad(f, 0.0, math.inf, limit=limit, epsabs=1e-13, epsrel=1e-12)
        out.append(val)
    return out[0], out[1]


def numeric_onerank(p: RadialProfile, eps: float, limit: int = 200) -> float:
    """Nested adaptive quadrature of the one-rank expression (oracle)."""
    def inner(x0):
        val, _ = integrate.quad(lambda x: math.exp(_log_a(p, x)), x0, math.inf,
                                limit=limit, epsabs=1e-14, epsrel=1e-12)
        return val

    x_eps = -math.log(eps)
    outer, _ = integrate.quad(lambda x: math.exp(-2 * (x - x_eps) - _log_a(p, x)) * inner(x),
                              x_eps, math.inf, limit=limit, epsabs=1e-14, epsrel=1e-10)
    return outer


DEFAULT_EPSILONS = tuple(10.0 ** -k for k in range(1, 7))


def check_assumptions(p: RadialProfile, quadrature_points: int = 64,
                      epsilons: Sequence[float] = DEFAULT_EPSILONS,
                      bound: float = 10.0, verify: bool = False) -> AssumptionReport:
    """Evaluate the integrability and one-rank conditions for a profile.

    Closed forms are used for every supported profile.  With ``verify``
    they are cross-checked against adaptive quadrature limited to
    ``quadrature_points`` subintervals.
    """
    if quadrature_points < 16:
        raise ConfigurationError("quadrature_points must be >= 16")
    i_ar, i_ra = _closed_form_integrals(p)
    values = tuple(onerank_expression(p, e) for e in epsilons)
    sup = max(values) if values else math.nan
    if verify and p.kind is not ProfileKind.UNIT:
        n_ar, n_ra = numeric_assumption_integrals(p, quadrature_points)
        checks = [(i_ar, n_ar), (i_ra, n_ra)]
        checks += [(v, numeric_onerank(p, e, quadrature_points)) for v, e in zip(values, epsilons)]
        for exact, approx in checks:
            if abs(exact - approx) > 1e-6 * max(1.0, abs(exact)):
                raise NumericalError(f"closed form {exact} disagrees with quadrature {approx}")
    finite = all(math.isfinite(v) for v in (i_ar, i_ra, sup))
    return AssumptionReport(i_ar, i_ra, sup, bool(finite and sup < bound), values, bound)
