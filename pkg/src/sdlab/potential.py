"""Capacities, hitting probabilities, resolvents and the extension identities.

Everything here is a sparse SPD solve on ``A = S + alpha*M``.  Quantities
of the killed process (``G0``, ``u_alpha``, ``phi``) are obtained by
pinning the origin values, which is the same as solving on the killed
network because the killed diagonal keeps the conductance into the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError
from .forms import FormMatrices, e1, inner
from .linalg import SPDSolver
from .mesh import Mode

_MARKOV_SLACK = 1e-10


@dataclass(frozen=True)
class CapacityResult:
    value: float
    minimizer: np.ndarray


@dataclass(frozen=True)
class ConeCapacityReport:
    cap_plus: float
    cap_minus: float
    bound: float
    n_plus: int
    n_minus: int


@dataclass(frozen=True)
class GammaCoefficients:
    gamma_pm: float
    gamma_pp_alpha: float
    gamma_pm_alpha: float


@dataclass(frozen=True)
class OnePointReport:
    residual_linf: float
    g_at_origin: float
    formula_value: float


@dataclass(frozen=True)
class TwoPointReport:
    phi0_plus_formula: float
    phi0_minus_formula: float
    phi0_plus_direct: float
    phi0_minus_direct: float
    residual_linf: float

    @property
    def relative_gap(self) -> float:
        return max(abs(self.phi0_plus_formula - self.phi0_plus_direct) / abs(self.phi0_plus_direct),
                   abs(self.phi0_minus_formula - self.phi0_minus_direct) / abs(self.phi0_minus_direct))


@dataclass(frozen=True)
class HarmonicMeasure:
    sector_mass: np.ndarray  # per innermost sector, mass leaving through its origin edge
    origin_mass: tuple  # per origin point

    @property
    def total(self) -> float:
        return float(math.fsum(self.sector_mass))


def _pinned_solve(A, pinned, values, rhs=None, tol=None, max_iter=None):
    """Solve ``A x = rhs`` on free nodes with ``x[pinned] = values``."""
    n = A.shape[0]
    pinned = np.asarray(pinned, dtype=int)
    values = np.asarray(values, dtype=float)
    free = np.setdiff1d(np.arange(n), pinned)
    x = np.zeros(n)
    x[pinned] = values
    A = A.tocsr()
    b = -(A[free][:, pinned] @ values) if len(pinned) else np.zeros(len(free))
    if rhs is not None:
        b = b + np.asarray(rhs, dtype=float)[free]
    x[free] = SPDSolver(A[free][:, free], tol, max_iter).solve(b)
    return x


def capacity(F: FormMatrices, target, alpha: float = 1.0) -> CapacityResult:
    """Equilibrium potential of ``target``: min E_alpha(u, u) with u = 1 on target.

    Solves for ``w = 1 - u`` on the free nodes, whose right-hand side is
    ``(A 1)_F = alpha m_F + absorption_F >= 0``; the value
    ``sum_T (A u)_T`` then becomes a sum of non-negative terms, which keeps
    capacities of symmetric targets equal to roundoff.
    """
    target = np.unique(np.asarray(target, dtype=int))
    if target.size == 0:
        raise DomainError("capacity target is empty")
    if target.min() < 0 or target.max() >= F.n_nodes:
        raise DomainError("capacity target outside the node set")
    n = F.n_nodes
    free = np.setdiff1d(np.arange(n), target)
    ones_image = alpha * np.asarray(F.mass) + _extend(F.absorbed, n)
    A = F.operator(alpha)
    w = np.zeros(n)
    if free.size:
        w[free] = SPDSolver(A[free][:, free]).solve(ones_image[free])
    u = 1.0 - w
    if u.min() < -_MARKOV_SLACK or u.max() > 1 + _MARKOV_SLACK:
        raise NumericalError(f"equilibrium potential left [0, 1]: [{u.min()}, {u.max()}]")
    coupling = -A[target][:, free]
    value = math.fsum(ones_image[target]) + math.fsum(coupling @ w[free])
    return CapacityResult(float(value), u)


def cone_nodes(F: FormMatrices, eps: float, delta: float, sign: int = 1) -> np.ndarray:
    """Mesh nodes inside the even-cone wedge of radius ``eps`` trimmed by ``delta``.

    ``sign=+1`` is the wedge in Q2, ``sign=-1`` its rotation by pi in Q4.
    """
    mesh = F.mesh
    if eps < 2 * mesh.r_min or delta < 2 * mesh.dtheta:
        raise ConfigurationError(f"cone (eps={eps}, delta={delta}) not resolved by the mesh")
    lo, hi = (math.pi / 2 + delta, math.pi - delta) if sign > 0 else (3 * math.pi / 2 + delta, 2 * math.pi - delta)
    th = mesh.thetas
    sectors = np.flatnonzero((th > lo) & (th < hi))
    rings = np.flatnonzero(mesh.rings < eps)
    if sectors.size == 0 or rings.size == 0:
        raise ConfigurationError(f"cone (eps={eps}, delta={delta}) contains no nodes")
    return (rings[:, None] * mesh.n_sectors + sectors[None, :]).ravel()


def cone_capacity_report(F: FormMatrices, eps: float, delta: float, alpha: float = 1.0) -> ConeCapacityReport:
    from .weights import weight_radial_integral
    plus, minus = cone_nodes(F, eps, delta, 1), cone_nodes(F, eps, delta, -1)
    # int_0^{2 eps} a/r dr equals the resistance-type integral on an odd cone
    bound = weight_radial_integral(F.weight, 1, -1, -1, 0.0, 2 * eps) / delta
    return ConeCapacityReport(capacity(F, plus, alpha).value, capacity(F, minus, alpha).value,
                              bound, plus.size, minus.size)


def _require_split_pair(F: FormMatrices):
    if F.mode is not Mode.SPLIT or len(F.origin_nodes) != 2:
        raise ConfigurationError("needs a split topology with two origin points")
    return F.origin_nodes


def hitting_probs_split(F: FormMatrices):
    """Probabilities of reaching 0+ before 0- and vice versa."""
    o = _require_split_pair(F)
    S = F.operator(0.0)
    phi_plus = _pinned_solve(S, o, [1.0, 0.0])
    phi_minus = _pinned_solve(S, o, [0.0, 1.0])
    return phi_plus, phi_minus


def alpha_hitting(F: FormMatrices, alpha: float, boundary: dict) -> np.ndarray:
    """``E_x[exp(-alpha sigma); X_sigma = o]`` weighted by the boundary values."""
    if F.mode is Mode.KILLED:
        raise ConfigurationError("alpha_hitting needs a glued or split topology")
    o = F.origin_nodes
    if set(boundary) != set(o):
        raise ConfigurationError(f"boundary must assign every origin node {o}")
    return _pinned_solve(F.operator(alpha), list(o), [boundary[k] for k in o])


def resolvent(F: FormMatrices, alpha: float, f) -> np.ndarray:
    """Solve ``(S + alpha M) u = M f`` on the whole network."""
    if not alpha > 0:
        raise DomainError("resolvent needs alpha > 0")
    f = np.zeros(F.n_nodes) + _extend(f, F.n_nodes)
    return SPDSolver(F.operator(alpha)).solve(F.mass * f)


def killed_resolvent(F_killed: FormMatrices, alpha: float, f) -> np.ndarray:
    if F_killed.mode is not Mode.KILLED:
        raise ConfigurationError("killed_resolvent needs a killed topology")
    return resolvent(F_killed, alpha, np.asarray(f)[: F_killed.n_nodes])


def _extend(f, n):
    f = np.asarray(f, dtype=float)
    if f.size > n:
        raise DomainError(f"function has {f.size} values for {n} nodes")
    out = np.zeros(n)
    out[: f.size] = f
    return out


def gamma_coefficients(F_split: FormMatrices, alpha: float, swap: bool = False) -> GammaCoefficients:
    """Energy coefficients of the two-point extension.

    ``gamma_pm`` uses the closed form of the small-time limit on a graph:
    harmonicity of phi+ makes ``-L0 phi+`` equal to the conductance into
    0+ divided by the node mass, so the limit is ``sum_i c(i, 0+) phi-(i)``.
    """
    o = _require_split_pair(F_split)
    phi_p, phi_m = hitting_probs_split(F_split)
    plus = 0
    if swap:
        phi_p, phi_m, plus = phi_m, phi_p, 1
    c_plus = F_split.origin_column(plus)
    n = F_split.n_mesh
    u_plus = alpha_hitting(F_split, alpha, {o[plus]: 1.0, o[1 - plus]: 0.0})
    gamma_pm = float(math.fsum(c_plus * phi_m[:n]))
    return GammaCoefficients(gamma_pm,
                             alpha * inner(F_split, u_plus, phi_p),
                             alpha * inner(F_split, u_plus, phi_m))


def _check_killed_pair(F: FormMatrices, F_killed: FormMatrices):
    if F_killed.mode is not Mode.KILLED:
        raise ConfigurationError("second form must be the killed one")
    if F_killed.n_mesh != F.n_mesh or not np.allclose(F_killed.mass, F.mass[: F.n_mesh], rtol=1e-14, atol=0):
        raise ConfigurationError("killed and extended forms live on different meshes")
    total = sum(F.origin_column(i) for i in range(len(F.origin_nodes)))
    if not np.allclose(total, F_killed.absorbed, rtol=1e-13, atol=0):
        raise ConfigurationError("killed absorption does not match the conductances into the origin")


def verify_one_point(F_glued: FormMatrices, F_killed: FormMatrices, alpha: float, f) -> OnePointReport:
    """Compare the glued resolvent with the killed resolvent plus the one-point correction."""
    if F_glued.mode is not Mode.GLUED:
        raise ConfigurationError("verify_one_point needs a glued form")
    _check_killed_pair(F_glued, F_killed)
    n = F_glued.n_mesh
    f_mesh = _extend(f, F_glued.n_nodes)[:n]
    solver = SPDSolver(F_killed.operator(alpha))
    g0 = solver.solve(F_killed.mass * f_mesh)
    u_alpha = solver.solve(np.asarray(F_killed.absorbed))
    norm = alpha * inner(F_killed, u_alpha, np.ones(n))
    if norm <= 0:
        raise NumericalError("<u_alpha, 1> vanishes; the origin is not reachable on this mesh")
    k = inner(F_killed, u_alpha, f_mesh) / norm
    direct = resolvent(F_glued, alpha, f_mesh)
    o = F_glued.origin_nodes[0]
    res = max(np.max(np.abs(direct[:n] - (g0 + k * u_alpha))), abs(direct[o] - k))
    return OnePointReport(float(res), float(direct[o]), float(k))


def two_point_values(gam: GammaCoefficients, up_g: float, um_g: float):
    """Values of the resolvent at 0+ and 0- from the gamma coefficients.

    Assumes the inner symmetry of the model (0+ and 0- exchangeable).
    """
    gpp, gpma, gpm = gam.gamma_pp_alpha, gam.gamma_pm_alpha, gam.gamma_pm
    denom = (gpp + gpma) * (gpp - gpma + 2 * gpm)
    if abs(denom) < 1e-14:
        raise NumericalError(f"degenerate two-point denominator {denom}")
    u_g = up_g + um_g
    plus = (gpp * up_g - gpma * um_g + gpm * u_g) / denom
    minus = (gpp * um_g - gpma * up_g + gpm * u_g) / denom
    return plus, minus


def verify_two_point(F_split: FormMatrices, F_killed: FormMatrices, alpha: float, g) -> TwoPointReport:
    o = _require_split_pair(F_split)
    _check_killed_pair(F_split, F_killed)
    n = F_split.n_mesh
    g_mesh = _extend(g, F_split.n_nodes)[:n]
    gam = gamma_coefficients(F_split, alpha)
    u_plus = alpha_hitting(F_split, alpha, {o[0]: 1.0, o[1]: 0.0})[:n]
    u_minus = alpha_hitting(F_split, alpha, {o[0]: 0.0, o[1]: 1.0})[:n]
    plus_f, minus_f = two_point_values(gam, inner(F_killed, u_plus, g_mesh), inner(F_killed, u_minus, g_mesh))
    g0 = killed_resolvent(F_killed, alpha, g_mesh)
    direct = resolvent(F_split, alpha, g_mesh)
    rep = g0 + u_plus * plus_f + u_minus * minus_f
    res = float(np.max(np.abs(direct[:n] - rep)))
    return TwoPointReport(float(plus_f), float(minus_f), float(direct[o[0]]), float(direct[o[1]]), res)


def harmonic_measure_origin(F: FormMatrices, start) -> HarmonicMeasure:
    """Distribution of the edge through which the walk from ``start`` reaches the origin.

    ``start`` is a mesh node or a non-negative source vector over mesh
    nodes (normalised to total 1).
    """
    if F.mode is Mode.KILLED:
        raise ConfigurationError("harmonic measure needs a glued or split topology")
    n = F.n_mesh
    if np.ndim(start) == 0:
        s = int(start)
        if s in F.origin_nodes:
            raise DomainError("start is an origin node")
        if not 0 <= s < n:
            raise DomainError(f"start node {s} outside the mesh")
        src = np.zeros(n)
        src[s] = 1.0
    else:
        src = np.asarray(start, dtype=float)[:n]
        if src.min() < 0 or src.sum() <= 0:
            raise DomainError("source must be non-negative with positive total")
        src = src / src.sum()
    green = SPDSolver(F.S[:n, :n]).solve(src)
    M = F.mesh.n_sectors
    per_origin = [F.origin_column(i)[:M] * green[:M] for i in range(len(F.origin_nodes))]
    sector = np.sum(per_origin, axis=0)
    total = sector.sum()
    if not total > 0:
        raise NumericalError("no mass reaches the origin")
    return HarmonicMeasure(sector / total, tuple(float(p.sum() / total) for p in per_origin))
