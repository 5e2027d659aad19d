"""Graded polar meshes of a disk and the three ways of treating the origin.

Nodes sit at ``(rings[k], thetas[j])``; node ``(k, j)`` owns the annular
cell between the dual radii ``bounds[k]`` and ``bounds[k+1]`` (geometric
means inside the cutoff, arithmetic means outside).  The innermost and
outermost nodes sit on the cell boundary, so the cells tile the annulus
``r_min <= r <= R`` exactly.  Origin nodes, when present, are numbered
after the ``K*M`` mesh nodes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .weights import Family, WeightSpec

_REL = 1e-9


class Mode(str, enum.Enum):
    KILLED = "killed"
    GLUED = "glued"
    SPLIT = "split"


@dataclass(frozen=True, eq=False)
class PolarMesh:
    rings: np.ndarray
    n_sectors: int
    cutoff: float = 1.0
    bounds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rings = np.asarray(self.rings, dtype=float)
        rings.setflags(write=False)
        object.__setattr__(self, "rings", rings)
        b = np.empty(len(rings) + 1)
        b[0], b[-1] = rings[0], rings[-1]
        lo, hi = rings[:-1], rings[1:]
        inside = hi <= self.cutoff * (1 + _REL)
        b[1:-1] = np.where(inside, np.sqrt(lo * hi), 0.5 * (lo + hi))
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)

    @property
    def n_rings(self) -> int:
        return len(self.rings)

    @property
    def n_nodes(self) -> int:
        return self.n_rings * self.n_sectors

    @property
    def r_min(self) -> float:
        return float(self.rings[0])

    @property
    def radius(self) -> float:
        return float(self.rings[-1])

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.n_sectors

    @property
    def thetas(self) -> np.ndarray:
        """Sector centre angles in ``[0, 2pi)``."""
        return (np.arange(self.n_sectors) + 0.5) * self.dtheta

    def node(self, k: int, j: int) -> int:
        return k * self.n_sectors + (j % self.n_sectors)

    def ring_of(self, node):
        return np.asarray(node) // self.n_sectors

    def sector_of(self, node):
        return np.asarray(node) % self.n_sectors

    def node_radius(self) -> np.ndarray:
        return np.repeat(self.rings, self.n_sectors)

    def node_theta(self, signed: bool = False) -> np.ndarray:
        th = np.tile(self.thetas, self.n_rings)
        if signed:
            th = np.where(th >= math.pi, th - 2 * math.pi, th)
        return th

    def coordinates(self) -> np.ndarray:
        r, th = self.node_radius(), self.node_theta()
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    def cell_areas(self) -> np.ndarray:
        ring_area = 0.5 * self.dtheta * (self.bounds[1:] ** 2 - self.bounds[:-1] ** 2)
        return np.repeat(ring_area, self.n_sectors)

    def quadrant_sectors(self, q: int) -> np.ndarray:
        """Sector indices whose centre lies in quadrant ``q`` (1..4)."""
        return np.flatnonzero((self.thetas // (math.pi / 2)).astype(int) + 1 == q)

    def antipodal(self, node):
        """Index of the node obtained by rotating by pi (M even)."""
        node = np.asarray(node)
        k, j = node // self.n_sectors, node % self.n_sectors
        return k * self.n_sectors + (j + self.n_sectors // 2) % self.n_sectors


def _auto_split(K: int, r_min: float, R: float, c: float) -> int:
    """Number of outer rings balancing outer spacing against the last geometric step."""
    best, best_err = 1, math.inf
    for n_out in range(1, K - 3):
        n_g = K - n_out
        q = (c / r_min) ** (1.0 / (n_g - 1))
        h_geo = c * (1 - 1 / q)
        err = abs(math.log(((R - c) / n_out) / h_geo))
        if err < best_err:
            best, best_err = n_out, err
    return best


def build_mesh(K: int, M: int, r_min: float, R: float, q: float | None = None,
               weight: WeightSpec | None = None, cutoff: float | None = None) -> PolarMesh:
    """Geometric rings from ``r_min`` up to the cutoff, uniform rings beyond.

    With ``q`` given the geometric ladder must land on the cutoff exactly
    (to 1e-9 relative); without it the ratio is chosen so that ``K`` rings
    fit and the outer spacing roughly matches the last geometric step.
    """
    if cutoff is None:
        cutoff = weight.cutoff_radius if weight is not None else 1.0
    if K < 4:
        raise ConfigurationError(f"need K >= 4 rings, got {K}")
    if M < 8:
        raise ConfigurationError(f"need M >= 8 sectors, got {M}")
    if weight is not None and M % weight.n_cones:
        raise ConfigurationError(f"M={M} is not a multiple of the cone count {weight.n_cones}")
    if M % 4:
        raise ConfigurationError(f"M={M} must be a multiple of 4 (quadrant traces)")
    if not 0 < r_min < cutoff:
        raise ConfigurationError(f"need 0 < r_min < cutoff, got r_min={r_min}, cutoff={cutoff}")
    if R < cutoff * (1 - _REL):
        raise ConfigurationError(f"need R >= cutoff, got R={R}, cutoff={cutoff}")
    has_outer = R > cutoff * (1 + _REL)
    if q is not None:
        if q <= 1:
            raise ConfigurationError("grading ratio q must exceed 1")
        steps = math.log(cutoff / r_min) / math.log(q)
        n_g = int(round(steps)) + 1
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigurationError(f"r_min * q**n never reaches the cutoff (log ratio {steps})")
        n_out = K - n_g
        if n_out < 0 or (has_outer and n_out == 0) or (not has_outer and n_out > 0):
            raise ConfigurationError(f"K={K} incompatible with {n_g} geometric rings up to the cutoff")
    else:
        n_out = _auto_split(K, r_min, R, cutoff) if has_outer else 0
        n_g = K - n_out
    geo = r_min * (cutoff / r_min) ** (np.arange(n_g) / (n_g - 1))
    geo[-1] = cutoff
    outer = cutoff + (R - cutoff) * np.arange(1, n_out + 1) / max(n_out, 1)
    rings = np.concatenate([geo, outer])
    return PolarMesh(rings, M, cutoff)


def ladder_mesh(r_min: float, M: int, rings_per_decade: int = 8, outer_rings: int = 8,
                R: float = 2.0, cutoff: float = 1.0) -> PolarMesh:
    """Mesh for refinement studies: fixed rings per decade of ``cutoff/r_min``."""
    n_g = max(4, int(math.ceil(rings_per_decade * math.log10(cutoff / r_min) - 1e-9)) + 1)
    K = n_g + (outer_rings if R > cutoff else 0)
    q = (cutoff / r_min) ** (1.0 / (n_g - 1))
    return build_mesh(K, M, r_min, R, q=q, cutoff=cutoff)


@dataclass(frozen=True, eq=False)
class Topology:
    """How the origin enters the node set.

    ``arc_assignment[j]`` is the position in ``origin_nodes`` that
    innermost sector ``j`` attaches to, or -1.  Killed topologies keep the
    assignment of the removed point (sector 0..M-1 -> 0) so absorption can
    be read off; they have no origin nodes.
    """

    mode: Mode
    origin_nodes: tuple
    arc_assignment: np.ndarray
    n_mesh_nodes: int

    @property
    def n_nodes(self) -> int:
        return self.n_mesh_nodes + len(self.origin_nodes)

    @property
    def mesh_nodes(self) -> np.ndarray:
        return np.arange(self.n_mesh_nodes)


def build_topology(mesh: PolarMesh, weight: WeightSpec, mode: Mode | str) -> Topology:
    mode = Mode(mode)
    if mesh.n_sectors % weight.n_cones:
        raise ConfigurationError(f"M={mesh.n_sectors} not compatible with {weight.n_cones} cones")
    if abs(mesh.cutoff - weight.cutoff_radius) > _REL * weight.cutoff_radius:
        raise ConfigurationError("mesh cutoff differs from the weight's cutoff radius")
    M, n = mesh.n_sectors, mesh.n_nodes
    if mode is Mode.SPLIT:
        if weight.family is Family.UNIT_CONTROL:
            raise ConfigurationError("split topology needs a cone weight; the control weight is regular")
        cones = np.array([weight.cone_of_angle(t) for t in mesh.thetas])
        # odd cone 2i-1 attaches to origin point i-1; for N=2 these are 0+ (Q1) and 0- (Q3)
        assign = np.where(cones % 2 == 1, (cones - 1) // 2, -1)
        origin = tuple(n + i for i in range(weight.cones))
    elif mode is Mode.GLUED:
        assign = np.zeros(M, dtype=int)
        origin = (n,)
    else:
        assign = np.zeros(M, dtype=int)
        origin = ()
    assign = assign.astype(int)
    assign.setflags(write=False)
    return Topology(mode, origin, assign, n)
