"""Discrete Dirichlet form on a polar mesh, traces at the origin and the jump function.

Conductances are reciprocals of exact resistance integrals, so an edge
whose resistance diverges (even cones touching the origin) is simply
absent.  ``S`` is the weighted graph Laplacian, ``mass`` the diagonal of
the measure ``rho dx``; origin nodes carry zero mass.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import AssemblyError, ConfigurationError, NumericalError
from .linalg import SPDSolver
from .mesh import Mode, PolarMesh, Topology
from .weights import WeightSpec, radial_resistance, weight_radial_integral


@dataclass(frozen=True, eq=False)
class FormMatrices:
    S: sp.csr_matrix
    mass: np.ndarray
    mesh: PolarMesh
    topology: Topology
    weight: WeightSpec
    origin_conductance: np.ndarray  # per innermost sector, into its origin point
    absorbed: np.ndarray  # per mesh node; nonzero only in killed mode

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    @property
    def n_mesh(self) -> int:
        return self.topology.n_mesh_nodes

    @property
    def origin_nodes(self) -> tuple:
        return self.topology.origin_nodes

    @property
    def mode(self) -> Mode:
        return self.topology.mode

    def operator(self, alpha: float) -> sp.csr_matrix:
        """``S + alpha * diag(mass)``."""
        return (self.S + alpha * sp.diags(self.mass)).tocsr()

    def origin_column(self, i: int) -> np.ndarray:
        """Conductances from every mesh node to origin point ``i``."""
        c = np.zeros(self.n_mesh)
        j = np.flatnonzero(self.topology.arc_assignment == i)
        c[j] = self.origin_conductance[j]
        return c


def origin_resistance(w: WeightSpec, mesh: PolarMesh, cone: int) -> float:
    """Resistance of the radial strip joining an innermost sector to the origin.

    For a regular weight the strip resistance from r=0 diverges only
    logarithmically; the origin is then resolved as the disk of radius
    ``r_min / q`` (q the innermost grading ratio), otherwise no regular
    control could be compared at all.
    """
    r0 = mesh.r_min
    lo = r0 * r0 / float(mesh.rings[1]) if w.is_regular else 0.0
    return radial_resistance(w, cone, lo, r0, mesh.dtheta)


def assemble(mesh: PolarMesh, topology: Topology, weight: WeightSpec) -> FormMatrices:
    K, M = mesh.n_rings, mesh.n_sectors
    dth = mesh.dtheta
    if M % weight.n_cones:
        raise ConfigurationError("mesh sectors not aligned with the weight's cones")
    cones = np.array([weight.cone_of_angle(t) for t in mesh.thetas])
    # radial integrals only depend on the sign of the exponent, so cache per parity
    rep = {}
    for c in cones:
        rep.setdefault(weight.rho_sign(int(c)), int(c))
    sign_of = np.array([weight.rho_sign(int(c)) for c in cones])

    rad_c = {}
    ang_int = {}
    mass_ring = {}
    for s, c in rep.items():
        rc = np.empty(K - 1)
        for k in range(K - 1):
            res = radial_resistance(weight, c, mesh.rings[k], mesh.rings[k + 1], dth)
            rc[k] = 0.0 if math.isinf(res) else 1.0 / res
        rad_c[s] = rc
        b = mesh.bounds
        ang_int[s] = np.array([weight_radial_integral(weight, c, 1, -1, b[k], b[k + 1]) for k in range(K)])
        mass_ring[s] = dth * np.array([weight_radial_integral(weight, c, 1, 1, b[k], b[k + 1]) for k in range(K)])

    rows, cols, vals = [], [], []
    node = np.arange(K * M).reshape(K, M)
    for j in range(M):
        s = sign_of[j]
        rows.append(node[:-1, j])
        cols.append(node[1:, j])
        vals.append(rad_c[s])
        jn = (j + 1) % M
        s2 = sign_of[jn]
        # half a sector of each side in series; equals dtheta/I inside a cone
        res = 0.5 * dth * (1.0 / ang_int[s] + 1.0 / ang_int[s2])
        rows.append(node[:, j])
        cols.append(node[:, jn])
        vals.append(1.0 / res)

    origin_c = np.zeros(M)
    for j in range(M):
        res = origin_resistance(weight, mesh, int(cones[j]))
        origin_c[j] = 0.0 if math.isinf(res) else 1.0 / res

    n = topology.n_nodes
    absorbed = np.zeros(topology.n_mesh_nodes)
    if topology.mode is Mode.KILLED:
        absorbed[node[0]] = origin_c
    else:
        for j in range(M):
            a = topology.arc_assignment[j]
            if a >= 0 and origin_c[j] > 0:
                rows.append(np.array([node[0, j]]))
                cols.append(np.array([topology.origin_nodes[a]]))
                vals.append(np.array([origin_c[j]]))

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    keep = v > 0
    r, c, v = r[keep], c[keep], v[keep]
    C = sp.coo_matrix((np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                      shape=(n, n)).tocsr()
    C.sum_duplicates()
    degree = np.asarray(C.sum(axis=1)).ravel() + np.concatenate([absorbed, np.zeros(n - len(absorbed))])
    S = (sp.diags(degree) - C).tocsr()
    S.sort_indices()

    if topology.mode is not Mode.KILLED:
        ncomp, _ = connected_components(C, directed=False)
        if ncomp != 1:
            raise AssemblyError(f"network has {ncomp} connected components; "
                                "some origin point has no finite-resistance edge")

    mass = np.zeros(n)
    mass[: K * M] = np.column_stack([mass_ring[s] for s in sign_of]).ravel()
    mass.setflags(write=False)
    origin_c.setflags(write=False)
    absorbed.setflags(write=False)
    return FormMatrices(S, mass, mesh, topology, weight, origin_c, absorbed)


def killed_from(F: FormMatrices) -> FormMatrices:
    """Killed-mode form on the same mesh and weight as ``F``."""
    from .mesh import build_topology
    return assemble(F.mesh, build_topology(F.mesh, F.weight, Mode.KILLED), F.weight)


def energy(F: FormMatrices, u, v) -> float:
    return float(np.asarray(u) @ (F.S @ np.asarray(v)))


def e1(F: FormMatrices, u, v, alpha: float = 1.0) -> float:
    u, v = np.asarray(u), np.asarray(v)
    return float(u @ (F.S @ v) + alpha * np.sum(F.mass * u * v))


def inner(F: FormMatrices, u, v) -> float:
    """``<u, v>`` in ``L^2(mu)``; origin nodes have no mass."""
    n = F.n_mesh
    return float(np.sum(F.mass[:n] * np.asarray(u)[:n] * np.asarray(v)[:n]))


def _innermost_trace(u, mesh: PolarMesh, quadrant: int) -> float:
    j = mesh.quadrant_sectors(quadrant)
    vals = np.asarray(u)[mesh.node(0, 0) + j]
    return float(2.0 / math.pi * math.fsum(vals * mesh.dtheta))


def trace_plus(u, mesh: PolarMesh) -> float:
    """Normalised mean of ``u`` over the innermost quarter ring in Q1."""
    return _innermost_trace(u, mesh, 1)


def trace_minus(u, mesh: PolarMesh) -> float:
    """Normalised mean of ``u`` over the innermost quarter ring in Q3."""
    return _innermost_trace(u, mesh, 3)


def _angular_profile(theta: np.ndarray) -> np.ndarray:
    q = (theta // (math.pi / 2)).astype(int) % 4
    return np.select([q == 0, q == 1, q == 2, q == 3],
                     [np.ones_like(theta), np.sin(theta), np.zeros_like(theta), np.cos(theta)])


def psi0_grid(mesh: PolarMesh, topology: Topology) -> np.ndarray:
    """Jump function ``(1-|x|^2)_+ psi(x)``: 1 on Q1, 0 on Q3, interpolating on Q2/Q4."""
    if topology.mode is Mode.KILLED:
        raise ConfigurationError("psi0 needs a glued or split topology")
    out = np.zeros(topology.n_nodes)
    r = mesh.node_radius()
    out[: mesh.n_nodes] = np.clip(1 - r * r, 0, None) * _angular_profile(mesh.node_theta())
    if topology.mode is Mode.SPLIT:
        if len(topology.origin_nodes) != 2:
            raise ConfigurationError("psi0 is the two-point jump function; use psi_i_grid for N > 2")
        out[topology.origin_nodes[0]] = 1.0
        out[topology.origin_nodes[1]] = 0.0
    else:
        warnings.warn("psi0 has no value at a glued origin; set to 0 by convention", stacklevel=2)
    return out


def psi_i_grid(mesh: PolarMesh, topology: Topology, i: int, N: int) -> np.ndarray:
    """Multi-cone jump function: 1 on cone ``2i-1``, ramps on its two neighbours.

    Angles are measured from the start of cone ``2i-2`` so that each ramp
    runs from 0 at the far edge to 1 at the shared edge for every ``i``.
    """
    if not 1 <= i <= N:
        raise ConfigurationError(f"need 1 <= i <= N, got i={i}, N={N}")
    if topology.mode is Mode.KILLED:
        raise ConfigurationError("psi_i needs a glued or split topology")
    width = math.pi / N
    theta = mesh.node_theta()
    local = np.mod(theta - (2 * i - 2) * width + math.pi, 2 * math.pi) - math.pi
    phi = np.zeros_like(theta)
    before = (local >= -width) & (local < 0)
    own = (local >= 0) & (local < width)
    after = (local >= width) & (local < 2 * width)
    phi[before] = np.cos(N * local[before] / 2)
    phi[own] = 1.0
    phi[after] = np.sin(N * local[after] / 2)
    r = mesh.node_radius()
    out = np.zeros(topology.n_nodes)
    out[: mesh.n_nodes] = np.clip(1 - r * r, 0, None) * phi
    if topology.mode is Mode.SPLIT:
        if len(topology.origin_nodes) != N:
            raise ConfigurationError(f"split topology has {len(topology.origin_nodes)} origin points, not {N}")
        out[topology.origin_nodes[i - 1]] = 1.0
    return out


def decompose(u, mesh: PolarMesh, topology: Topology):
    """Write ``u = lam * psi0 + v`` with equal traces for ``v``."""
    u = np.asarray(u, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        psi = psi0_grid(mesh, topology)
    denom = trace_plus(psi, mesh) - trace_minus(psi, mesh)
    if abs(denom) < 1e-12:
        raise NumericalError("trace gap of psi0 vanishes on this mesh")
    lam = (trace_plus(u, mesh) - trace_minus(u, mesh)) / denom
    return lam, u - lam * psi


def dist_to_glued(u, F_split: FormMatrices, alpha: float = 1.0) -> float:
    """Squared E_alpha-distance from ``u`` to functions taking one value on all origin points.

    With ``B`` the difference operator between consecutive origin values
    and ``A = S + alpha M``, the minimum of ``d^T A d`` over ``B d = g`` is
    ``g^T (B A^-1 B^T)^-1 g``.
    """
    if F_split.mode is not Mode.SPLIT:
        raise ConfigurationError("dist_to_glued needs a split topology")
    u = np.asarray(u, dtype=float)
    o = F_split.origin_nodes
    n = F_split.n_nodes
    B = np.zeros((len(o) - 1, n))
    for k in range(len(o) - 1):
        B[k, o[k]], B[k, o[k + 1]] = 1.0, -1.0
    g = B @ u
    if not np.any(g):
        return 0.0
    solver = SPDSolver(F_split.operator(alpha))
    X = solver.solve(B.T.copy())
    G = B @ X.reshape(n, -1)
    try:
        return float(g @ np.linalg.solve(G, g))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"constraint Gram matrix is singular: {exc}") from exc
