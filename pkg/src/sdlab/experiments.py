"""Named experiments shared by the command line and the acceptance suite.

Each ``run_*`` function takes a resolved config dict (see :mod:`sdlab.config`)
and returns a :class:`Report` with CSV rows, summary results, residuals
and a pass flag.  The lower-level helpers take explicit arguments.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ConfigurationError
from .forms import assemble, decompose, dist_to_glued, e1, killed_from, psi0_grid, trace_minus, trace_plus
from .mesh import Mode, PolarMesh, build_mesh, build_topology, ladder_mesh
from .potential import (
    capacity,
    cone_capacity_report,
    harmonic_measure_origin,
    hitting_probs_split,
    verify_one_point,
    verify_two_point,
)
from .stochastic import WalkConfig, bessel_hit_estimate, return_side_stats, walk_arrays
from .weights import Family, ProfileKind, RadialProfile, WeightSpec, check_assumptions, numeric_assumption_integrals

SCHEMA_VERSION = 1


@dataclass
class Report:
    experiment: str
    rows: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    passed: bool = True


# ---------------------------------------------------------------------------
# builders


def weight_from(cfg: dict) -> WeightSpec:
    family = Family(cfg["weight.family"])
    cutoff = cfg["weight.cutoff"]
    if family is Family.UNIT_CONTROL:
        return WeightSpec.unit_control(cutoff)
    kind = ProfileKind(cfg["profile.kind"])
    profile = RadialProfile(kind, cfg["profile.alpha"] if kind is not ProfileKind.UNIT else 1.0)
    return WeightSpec(family, profile, cfg["weight.cones"], cutoff)


def splittable(w: WeightSpec) -> WeightSpec:
    """The control weight rewritten as a two-quadrant weight with a unit profile (same rho)."""
    if w.family is Family.UNIT_CONTROL:
        return WeightSpec.two_quadrant(RadialProfile.unit(), w.cutoff_radius)
    return w


def mesh_from(cfg: dict, w: WeightSpec) -> PolarMesh:
    q = None if cfg["mesh.grading"] == "auto" else cfg["mesh.grading"]
    return build_mesh(cfg["mesh.rings"], cfg["mesh.sectors"], cfg["mesh.r_min"], cfg["mesh.R"],
                      q=q, weight=w)


def ladder_from(cfg: dict, w: WeightSpec, r_min: float) -> PolarMesh:
    return ladder_mesh(r_min, cfg["mesh.sectors"], cfg["ladder.rings_per_decade"], cfg["ladder.outer_rings"],
                       cfg["mesh.R"], w.cutoff_radius)


def forms_for(mesh: PolarMesh, w: WeightSpec, mode):
    return assemble(mesh, build_topology(mesh, w, mode), w)


def nearest_node(mesh: PolarMesh, r: float, theta: float) -> int:
    k = int(np.argmin(np.abs(np.log(mesh.rings / r))))
    j = int(np.argmin(np.abs(np.angle(np.exp(1j * (mesh.thetas - theta))))))
    return mesh.node(k, j)


# ---------------------------------------------------------------------------
# helpers with explicit arguments


def capacity_ladder(w: WeightSpec, r_mins, M: int = 32, rings_per_decade: int = 8, outer_rings: int = 8,
                    R: float = 2.0, alpha: float = 1.0):
    """``cap_alpha({0})`` on the glued network for each ``r_min`` of a refinement ladder."""
    out = []
    for r_min in r_mins:
        mesh = ladder_mesh(r_min, M, rings_per_decade, outer_rings, R, w.cutoff_radius)
        F = forms_for(mesh, w, Mode.GLUED)
        out.append((r_min, mesh.n_rings, capacity(F, [F.origin_nodes[0]], alpha).value))
    return out


def capacity_ladder_passes(caps, regular: bool) -> bool:
    if regular:
        return all(b < 0.6 * a for a, b in zip(caps, caps[1:]))
    return abs(caps[-1] - caps[-2]) < 0.05 * abs(caps[-2]) and min(caps) > 0.1 * caps[0]


def gluing_identities(mesh: PolarMesh, w: WeightSpec, alpha: float = 1.0) -> dict:
    Fg = forms_for(mesh, w, Mode.GLUED)
    Fs = forms_for(mesh, w, Mode.SPLIT)
    o = Fs.origin_nodes
    glued = capacity(Fg, [Fg.origin_nodes[0]], alpha).value
    both = capacity(Fs, list(o), alpha).value
    plus = capacity(Fs, [o[0]], alpha).value
    minus = capacity(Fs, [o[1]], alpha).value
    return {"cap_glued": glued, "cap_split_both": both, "cap_split_plus": plus, "cap_split_minus": minus,
            "glued_minus_split": abs(glued - both), "plus_minus_minus": abs(plus - minus)}


def cone_ladder(mesh: PolarMesh, w: WeightSpec, eps_list, delta: float, alpha: float = 1.0,
                mode=Mode.SPLIT):
    F = forms_for(mesh, w, mode)
    return [(eps, cone_capacity_report(F, eps, delta, alpha)) for eps in eps_list]


def odd_arc_distance(theta, n_pairs: int):
    """Angular distance to the closed union of the odd cones (``2i-1``) of ``2 n_pairs`` cones."""
    width = math.pi / n_pairs
    t = np.mod(theta, 2 * width)
    return np.where(t <= width, 0.0, np.minimum(t - width, 2 * width - t))


def one_point_residuals(mesh: PolarMesh, w: WeightSpec, alphas, trials: int, seed: int):
    Fg = forms_for(mesh, w, Mode.GLUED)
    Fk = killed_from(Fg)
    rng = np.random.default_rng(seed)
    rows = []
    for a in alphas:
        for t in range(trials):
            rep = verify_one_point(Fg, Fk, a, rng.standard_normal(Fg.n_mesh))
            rows.append({"alpha": a, "trial": t, "residual_linf": rep.residual_linf,
                         "g_at_origin": rep.g_at_origin, "formula_value": rep.formula_value})
    return rows


def two_point_residuals(mesh: PolarMesh, w: WeightSpec, alphas, trials: int, seed: int):
    Fs = forms_for(mesh, w, Mode.SPLIT)
    Fk = killed_from(Fs)
    rng = np.random.default_rng(seed)
    rows, ones = [], []
    for a in alphas:
        for t in range(trials):
            rep = verify_two_point(Fs, Fk, a, rng.standard_normal(Fs.n_mesh))
            rows.append({"alpha": a, "trial": t, "residual_linf": rep.residual_linf,
                         "relative_gap": rep.relative_gap,
                         "phi0_plus_formula": rep.phi0_plus_formula, "phi0_plus_direct": rep.phi0_plus_direct,
                         "phi0_minus_formula": rep.phi0_minus_formula,
                         "phi0_minus_direct": rep.phi0_minus_direct})
        rep = verify_two_point(Fs, Fk, a, np.ones(Fs.n_mesh))
        ones.append({"alpha": a, "plus_formula": rep.phi0_plus_formula, "minus_formula": rep.phi0_minus_formula,
                     "plus_direct": rep.phi0_plus_direct, "minus_direct": rep.phi0_minus_direct,
                     "max_error": max(abs(v - 1 / a) for v in (rep.phi0_plus_formula, rep.phi0_minus_formula,
                                                               rep.phi0_plus_direct, rep.phi0_minus_direct))})
    return rows, ones


def phi_symmetry(mesh: PolarMesh, w: WeightSpec) -> dict:
    Fs = forms_for(mesh, w, Mode.SPLIT)
    pp, pm = hitting_probs_split(Fs)
    n = Fs.n_mesh
    nodes = np.arange(n)
    return {"sum_minus_one": float(np.max(np.abs(pp[:n] + pm[:n] - 1))),
            "antipodal": float(np.max(np.abs(pp[nodes] - pm[mesh.antipodal(nodes)])))}


def trace_checks(mesh: PolarMesh, w: WeightSpec, trials: int, seed: int) -> dict:
    T = build_topology(mesh, w, Mode.SPLIT)
    psi = psi0_grid(mesh, T)
    rng = np.random.default_rng(seed)
    gaps = []
    for _ in range(trials):
        u = rng.standard_normal(T.n_nodes)
        _, v = decompose(u, mesh, T)
        gaps.append(abs(trace_plus(v, mesh) - trace_minus(v, mesh)))
    return {"trace_plus": trace_plus(psi, mesh), "trace_minus": trace_minus(psi, mesh),
            "expected_plus": 1 - mesh.r_min ** 2, "max_decomposition_gap": max(gaps)}


def dist_ladder(w: WeightSpec, r_mins, M: int = 32, rings_per_decade: int = 8, outer_rings: int = 8,
                R: float = 2.0, alpha: float = 1.0):
    """``(r_min, dist_to_glued(psi0), E_alpha(psi0, psi0))`` along a refinement ladder."""
    w = splittable(w)
    out = []
    for r_min in r_mins:
        mesh = ladder_mesh(r_min, M, rings_per_decade, outer_rings, R, w.cutoff_radius)
        F = forms_for(mesh, w, Mode.SPLIT)
        psi = psi0_grid(mesh, F.topology)
        out.append((r_min, dist_to_glued(psi, F, alpha), e1(F, psi, psi, alpha)))
    return out


def grows_like_log(r_mins, values) -> bool:
    """Strictly increasing with per-level increments proportional to the log step (within 2x)."""
    x = np.log(1 / np.asarray(r_mins))
    slopes = np.diff(values) / np.diff(x)
    return bool(np.all(slopes > 0) and slopes.max() < 2 * slopes.min())


def dist_ladder_passes(dists, r_mins, regular: bool) -> bool:
    if regular:
        return grows_like_log(r_mins, dists)
    return min(dists) > 0.5 * dists[0]


# ---------------------------------------------------------------------------
# experiments


def run_check_assumptions(cfg: dict) -> Report:
    p = weight_from(cfg).profile
    rep = check_assumptions(p, verify=p.kind is not ProfileKind.UNIT)
    from .weights import DEFAULT_EPSILONS
    rows = [{"epsilon": e, "onerank": v} for e, v in zip(DEFAULT_EPSILONS, rep.onerank_values)]
    residuals = {}
    if p.kind is not ProfileKind.UNIT:
        n_ar, n_ra = numeric_assumption_integrals(p)
        residuals = {"quadrature_a_over_r": abs(n_ar - rep.integral_a_over_r),
                     "quadrature_r_over_a": abs(n_ra - rep.integral_r_over_a)}
    results = {"profile": p.kind.value, "alpha": p.alpha, "integral_a_over_r": rep.integral_a_over_r,
               "integral_r_over_a": rep.integral_r_over_a, "onerank_sup": rep.onerank_sup,
               "bound": rep.bound}
    return Report("check-assumptions", rows, results, residuals, rep.passed)


def run_capacity(cfg: dict) -> Report:
    w = weight_from(cfg)
    ladder = capacity_ladder(w, cfg["ladder.r_min"], cfg["mesh.sectors"], cfg["ladder.rings_per_decade"],
                             cfg["ladder.outer_rings"], cfg["mesh.R"], cfg["alpha"])
    caps = [c for _, _, c in ladder]
    rows = [{"level": i, "r_min": r, "rings": k, "capacity": c} for i, (r, k, c) in enumerate(ladder)]
    results = {"regular": w.is_regular, "ratios": [b / a for a, b in zip(caps, caps[1:])]}
    passed = capacity_ladder_passes(caps, w.is_regular)
    residuals = {}
    if w.family is not Family.UNIT_CONTROL:
        ident = gluing_identities(mesh_from(cfg, w), w, cfg["alpha"])
        results.update({k: v for k, v in ident.items() if k.startswith("cap_")})
        residuals = {"glued_minus_split": ident["glued_minus_split"],
                     "plus_minus_minus": ident["plus_minus_minus"]}
        passed = passed and max(residuals.values()) <= 1e-12
    return Report("capacity", rows, results, residuals, passed)


def run_cones(cfg: dict) -> Report:
    w = weight_from(cfg)
    mesh = ladder_from(cfg, w, cfg["cones.r_min"])
    mode = Mode(cfg["topology.mode"])
    if mode is Mode.SPLIT and w.family is Family.UNIT_CONTROL:
        mode = Mode.GLUED
    ladder = cone_ladder(mesh, w, cfg["cones.eps"], cfg["cones.delta"], cfg["alpha"], mode)
    rows = []
    for eps, rep in ladder:
        rows.append({"eps": eps, "cap_plus": rep.cap_plus, "cap_minus": rep.cap_minus, "bound": rep.bound,
                     "C_plus": rep.cap_plus / rep.bound, "C_minus": rep.cap_minus / rep.bound,
                     "nodes_plus": rep.n_plus, "nodes_minus": rep.n_minus})
    cs = [r["C_plus"] for r in rows] + [r["C_minus"] for r in rows]
    spread = max(cs) / min(cs) if min(cs) > 0 else math.inf
    return Report("cones", rows, {"C_max": max(cs), "C_min": min(cs), "C_spread": spread},
                  {}, bool(spread < 3))


def run_one_point(cfg: dict) -> Report:
    w = weight_from(cfg)
    rows = one_point_residuals(mesh_from(cfg, w), w, cfg["identity.alphas"], cfg["identity.trials"],
                               cfg["mc.seed"])
    res = max(r["residual_linf"] for r in rows)
    return Report("one-point", rows, {"trials": len(rows)}, {"residual_linf": res}, bool(res < 1e-8))


def run_two_point(cfg: dict) -> Report:
    w = splittable(weight_from(cfg))
    rows, ones = two_point_residuals(mesh_from(cfg, w), w, cfg["identity.alphas"], cfg["identity.trials"],
                                     cfg["mc.seed"])
    residuals = {"residual_linf": max(r["residual_linf"] for r in rows),
                 "relative_gap": max(r["relative_gap"] for r in rows),
                 "ones_error": max(o["max_error"] for o in ones)}
    passed = residuals["residual_linf"] < 1e-8 and residuals["relative_gap"] < 1e-8 \
        and residuals["ones_error"] < 1e-10
    return Report("two-point", rows, {"trials": len(rows), "constant_input": ones}, residuals, bool(passed))


def _walk_cfg(cfg, start, paths=None, max_steps=None):
    return WalkConfig(start, max_steps or cfg["mc.max_steps"], (cfg["walk.annulus_lo"], cfg["walk.annulus_hi"]),
                      cfg["mc.seed"], paths or cfg["mc.paths"])


def run_hitting_mc(cfg: dict) -> Report:
    w = splittable(weight_from(cfg))
    mesh = mesh_from(cfg, w)
    Fs = forms_for(mesh, w, Mode.SPLIT)
    phi_plus, _ = hitting_probs_split(Fs)
    start = nearest_node(mesh, cfg["hitting.start_r"], cfg["hitting.start_theta"])
    absorbed, _, _ = walk_arrays(Fs, _walk_cfg(cfg, start))
    done = absorbed >= 0
    n = int(done.sum())
    p_hat = float(np.mean(absorbed[done] == Fs.origin_nodes[0])) if n else math.nan
    phi = float(phi_plus[start])
    se = math.sqrt(phi * (1 - phi) / max(n, 1))
    sym = phi_symmetry(mesh, w)

    ret_cfg = _walk_cfg(cfg, start, cfg["walk.return_paths"], cfg["walk.return_steps"])
    rs = return_side_stats(Fs, ret_cfg)
    rg = return_side_stats(forms_for(mesh, w, Mode.GLUED), ret_cfg)
    share, share_se, visits = rg.q1_share()
    results = {"start": start, "start_r": float(mesh.rings[mesh.ring_of(start)]),
               "start_theta": float(mesh.thetas[mesh.sector_of(start)]),
               "phi_plus": phi, "empirical": p_hat, "absorbed_paths": n, "timeouts": int((~done).sum()),
               "std_err": se, "from_plus_into_Q1": rs.from_plus_into_Q1,
               "from_minus_into_Q3": rs.from_minus_into_Q3, "split_visits": rs.visits.tolist(),
               "glued_q1_share": share, "glued_q1_std_err": share_se, "glued_visits": visits}
    rows = [{"graph": "split", "origin": k, "q1": int(c[1]), "q2": int(c[2]), "q3": int(c[3]), "q4": int(c[4]),
             "other_origin": int(c[0])} for k, c in enumerate(rs.counts)]
    rows.append({"graph": "glued", "origin": 0, "q1": int(rg.counts[0, 1]), "q2": int(rg.counts[0, 2]),
                 "q3": int(rg.counts[0, 3]), "q4": int(rg.counts[0, 4]), "other_origin": int(rg.counts[0, 0])})
    residuals = {"hitting_z": abs(p_hat - phi) / se if se > 0 else abs(p_hat - phi),
                 "glued_share_z": abs(share - 0.5) / share_se, **sym}
    passed = (n > 0 and abs(p_hat - phi) <= 3 * se and rs.from_plus_into_Q1 == 1.0
              and rs.from_minus_into_Q3 == 1.0 and abs(share - 0.5) <= 3 * share_se
              and sym["sum_minus_one"] <= 1e-12 and sym["antipodal"] <= 1e-12)
    return Report("hitting-mc", rows, results, residuals, bool(passed))


def run_approach_angle(cfg: dict) -> Report:
    w = weight_from(cfg)
    mesh = mesh_from(cfg, w)
    F = forms_for(mesh, w, Mode.GLUED)
    start = nearest_node(mesh, cfg["walk.start_r"], cfg["walk.start_theta"])
    hm = harmonic_measure_origin(F, start)
    sector_cone = np.array([w.cone_of_angle(t) for t in mesh.thetas])
    even = sector_cone % 2 == 0
    even_mass = float(hm.sector_mass[even].sum())
    absorbed, angle, _ = walk_arrays(F, _walk_cfg(cfg, start))
    near = odd_arc_distance(angle, w.cones) <= 2 * mesh.dtheta + 1e-12
    frac = float(np.mean(near & (absorbed >= 0)))
    rows = [{"sector": j, "theta": float(t), "cone": int(c), "harmonic_mass": float(m)}
            for j, (t, c, m) in enumerate(zip(mesh.thetas, sector_cone, hm.sector_mass))]
    results = {"start": start, "even_cone_mass": even_mass, "fraction_near_odd_arcs": frac,
               "timeouts": int((absorbed < 0).sum()), "never_in_annulus": int(np.isnan(angle).sum()),
               "paths": int(absorbed.size)}
    passed = (even_mass == 0.0 or w.is_regular) and frac >= 0.99
    return Report("approach-angle", rows, results, {"even_cone_mass": even_mass}, bool(passed))


def run_bessel(cfg: dict) -> Report:
    alpha = cfg["profile.alpha"]
    rows, passed = [], True
    for name, delta in (("inward", 2.0 - alpha), ("outward", 2.0 + alpha)):
        est = bessel_hit_estimate(delta, cfg["bessel.r0"], cfg["bessel.a"], cfg["bessel.b"], cfg["bessel.dt"],
                                  cfg["bessel.paths"], cfg["mc.seed"])
        rows.append({"case": name, "delta": delta, "kappa": 2.0 - delta, "estimate": est.estimate,
                     "std_err": est.std_err, "analytic": est.analytic, "z": est.z_score,
                     "paths": est.paths, "aborted": est.aborted})
        passed = passed and abs(est.z_score) <= 3
    return Report("bessel", rows, {"alpha": alpha}, {"max_abs_z": max(abs(r["z"]) for r in rows)}, bool(passed))


def run_trace(cfg: dict) -> Report:
    w = splittable(weight_from(cfg))
    mesh = mesh_from(cfg, w)
    chk = trace_checks(mesh, w, cfg["identity.trials"], cfg["mc.seed"])
    residuals = {"trace_plus_error": abs(chk["trace_plus"] - chk["expected_plus"]),
                 "trace_minus": abs(chk["trace_minus"]),
                 "decomposition_gap": chk["max_decomposition_gap"]}
    passed = residuals["trace_plus_error"] <= 1e-12 and chk["trace_minus"] == 0.0 \
        and residuals["decomposition_gap"] <= 1e-12
    return Report("trace", [chk], chk, residuals, bool(passed))


def run_dist(cfg: dict) -> Report:
    w = weight_from(cfg)
    ladder = dist_ladder(w, cfg["ladder.r_min"], cfg["mesh.sectors"], cfg["ladder.rings_per_decade"],
                         cfg["ladder.outer_rings"], cfg["mesh.R"], cfg["alpha"])
    rows = [{"level": i, "r_min": r, "dist_to_glued": d, "energy_psi0": e} for i, (r, d, e) in enumerate(ladder)]
    dists = [d for _, d, _ in ladder]
    passed = dist_ladder_passes(dists, cfg["ladder.r_min"], w.is_regular)
    return Report("dist", rows, {"regular": w.is_regular}, {}, bool(passed))


EXPERIMENTS = {
    "check-assumptions": run_check_assumptions,
    "capacity": run_capacity,
    "cones": run_cones,
    "one-point": run_one_point,
    "two-point": run_two_point,
    "hitting-mc": run_hitting_mc,
    "approach-angle": run_approach_angle,
    "bessel": run_bessel,
    "trace": run_trace,
    "dist": run_dist,
}


def run(name: str, cfg: dict) -> Report:
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    linalg.configure(cfg["solver.tol"], cfg["solver.max_iter"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return EXPERIMENTS[name](cfg)
