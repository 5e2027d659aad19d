"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``criterion N PASS|FAIL`` line (also collected in
the terminal summary).  Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""
import math
import time

import numpy as np
import pytest

from sdlab.experiments import (
    capacity_ladder,
    capacity_ladder_passes,
    cone_ladder,
    dist_ladder,
    dist_ladder_passes,
    forms_for,
    gluing_identities,
    grows_like_log,
    nearest_node,
    odd_arc_distance,
    one_point_residuals,
    phi_symmetry,
    trace_checks,
    two_point_residuals,
)
from sdlab.mesh import Mode, build_mesh, ladder_mesh
from sdlab.potential import harmonic_measure_origin
from sdlab.stochastic import WalkConfig, bessel_hit_estimate, return_side_stats, walk_arrays
from sdlab.weights import DEFAULT_EPSILONS, RadialProfile, WeightSpec, check_assumptions, numeric_assumption_integrals

LADDER = (1e-2, 1e-3, 1e-4, 1e-5)
ALPHAS = (0.5, 1.0, 4.0)
SEED = 20240611


@pytest.fixture(scope="module")
def w_power():
    return WeightSpec.two_quadrant(RadialProfile.power(1.0))


@pytest.fixture(scope="module")
def mesh32(w_power):
    """32 rings x 32 sectors, r_min = 1e-3, R = 2."""
    return build_mesh(32, 32, 1e-3, 2.0, weight=w_power)


def test_criterion_01_assumption_quadratures(criterion):
    p = RadialProfile.power(1.0)
    t0 = time.perf_counter()
    rep = check_assumptions(p, epsilons=DEFAULT_EPSILONS)
    n_ar, n_ra = numeric_assumption_integrals(p)
    elapsed = time.perf_counter() - t0
    err_int = max(abs(rep.integral_a_over_r - 1), abs(rep.integral_r_over_a - 1),
                  abs(n_ar - 1), abs(n_ra - 1))
    err_rank = max(abs(v - 0.5) for v in rep.onerank_values)
    ok = err_int <= 1e-10 and err_rank <= 1e-8 and elapsed < 1.0
    assert criterion("1", ok, f"integral error {err_int:.2e} (tol 1e-10), one-rank error {err_rank:.2e} "
                              f"(tol 1e-8), {elapsed:.3f} s (< 1 s)")


def test_criterion_02_one_point_identity(criterion, mesh32, w_power):
    t0 = time.perf_counter()
    rows = one_point_residuals(mesh32, w_power, ALPHAS, 20, SEED)
    elapsed = time.perf_counter() - t0
    res = max(r["residual_linf"] for r in rows)
    ok = len(rows) == 60 and res < 1e-8 and elapsed < 10.0
    assert criterion("2", ok, f"max residual_linf {res:.2e} over {len(rows)} cases (tol 1e-8), {elapsed:.2f} s (< 10 s)")


def test_criterion_03_two_point_identity(criterion, mesh32, w_power):
    t0 = time.perf_counter()
    rows, ones = two_point_residuals(mesh32, w_power, ALPHAS, 20, SEED)
    elapsed = time.perf_counter() - t0
    rel = max(r["relative_gap"] for r in rows)
    res = max(r["residual_linf"] for r in rows)
    one_err = max(o["max_error"] for o in ones)
    ok = rel < 1e-8 and res < 1e-8 and one_err < 1e-10 and elapsed < 10.0
    assert criterion("3", ok, f"phi(0+-) relative gap {rel:.2e}, nodewise residual {res:.2e} (tol 1e-8); "
                              f"g=1 error {one_err:.2e} (tol 1e-10); {elapsed:.2f} s (< 10 s)")


def test_criterion_04_hitting_symmetry(criterion, mesh32, w_power):
    meshes = [mesh32] + [ladder_mesh(r, 32) for r in LADDER]
    worst_sum = worst_anti = 0.0
    for m in meshes:
        s = phi_symmetry(m, w_power)
        worst_sum = max(worst_sum, s["sum_minus_one"])
        worst_anti = max(worst_anti, s["antipodal"])
    ok = worst_sum <= 1e-12 and worst_anti <= 1e-12
    assert criterion("4", ok, f"|phi+ + phi- - 1| {worst_sum:.2e}, |phi+(x) - phi-(-x)| {worst_anti:.2e} "
                              f"(tol 1e-12) on {len(meshes)} meshes")


def test_criterion_05a_capacity_power(criterion, w_power):
    t0 = time.perf_counter()
    caps = [c for _, _, c in capacity_ladder(w_power, LADDER)]
    elapsed = time.perf_counter() - t0
    change = abs(caps[-1] - caps[-2]) / caps[-2]
    ok = capacity_ladder_passes(caps, regular=False) and elapsed < 60
    assert criterion("5a", ok, f"Power(1) cap1({{0}}) = {', '.join(f'{c:.5f}' for c in caps)}; last change "
                               f"{100 * change:.4f}% (< 5%), min/coarsest {min(caps) / caps[0]:.3f} (> 0.1); "
                               f"{elapsed:.2f} s (< 60 s)")


def test_criterion_05b_capacity_unit_control(criterion):
    t0 = time.perf_counter()
    caps = [c for _, _, c in capacity_ladder(WeightSpec.unit_control(), LADDER)]
    elapsed = time.perf_counter() - t0
    drops = [1 - b / a for a, b in zip(caps, caps[1:])]
    ok = capacity_ladder_passes(caps, regular=True) and elapsed < 60
    # the decay that is actually observed is the const/log(1/r_min) law
    inv = [1 / c for c in caps]
    log_slopes = np.diff(inv) / np.diff(np.log(1 / np.asarray(LADDER)))
    assert criterion("5b", ok, f"UnitControl cap1({{0}}) = {', '.join(f'{c:.4f}' for c in caps)}; per-level drop "
                               f"{', '.join(f'{100 * d:.1f}%' for d in drops)} (required > 40%); "
                               f"1/cap slope per log-decade {', '.join(f'{s:.4f}' for s in log_slopes)}; "
                               f"{elapsed:.2f} s")


def test_criterion_06_cone_capacity_bound(criterion, w_power):
    mesh = ladder_mesh(1e-4, 32)
    ladder = cone_ladder(mesh, w_power, (0.2, 0.1, 0.05, 0.025), math.pi / 8)
    cs = [rep.cap_plus / rep.bound for _, rep in ladder]
    spread = max(cs) / min(cs)
    ok = spread < 3
    assert criterion("6", ok, f"C(eps) = {', '.join(f'{c:.4f}' for c in cs)}; max/min {spread:.3f} (< 3)")


def test_criterion_07_gluing_identities(criterion, mesh32, w_power):
    ident = gluing_identities(mesh32, w_power)
    ok = ident["glued_minus_split"] <= 1e-12 and ident["plus_minus_minus"] <= 1e-12
    assert criterion("7", ok, f"|cap(G,{{0}}) - cap(S,{{0+,0-}})| {ident['glued_minus_split']:.2e}, "
                              f"|cap(S,{{0+}}) - cap(S,{{0-}})| {ident['plus_minus_minus']:.2e} (tol 1e-12)")


def test_criterion_08_approach_angle(criterion, mesh32, w_power):
    t0 = time.perf_counter()
    F = forms_for(mesh32, w_power, Mode.GLUED)
    start = nearest_node(mesh32, 0.5, 3 * math.pi / 4)
    hm = harmonic_measure_origin(F, start)
    even = np.array([w_power.cone_of_angle(t) % 2 == 0 for t in mesh32.thetas])
    even_mass = float(hm.sector_mass[even].sum())
    absorbed, angle, _ = walk_arrays(F, WalkConfig(start, 10 ** 6, (0.005, 0.1), SEED, 10 ** 4))
    near = (odd_arc_distance(angle, 2) <= 2 * mesh32.dtheta + 1e-12) & (absorbed >= 0)
    frac = float(near.mean())
    elapsed = time.perf_counter() - t0
    ok = even_mass == 0.0 and frac >= 0.99 and elapsed < 30
    assert criterion("8", ok, f"even-cone harmonic mass {even_mass!r} (exactly 0); {100 * frac:.2f}% of 10^4 "
                              f"last-annulus angles within 2 dtheta of odd arcs (>= 99%); {elapsed:.2f} s (< 30 s)")


def test_criterion_09_same_side_return(criterion, mesh32, w_power):
    start = nearest_node(mesh32, 0.05, math.pi / 4)
    cfg = WalkConfig(start, 20000, (0.005, 0.1), SEED, 100)
    rs = return_side_stats(forms_for(mesh32, w_power, Mode.SPLIT), cfg)
    rg = return_side_stats(forms_for(mesh32, w_power, Mode.GLUED), cfg)
    share, se, visits = rg.q1_share()
    ok = (rs.from_plus_into_Q1 == 1.0 and rs.from_minus_into_Q3 == 1.0
          and visits >= 10 ** 4 and abs(share - 0.5) <= 3 * se)
    assert criterion("9", ok, f"split: from 0+ into Q1 {rs.from_plus_into_Q1!r}, from 0- into Q3 "
                              f"{rs.from_minus_into_Q3!r} ({rs.visits.tolist()} visits); glued Q1 share "
                              f"{share:.4f} +- {se:.4f} over {visits} visits (|z| = {abs(share - 0.5) / se:.2f} <= 3)")


def test_criterion_10_bessel_scale(criterion):
    t0 = time.perf_counter()
    inward = bessel_hit_estimate(1.0, 0.5, 0.01, 1.0, 1e-5, 10 ** 5, seed=SEED)
    outward = bessel_hit_estimate(3.0, 0.5, 0.01, 1.0, 1e-5, 10 ** 5, seed=SEED)
    elapsed = time.perf_counter() - t0
    z1 = (inward.estimate - 0.50505) / inward.std_err
    z2 = (outward.estimate - 0.0101) / outward.std_err
    ok = abs(z1) <= 3 and abs(z2) <= 3 and inward.aborted == outward.aborted == 0 and elapsed < 120
    assert criterion("10", ok, f"kappa=+1: {inward.estimate:.5f} +- {inward.std_err:.5f} vs 0.50505 (z {z1:+.2f}); "
                               f"kappa=-1: {outward.estimate:.5f} +- {outward.std_err:.5f} vs 0.0101 (z {z2:+.2f}); "
                               f"{elapsed:.1f} s (< 120 s)")


def test_criterion_11_trace_decomposition(criterion, mesh32, w_power):
    chk = trace_checks(mesh32, w_power, 20, SEED)
    err_plus = abs(chk["trace_plus"] - (1 - mesh32.r_min ** 2))
    ok = err_plus <= 1e-12 and chk["trace_minus"] == 0.0 and chk["max_decomposition_gap"] <= 1e-12
    assert criterion("11", ok, f"trace_plus error {err_plus:.2e} (tol 1e-12), trace_minus {chk['trace_minus']!r} "
                               f"(exactly 0), decomposition gap {chk['max_decomposition_gap']:.2e} (tol 1e-12)")


def test_criterion_12a_nonregular_gap_power(criterion, w_power):
    ladder = dist_ladder(w_power, LADDER)
    d = [x for _, x, _ in ladder]
    ok = dist_ladder_passes(d, LADDER, regular=False)
    assert criterion("12a", ok, f"Power(1) dist_to_glued(psi0) = {', '.join(f'{x:.5f}' for x in d)}; "
                                f"min/coarsest {min(d) / d[0]:.3f} (> 0.5)")


def test_criterion_12b_regular_growth(criterion):
    ladder = dist_ladder(WeightSpec.unit_control(), LADDER)
    d = [x for _, x, _ in ladder]
    energy = [e for _, _, e in ladder]
    ok = dist_ladder_passes(d, LADDER, regular=True)
    assert criterion("12b", ok, f"rho=1 dist_to_glued(psi0) = {', '.join(f'{x:.6f}' for x in d)} "
                                f"(required: growth ~ log(1/r_min)); for reference E1(psi0) = "
                                f"{', '.join(f'{e:.3f}' for e in energy)} "
                                f"(log growth: {grows_like_log(LADDER, energy)})")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
