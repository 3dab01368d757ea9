"""Acceptance suite: one test per criterion, printing a pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Two sub-criteria (the scaffold-volume slope band and the
anisotropic surface-energy order band) ask for the limiting exponents at
a pre-asymptotic sweep where those exponents are provably not yet
attained; they are implemented as stated, report the measured numbers,
and fail honestly. The failure details carry the analysis; see also the
README section on testing.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from nemhom import (
    AsymSurface,
    Box,
    ElasticParams,
    GenSurface,
    LdgBulk,
    LdgSurface,
    QTensor,
    RpBulk,
    RpSurface,
    ScaffoldParams,
    SweepConfig,
    build_scaffold,
    f_hom_asym,
    f_hom_gen,
    f_hom_general,
    f_hom_ldg,
    f_hom_rp,
    uniaxial,
)
from nemhom.field import Grid, HomogenisedEnergy, MinimizeConfig, ScaffoldEnergy, make_field
from nemhom.harness import (
    study_extension_bound,
    study_flat_norm,
    study_j_convergence,
    study_j_s_decay,
    study_minimizer_convergence,
    study_phase_tuning,
    study_volume,
    trig_field,
)
from nemhom.homogenize import asym_matrices_exact, cube_surface_moment, cube_surface_rp
from nemhom.qtensor import UniaxialSpec

UNIT = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def report(criterion, name, passed, detail=""):
    tag = "PASS" if passed else "FAIL"
    print(f"[criterion {criterion:>2}][{tag}] {name}: {detail}")
    assert passed, f"criterion {criterion} ({name}): {detail}"


def random_tensors(n, seed):
    rng = np.random.default_rng(seed)
    return [QTensor(*c) for c in rng.uniform(-1, 1, (n, 5))]


# -- 1 ----------------------------------------------------------------------


def test_c01_cayley_hamilton_suite():
    worst_q4 = 0.0
    worst_rec = 0.0
    for q in random_tensors(1000, seed=101):
        t2, t3, t4 = (q.trace_power(k) for k in (2, 3, 4))
        worst_q4 = max(worst_q4, abs(2 * t4 - t2**2) / max(t2**2, 1e-300))
        m = q.matrix()
        mk = np.linalg.matrix_power(m, 4)
        traces = {2: t2, 3: t3, 4: t4}
        for k in range(5, 9):
            mk = mk @ m
            traces[k] = 0.5 * t2 * traces[k - 2] + t3 * traces[k - 3] / 3.0
            direct = float(np.trace(mk))
            worst_rec = max(worst_rec, abs(traces[k] - direct) / max(abs(direct), 1e-12))
    report(
        1,
        "Cayley-Hamilton identities",
        worst_q4 < 1e-12 and worst_rec < 1e-10,
        f"max rel err: quartic {worst_q4:.2e}, recursion {worst_rec:.2e}",
    )


# -- 2 ----------------------------------------------------------------------


def test_c02_cube_surface_identities():
    worst = 0.0
    for q in random_tensors(500, seed=102):
        for k in range(2, 7):
            tk = q.trace_power(k)
            worst = max(worst, abs(cube_surface_moment(q, k) - 2 * tk) / max(abs(2 * tk), 1e-12))
        rp = cube_surface_rp(q)
        ref = 6 * q.trace_power(2) + 4
        worst = max(worst, abs(rp - ref) / abs(ref))
    report(2, "unit-cube surface identities", worst < 1e-12, f"max rel err {worst:.2e}")


# -- 3 ----------------------------------------------------------------------


def test_c03_homogenised_form_equivalence():
    a, a1, b, b1, c, c1 = 0.3, 1.1, 0.2, 0.9, 0.5, 1.7
    gen_coeffs = (0.4, -0.1, 0.3, 0.05, 0.2)
    worst = 0.0
    for q in random_tensors(500, seed=103):
        pairs = [
            (
                f_hom_general(q, LdgSurface(a, a1, b, b1, c, c1, p=1.4), 1.4, 1.4, 1.4),
                f_hom_ldg(q, a, a1, b, b1, c, c1),
            ),
            (
                f_hom_general(q, RpSurface(a, a1, p=1.2), 1.2, 1.2, 1.2),
                f_hom_rp(q, a, a1, include_constant=True),
            ),
            (
                f_hom_general(q, GenSurface(gen_coeffs, p=1.0), 1.0, 1.0, 1.0),
                f_hom_gen(q, (), gen_coeffs),
            ),
            (
                f_hom_general(q, AsymSurface(a, a1, b, b1, c, c1, 1.0, 2.0, 3.0), 1.0, 2.0, 3.0),
                f_hom_asym(q, a, a1, b, b1, c, c1, 1.0, 2.0, 3.0),
            ),
        ]
        for got, want in pairs:
            worst = max(worst, abs(got - want) / max(abs(want), 1e-12))
    rng = np.random.default_rng(104)
    exact_ok = True
    for _ in range(20):
        p, qf, r = (
            Fraction(int(rng.integers(1, 13)), int(rng.integers(1, 5))) + 1 for _ in range(3)
        )
        a_diag, b_diag, omega = asym_matrices_exact(p, qf, r)
        exact_ok &= sum(a_diag) == 0
        exact_ok &= all(bb == omega + aa for aa, bb in zip(a_diag, b_diag))
    report(
        3,
        "closed homogenised forms vs face integrals",
        worst < 1e-12 and exact_ok,
        f"max rel err {worst:.2e}; 20 rational triples exact: {exact_ok}",
    )


# -- 4 ----------------------------------------------------------------------


def _brute_force_counts(box, eps):
    eps_f = Fraction(str(eps))
    lo = [Fraction(str(v)) for v in box.lo]
    hi = [Fraction(str(v)) for v in box.hi]
    axes = []
    for d in range(3):
        lo_i, hi_i = (lo[d] + eps_f) / eps_f, (hi[d] - eps_f) / eps_f
        axes.append(
            [i for i in range(int(math.floor(lo_i)) - 2, int(math.ceil(hi_i)) + 3) if lo_i <= i <= hi_i]
        )
    pts = set(itertools.product(*axes))
    conns = [0, 0, 0]
    for axis in range(3):
        step = np.zeros(3, dtype=int)
        step[axis] = 1
        conns[axis] = sum(1 for p in pts if tuple(np.add(p, step)) in pts)
    nbrs = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    full = sum(1 for p in pts if all(tuple(np.add(p, s)) in pts for s in nbrs))
    return len(pts), tuple(conns), full


def _voxel_classification_volume(sc, n=128, sub=2, seed=2024):
    """Occupancy fraction on an n^3 voxel grid, each voxel probed with
    sub^3 stratified jittered sample points (deterministic seed)."""
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    total_hits = 0
    n_pts = 0
    for ix in range(0, n, 16):
        nx = min(16, n - ix)
        base = np.stack(
            np.meshgrid(
                np.arange(ix, ix + nx), np.arange(n), np.arange(n), indexing="ij"
            ),
            axis=-1,
        ).reshape(-1, 3).astype(float)
        for sx in range(sub):
            for sy in range(sub):
                for sz in range(sub):
                    offs = (np.array([sx, sy, sz]) + rng.random((base.shape[0], 3))) / sub
                    pts = (base + offs) * h
                    total_hits += int(np.sum(sc.classify_points(pts) != 0))
                    n_pts += pts.shape[0]
    return total_hits / n_pts


def test_c04_scaffold_combinatorics_and_volume():
    details = []
    ok = True
    for eps in (0.25, 0.2, 0.125):
        sc = build_scaffold(ScaffoldParams(eps, 1.25, domain=UNIT))
        n, conns, full = _brute_force_counts(UNIT, eps)
        c = sc.counts
        counts_ok = (
            c.N_eps == n
            and (c.X_eps, c.Y_eps, c.Z_eps) == conns
            and c.N_eps_1 == full
            and c.N_eps_2 == n - full
        )
        vox = _voxel_classification_volume(sc)
        vol_ok = abs(vox - sc.volume()) / sc.volume() < 0.03
        ok &= counts_ok and vol_ok
        details.append(
            f"eps={eps}: counts {'ok' if counts_ok else 'MISMATCH'}, "
            f"voxel vol {vox:.5f} vs analytic {sc.volume():.5f} "
            f"({abs(vox - sc.volume()) / sc.volume():.2%})"
        )
    report(4, "scaffold combinatorics + voxel volume", ok, "; ".join(details))


# -- 5 ----------------------------------------------------------------------

BIG = Box((0.0, 0.0, 0.0), (10.0, 10.0, 10.0))
SWEEP = (0.25, 0.2, 0.125, 0.1)


@pytest.mark.parametrize("alpha", [1.25, 1.4])
def test_c05_volume_slope_band(alpha):
    rep = study_volume(SweepConfig(eps_list=SWEEP, alpha=alpha, domain=BIG))
    fit = rep.fits["volume"]
    report(
        5,
        f"scaffold volume slope (alpha={alpha})",
        fit["passed"],
        f"measured {fit['slope']:.3f} vs 2(alpha-1)={fit['expected']:.2f} +- {fit['tol']}; "
        "the connector volume carries a (1 - eps^(alpha-1)) factor that is far "
        "from 1 on this sweep, so the limiting exponent is not yet visible",
    )


@pytest.mark.parametrize("alpha", [1.25, 1.4])
def test_c05_outer_area_slope_and_scaled_surface(alpha):
    rep = study_volume(SweepConfig(eps_list=SWEEP, alpha=alpha, domain=BIG))
    fit = rep.fits["area_S"]
    bounded = next(c for c in rep.checks if c["name"] == "scaled_surface_bounded")
    ok = fit["passed"] and bounded["passed"]
    report(
        5,
        f"outer-face area slope + bounded scaled surface (alpha={alpha})",
        ok,
        f"area_S slope {fit['slope']:.3f} vs {fit['expected']:.2f} +- {fit['tol']}; "
        f"scaled surface {bounded['detail']}",
    )


# -- 6 ----------------------------------------------------------------------


def test_c06_flat_norm():
    cfg = SweepConfig(eps_list=SWEEP, alpha=1.25, domain=Box((0, 0, 0), (4, 4, 4)))
    rep = study_flat_norm(cfg, min_slope=0.85)
    lam = rep.meta["lambda_flat"]
    bound_ok = all(r["max_disc"] <= lam * r["eps"] * (1 + 1e-12) for r in rep.rows)
    slope = rep.fits["max_disc"]["slope"]
    report(
        6,
        "flat-norm discrepancy",
        slope >= 0.85 and bound_ok,
        f"slope {slope:.3f} >= 0.85, lambda_flat {lam:.3f}, linear bound holds: {bound_ok}",
    )


# -- 7 ----------------------------------------------------------------------

J_DOMAIN = Box((0.0, 0.0, 0.0), (2.0, 2.0, 2.0))


def test_c07_symmetric_order_and_monotonicity():
    details = []
    ok = True
    for alpha in (1.25, 1.4):
        cfg = SweepConfig(eps_list=SWEEP, alpha=alpha, domain=J_DOMAIN)
        rep = study_j_convergence(cfg, expected_order=1.0, order_tol=0.2)
        slope = rep.fits["err_T"]["slope"]
        mono = next(c for c in rep.checks if c["name"] == "monotone_decrease")["passed"]
        envelope = slope >= (alpha - 1.0) / 3.0 - 0.05
        ok &= rep.fits["err_T"]["passed"] and mono and envelope
        details.append(f"alpha={alpha}: order {slope:.3f} (band 1.0+-0.2), monotone {mono}")
    report(7, "symmetric connector-energy convergence", ok, "; ".join(details))


@pytest.mark.parametrize("alpha", [1.25, 1.4])
def test_c07_asymmetric_order_band(alpha):
    cfg = SweepConfig(eps_list=SWEEP, alpha=alpha, p=2.0, domain=J_DOMAIN)
    rep = study_j_convergence(cfg, expected_order=alpha - 1.0, order_tol=0.15)
    fit = rep.fits["err_T"]
    envelope = fit["slope"] >= (alpha - 1.0) / 3.0 - 0.05
    report(
        7,
        f"asymmetric (p=2) connector-energy order (alpha={alpha})",
        fit["passed"] and envelope,
        f"measured {fit['slope']:.3f} vs alpha-1={alpha - 1:.2f} +- 0.15; the dominant "
        "coefficient error delta(p-1)/(p(1-delta)) with delta=eps^(alpha-1) is order-1 "
        "on this sweep and partially cancels the coverage deficit, so the limiting "
        "exponent is not yet visible",
    )


def test_c07_outer_term_decay():
    cfg = SweepConfig(eps_list=SWEEP, alpha=1.25, domain=UNIT)
    rep = study_j_s_decay(cfg, min_slope=1.0)
    slope = rep.fits["abs_j_S"]["slope"]
    report(7, "outer-face energy decay", slope >= 1.0, f"slope {slope:.3f} >= 1.0")


# -- 8 ----------------------------------------------------------------------


def test_c08_gradient_correctness():
    rng = np.random.default_rng(108)
    elastic = ElasticParams(1.0, 0.3, 0.5)
    bulk = LdgBulk(a=-1.0, b=2.0, c=2.0)
    sm = RpSurface(a=-1.0, a_eff=0.8, p=1.0)

    # f_eps needs a lattice the 8^3 grid can resolve: eps = 0.4 on (0, 1.2)^3
    feps_box = Box((0.0, 0.0, 0.0), (1.2, 1.2, 1.2))
    sc = build_scaffold(ScaffoldParams(0.4, 1.25, domain=feps_box))
    grid_eps = Grid(feps_box, 8, 8, 8)
    grid0 = Grid(UNIT, 8, 8, 8)

    worst = 0.0
    for trial in range(10):
        for which in ("f_eps", "f_0"):
            if which == "f_eps":
                f = make_field(grid_eps, scaffold=sc, g=trig_field, init="zero")
                en = ScaffoldEnergy(elastic, bulk, sm, sc)
                free = f.free
            else:
                f = make_field(grid0, scaffold=None, g=trig_field, init="zero")
                en = HomogenisedEnergy(elastic, bulk, sm, 1.0, 1.2, 1.5)
                free = f.mask != 3
            f.values[free] += 0.4 * rng.standard_normal(f.values[free].shape)
            g = en.gradient(f)
            d = np.zeros_like(f.values)
            d[free] = rng.standard_normal(d[free].shape)
            t = 1e-5
            fp, fm = f.copy(), f.copy()
            fp.values += t * d
            fm.values -= t * d
            fd = (en.value(fp) - en.value(fm)) / (2 * t)
            an = float(np.sum(g * d))
            worst = max(worst, abs(an - fd) / max(abs(fd), 1e-12))
    report(8, "energy gradients vs central differences", worst < 1e-5, f"max rel err {worst:.2e}")


# -- 9 ----------------------------------------------------------------------


def test_c09_extension_operator():
    from nemhom.field import VoxelTag, harmonic_extension

    # exact discrete maximum principle on one representative setup
    sc = build_scaffold(ScaffoldParams(0.25, 1.25, domain=UNIT))
    grid = Grid(UNIT, 16, 16, 16)
    f = make_field(grid, scaffold=sc, g=trig_field, init="zero")
    f.values[...] = trig_field(grid.center_points())
    ext, rep = harmonic_extension(f)
    un = (f.mask == VoxelTag.SCAFFOLD_INTERIOR) | (f.mask == VoxelTag.SCAFFOLD_SURFACE)
    mp_ok = rep.converged
    for comp in range(5):
        data = ext.values[..., comp][~un]
        inside = ext.values[..., comp][un]
        mp_ok &= inside.min() >= data.min() - 1e-12 and inside.max() <= data.max() + 1e-12

    cfg = SweepConfig(eps_list=SWEEP, alpha=1.25, domain=UNIT)
    remeasure = study_extension_bound(cfg, max_variation=0.5)
    ratios = [r["ratio"] for r in remeasure.rows]
    variation = max(ratios) / min(ratios) - 1.0
    report(
        9,
        "harmonic extension bound",
        mp_ok and variation < 0.5,
        f"max principle exact: {mp_ok}; gradient-ratio variation {variation:.1%} < 50% "
        f"(ratios {[round(r, 3) for r in ratios]})",
    )


# -- 10 ---------------------------------------------------------------------


def test_c10_minimizer_convergence():
    cfg = SweepConfig(eps_list=(0.25, 0.2, 0.125), alpha=1.4, domain=UNIT)
    g = uniaxial(UniaxialSpec(0.4, (1.0, 0.0, 0.0)))
    rep = study_minimizer_convergence(
        cfg,
        ElasticParams(1.0, 0.0, 0.0),
        RpBulk(a=1.0),
        RpSurface(a=1.0, a_eff=2.0, p=1.0),
        g,
        mini=MinimizeConfig(max_iters=400, grad_tol=2e-6, step_rule="bb"),
        slack=0.10,
    )
    h1 = [r["h1_dist"] for r in rep.rows]
    gaps = [r["energy_gap"] for r in rep.rows]
    ok = all(c["passed"] for c in rep.checks)
    report(
        10,
        "extended minimisers approach the homogenised one",
        ok,
        f"H1 distances {[round(v, 4) for v in h1]} (10% slack), "
        f"energy gaps {[round(v, 4) for v in gaps]}",
    )


# -- 11 ---------------------------------------------------------------------


def test_c11_phase_tuning():
    cfg = SweepConfig(eps_list=(0.25, 0.2), alpha=1.25, domain=UNIT)
    rep = study_phase_tuning(
        cfg,
        ElasticParams(0.5, 0.0, 0.0),
        LdgBulk(a=0.2, b=6.0, c=3.0),  # homogenised critical a_eff = b^2/(24c) = 0.5
        a_eff_values=(0.2, 0.3, 0.4, 0.45, 0.55, 0.65, 0.8),
        mini=MinimizeConfig(max_iters=300, grad_tol=1e-5, step_rule="bb"),
        iso_threshold=0.05,
        nematic_rtol=0.05,
    )
    ok = all(c["passed"] for c in rep.checks)
    switch = next(c for c in rep.checks if c["name"] == "switch_within_one_step")
    report(
        11,
        "isotropic-nematic switch tuned through the surface",
        ok,
        f"{switch['detail']}; oracle tracked at 5% on the nematic side",
    )
