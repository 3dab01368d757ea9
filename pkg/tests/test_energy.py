"""Density evaluators, model validation, and face quadrature."""

import numpy as np
import pytest

from nemhom import (
    AsymSurface,
    Box,
    ElasticParams,
    GenBulk,
    GenSurface,
    LdgBulk,
    LdgSurface,
    QTensor,
    RpBulk,
    RpSurface,
    ScaffoldParams,
    UniaxialSpec,
    ValidationError,
    build_scaffold,
    f_b,
    f_e,
    f_s,
    j_eps_s,
    j_eps_t,
    surface_prefactor,
    uniaxial,
)
from nemhom.energy import df_b, df_s, integrate_f_s
from nemhom.harness import constant_field, trig_field

UNIT = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def rand_rotation(rng):
    a = rng.standard_normal((3, 3))
    q, _ = np.linalg.qr(a)
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def test_elastic_params_validation():
    ElasticParams(1.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        ElasticParams(-1.0, 0.0, 0.0)
    with pytest.raises(ValidationError):
        ElasticParams(1.0, 0.0, 2.5)
    with pytest.raises(ValidationError):
        ElasticParams(1.0, -0.7, 0.0)


def test_f_e_zero_and_one_constant():
    ep = ElasticParams(2.0, 0.0, 0.0)
    assert f_e(np.zeros((3, 3, 3)), ep) == 0.0
    rng = np.random.default_rng(0)
    from nemhom.qtensor import BASIS

    dc = rng.standard_normal((5, 3))
    d = np.einsum("mk,mij->ijk", dc, BASIS)
    assert f_e(d, ep) == pytest.approx(2.0 * float(np.sum(d * d)), rel=1e-14)


def test_f_e_positive_definite_random():
    """Coercivity: min Rayleigh quotient stays positive over random valid params."""
    rng = np.random.default_rng(1)
    from nemhom.qtensor import BASIS

    for _ in range(10):
        L1 = rng.uniform(0.2, 3.0)
        L3 = rng.uniform(-0.99, 1.99) * L1
        L2 = rng.uniform(-0.99 * (0.6 * L1 + 0.1 * L3), 2.0 * L1)
        ep = ElasticParams(L1, L2, L3)
        dc = rng.standard_normal((1000, 5, 3))
        d = np.einsum("nmk,mij->nijk", dc, BASIS)
        vals = f_e(d, ep)
        nrm = np.sum(d * d, axis=(1, 2, 3))
        assert np.min(vals / nrm) > 0.0


def test_f_b_models():
    q = uniaxial(UniaxialSpec(1.0, (1, 0, 0)))
    assert f_b(QTensor.zero(), LdgBulk(1.0, 1.0, 1.0)) == 0.0
    assert f_b(q, LdgBulk(1.0, 0.0, 1e-12)) == pytest.approx(2 / 3, rel=1e-9)
    assert f_b(q, GenBulk((1.0, 0.0, 1.0))) == pytest.approx(2 / 3 + 2 / 9, rel=1e-13)
    assert f_b(q, RpBulk(2.0)) == pytest.approx(4 / 3, rel=1e-13)


def test_gen_model_minimum_certification():
    GenBulk((1.0, 0.5, 2.0))  # quartic with positive leading term
    with pytest.raises(ValidationError):
        GenBulk((1.0, 0.5))  # cubic top degree
    with pytest.raises(ValidationError):
        GenBulk((1.0, 0.5, -2.0))  # negative leading term
    with pytest.raises(ValidationError):
        GenSurface((0.0, 0.0, 0.0))
    # trailing zeros are stripped before the degree check
    GenSurface((1.0, 0.5, 2.0, 0.0))


def test_rp_surface_negative_anchoring_warns():
    with pytest.warns(UserWarning):
        RpSurface(a=1.0, a_eff=0.5, p=1.0)


def test_asym_surface_validation():
    with pytest.raises(ValidationError):
        AsymSurface(0.0, 1.0, 0.0, 1.0, -1.0, 1.0)
    m = AsymSurface(0.0, 1.0, 0.0, 1.0, 1.0, 2.0, p=1.0, q=2.0, r=3.0)
    assert m.omega == pytest.approx((2 / 3) * (1 + 0.5 + 1 / 3), rel=1e-14)


def test_f_s_rp_attained_at_anchor():
    nu = np.array([0.0, 0.0, 1.0])
    qn = QTensor(-1 / 3, 0.0, 0.0, -1 / 3, 0.0)  # nu x nu - I/3 for nu = e3
    assert f_s(qn, nu, RpSurface(a=0.0, a_eff=2.0)) == pytest.approx(0.0, abs=1e-15)


def test_f_s_ldg_axis_value():
    q = uniaxial(UniaxialSpec(1.0, (1, 0, 0)))
    sm = LdgSurface(a=0.0, a_eff=4.0, b=0.0, b_eff=0.0, c=1.0, c_eff=1.0, p=1.0)
    # (1/4) * 4 * (e1 . Q^2 e1) with Q^2 = diag(4/9, 1/9, 1/9)
    assert f_s(q, np.array([1.0, 0, 0]), sm) == pytest.approx(4 / 9, rel=1e-13)


def test_f_s_even_in_nu():
    rng = np.random.default_rng(2)
    models = [
        LdgSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.3),
        RpSurface(0.0, 1.0, p=1.1),
        GenSurface((0.5, -0.2, 0.3, 0.1, 1.0), p=1.2),
        AsymSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.0, q=2.0, r=1.5),
    ]
    for _ in range(20):
        q = QTensor(*rng.uniform(-1, 1, 5))
        nu = rng.standard_normal(3)
        nu /= np.linalg.norm(nu)
        for m in models:
            if isinstance(m, RpSurface):
                continue  # Q_nu is even in nu anyway, covered below
            assert f_s(q, nu, m) == pytest.approx(f_s(q, -nu, m), rel=1e-12, abs=1e-15)
        assert f_s(q, nu, models[1]) == pytest.approx(f_s(q, -nu, models[1]), rel=1e-12)


def test_f_s_frame_indifference():
    """f_s(R Q R^T, R nu) = f_s(Q, nu) for the nu . Q^k nu models."""
    rng = np.random.default_rng(3)
    models = [
        LdgSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.3),
        GenSurface((0.5, -0.2, 0.3, 0.1, 1.0), p=1.2),
        RpSurface(0.0, 1.0, p=1.1),
        AsymSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.0, q=2.0, r=1.5),
    ]
    for _ in range(50):
        q = QTensor(*rng.uniform(-1, 1, 5))
        nu = rng.standard_normal(3)
        nu /= np.linalg.norm(nu)
        rot = rand_rotation(rng)
        mrot = rot @ q.matrix() @ rot.T
        qrot = QTensor(mrot[0, 0], mrot[0, 1], mrot[0, 2], mrot[1, 1], mrot[1, 2])
        nurot = rot @ nu
        nurot /= np.linalg.norm(nurot)
        for m in models:
            assert f_s(qrot, nurot, m) == pytest.approx(f_s(q, nu, m), rel=1e-10, abs=1e-12)


def test_f_s_rejects_non_unit_normal():
    with pytest.raises(ValidationError):
        f_s(QTensor.zero(), np.array([1.0, 1.0, 0.0]), RpSurface(0.0, 1.0))


def test_df_b_df_s_match_finite_differences():
    rng = np.random.default_rng(4)
    bulks = [LdgBulk(-0.5, 2.0, 1.5), RpBulk(0.7), GenBulk((0.3, -0.4, 0.2, 0.1, 0.6))]
    surfs = [
        LdgSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.3),
        RpSurface(0.0, 1.0, p=1.1),
        GenSurface((0.5, -0.2, 0.3, 0.1, 1.0), p=1.2),
        AsymSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.0, q=2.0, r=1.5),
    ]
    t = 1e-6
    for _ in range(10):
        c = rng.uniform(-1, 1, 5)
        nu = rng.standard_normal(3)
        nu /= np.linalg.norm(nu)
        for bm in bulks:
            g = df_b(c, bm)
            for m in range(5):
                e = np.zeros(5)
                e[m] = t
                fd = (f_b(c + e, bm) - f_b(c - e, bm)) / (2 * t)
                assert g[m] == pytest.approx(fd, rel=2e-6, abs=1e-9)
        for sm in surfs:
            g = df_s(c, nu, sm)
            for m in range(5):
                e = np.zeros(5)
                e[m] = t
                fd = (f_s(c + e, nu, sm) - f_s(c - e, nu, sm)) / (2 * t)
                assert g[m] == pytest.approx(fd, rel=2e-6, abs=1e-9)


def test_surface_prefactor():
    assert surface_prefactor(0.25, 1.25) == pytest.approx(
        0.25**1.75 / (0.25 - 0.25**1.25), rel=1e-14
    )
    assert surface_prefactor(0.5, 1.4) > 0
    with pytest.raises(ValidationError):
        surface_prefactor(1.5, 1.25)
    with pytest.raises(ValidationError):
        surface_prefactor(0.25, 0.9)


def test_j_eps_t_constant_field_rp():
    params = ScaffoldParams(0.25, 1.25, domain=UNIT)
    sc = build_scaffold(params)
    sm = RpSurface(a=0.0, a_eff=12.0, p=1.0)  # a_eff - a = 12 / p
    val = j_eps_t(constant_field(QTensor.zero()), sc, sm)
    pref = surface_prefactor(0.25, 1.25)
    area_t, area_s = sc.surface_areas()
    assert val == pytest.approx(pref * area_t * (2 / 3), rel=1e-12)
    vs = j_eps_s(constant_field(QTensor.zero()), sc, sm)
    assert vs == pytest.approx(pref * area_s * (2 / 3), rel=1e-12)


def test_j_eps_t_constant_independent_of_quad_order():
    params = ScaffoldParams(0.2, 1.3, domain=UNIT)
    sc = build_scaffold(params)
    q = uniaxial(UniaxialSpec(0.7, (0, 1, 0)))
    sm = LdgSurface(0.1, 1.0, 0.2, 0.7, 0.5, 1.5, p=1.0)
    vals = [j_eps_t(constant_field(q), sc, sm, quad_order=o) for o in (1, 2, 3, 5)]
    for v in vals[1:]:
        assert v == pytest.approx(vals[0], rel=1e-13)


def test_j_eps_t_axis_additivity_exact():
    params = ScaffoldParams(0.2, 1.3, p=1.5, q=1.0, r=2.0, domain=UNIT)
    sc = build_scaffold(params)
    sm = RpSurface(a=0.0, a_eff=1.0, p=1.5)
    total, parts = j_eps_t(trig_field, sc, sm, return_components=True)
    assert total == parts[0] + parts[1] + parts[2]


def test_quadrature_exact_for_low_degree_fields():
    """Order-3 Gauss-Legendre integrates quadratic-in-position fields exactly."""
    params = ScaffoldParams(0.25, 1.25, domain=UNIT)
    sc = build_scaffold(params)

    def poly_field(pts):
        x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
        out = np.zeros(pts.shape[:-1] + (5,))
        out[..., 0] = 0.3 * x**2 - 0.1 * y * z
        out[..., 1] = 0.2 * x * y
        out[..., 2] = 0.1 * z**2
        out[..., 3] = -0.2 * y**2 + 0.05 * x
        out[..., 4] = 0.15 * x * z
        return out

    sm = RpSurface(a=0.0, a_eff=1.0, p=1.0)
    faces = sc.t_faces
    v3 = integrate_f_s(faces, poly_field, sm, quad_order=3)
    v8 = integrate_f_s(faces, poly_field, sm, quad_order=8)
    assert np.allclose(v3, v8, rtol=1e-12, atol=1e-16)


def test_empty_face_set_integral():
    params = ScaffoldParams(0.25, 1.25, domain=UNIT)
    sc = build_scaffold(params)
    from nemhom.scaffold import FaceSet

    empty = FaceSet.concatenate([])
    assert integrate_f_s(empty, trig_field, RpSurface(0.0, 1.0)).size == 0
