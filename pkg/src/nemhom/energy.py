"""Pointwise energy densities and the scaled surface functionals.

All density evaluators accept either a QTensor or an array of stacked
components (..., 5) and broadcast; surface integrals run tensor-product
Gauss-Legendre quadrature over the rectangular contact faces with a
fixed per-face summation order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .qtensor import QTensor, to_matrices

# ---------------------------------------------------------------------------
# parameter sets


@dataclass(frozen=True)
class ElasticParams:
    """Constants of the quadratic distortion energy."""

    L1: float
    L2: float
    L3: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.L1, self.L2, self.L3)):
            raise ValidationError("elastic constants must be finite")
        if self.L1 <= 0.0:
            raise ValidationError("need L1 > 0")
        if not (-self.L1 < self.L3 < 2.0 * self.L1):
            raise ValidationError("need -L1 < L3 < 2 L1")
        if self.L2 <= -0.6 * self.L1 - 0.1 * self.L3:
            raise ValidationError("need L2 > -(3/5) L1 - (1/10) L3")


def _check_poly_has_minimum(coeffs, what):
    """Sufficient local-minimum condition: even top degree, positive leading term."""
    c = list(coeffs)
    while c and c[-1] == 0.0:
        c.pop()
    if not c:
        raise ValidationError(f"{what}: all coefficients are zero")
    top_degree = len(c) + 1  # coefficients start at degree 2
    if top_degree % 2 != 0 or c[-1] <= 0.0:
        raise ValidationError(
            f"{what}: cannot certify a local minimum (need even top degree with a "
            "positive leading coefficient); inspect the polynomial numerically if "
            "it is intended"
        )
    return tuple(float(v) for v in coeffs)


@dataclass(frozen=True)
class LdgBulk:
    """a tr(Q^2) - b tr(Q^3) + c (tr Q^2)^2."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.c <= 0.0:
            raise ValidationError("quartic bulk model needs c > 0")


@dataclass(frozen=True)
class RpBulk:
    """a tr(Q^2)."""

    a: float


@dataclass(frozen=True)
class GenBulk:
    """sum_k a_k tr(Q^k); coeffs = (a_2, a_3, ...)."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "coeffs", _check_poly_has_minimum(self.coeffs, "bulk polynomial")
        )


@dataclass(frozen=True)
class LdgSurface:
    """(p/4)[(a'-a) nu.Q^2 nu - (b'-b) nu.Q^3 nu + 2(c'-c) nu.Q^4 nu].

    The primed values are the effective bulk coefficients targeted by the
    homogenised material; they are stored as a_eff, b_eff, c_eff.
    """

    a: float
    a_eff: float
    b: float
    b_eff: float
    c: float
    c_eff: float
    p: float = 1.0


@dataclass(frozen=True)
class RpSurface:
    """(p/12)(a'-a) tr(Q - Q_nu)^2 with Q_nu = nu x nu - I/3."""

    a: float
    a_eff: float
    p: float = 1.0

    def __post_init__(self):
        if self.a_eff - self.a < 0.0:
            warnings.warn(
                "negative anchoring strength (a_eff < a); admissibility is not enforced",
                stacklevel=2,
            )


@dataclass(frozen=True)
class GenSurface:
    """(p/4) sum_k b_k nu.Q^k nu; coeffs = (b_2, b_3, ...)."""

    coeffs: tuple
    p: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "coeffs", _check_poly_has_minimum(self.coeffs, "surface polynomial")
        )


@dataclass(frozen=True)
class AsymSurface:
    """1/(2 w) [(a'-a) nu.Q^2 nu - (b'-b) nu.Q^3 nu + (c'-c) nu.Q^4 nu].

    w = (2/3)(1/p + 1/q + 1/r) couples the density to the anisotropy of
    the scaffold cross sections.
    """

    a: float
    a_eff: float
    b: float
    b_eff: float
    c: float
    c_eff: float
    p: float = 1.0
    q: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if self.c <= 0.0 or self.c_eff <= 0.0:
            raise ValidationError("asymmetric surface model needs c > 0 and c_eff > 0")

    @property
    def omega(self):
        return (2.0 / 3.0) * (1.0 / self.p + 1.0 / self.q + 1.0 / self.r)


# ---------------------------------------------------------------------------
# densities


def _as_comps(q):
    if isinstance(q, QTensor):
        return q.comps, True
    c = np.asarray(q, dtype=float)
    if c.shape[-1] != 5:
        raise ValidationError("expected a QTensor or an array with 5 trailing components")
    return c, False


def f_e(grad, params):
    """Elastic density from D[i, j, k] = d Q_ij / d x_k, shape (..., 3, 3, 3)."""
    d = np.asarray(grad, dtype=float)
    t1 = np.sum(d * d, axis=(-3, -2, -1))
    rowdiv = np.trace(d, axis1=-2, axis2=-1)
    t2 = np.sum(rowdiv * rowdiv, axis=-1)
    t3 = np.sum(d * np.swapaxes(d, -1, -2), axis=(-3, -2, -1))
    out = params.L1 * t1 + params.L2 * t2 + params.L3 * t3
    return float(out) if out.ndim == 0 else out


def df_e(grad, params):
    """d f_e / d D, same shape as D."""
    d = np.asarray(grad, dtype=float)
    rowdiv = np.trace(d, axis1=-2, axis2=-1)
    out = 2.0 * params.L1 * d
    eye = np.eye(3)
    out += 2.0 * params.L2 * rowdiv[..., :, None, None] * eye
    out += 2.0 * params.L3 * np.swapaxes(d, -1, -2)
    return out


def _bulk_trace_terms(mats, model):
    t2 = np.trace(mats @ mats, axis1=-2, axis2=-1)
    if isinstance(model, RpBulk):
        return model.a * t2
    if isinstance(model, LdgBulk):
        t3 = np.trace(mats @ mats @ mats, axis1=-2, axis2=-1)
        return model.a * t2 - model.b * t3 + model.c * t2**2
    if isinstance(model, GenBulk):
        from .qtensor import trace_powers

        kmax = len(model.coeffs) + 1
        tp = trace_powers(mats, kmax)
        out = np.zeros(mats.shape[:-2])
        for i, a_k in enumerate(model.coeffs):
            out += a_k * tp[i + 2]
        return out
    raise ValidationError(f"unknown bulk model {model!r}")


def f_b(q, model):
    """Thermotropic bulk density."""
    comps, scalar = _as_comps(q)
    out = _bulk_trace_terms(to_matrices(comps), model)
    return float(out) if scalar else out


def df_b(q, model):
    """d f_b / d components, shape (..., 5)."""
    from .qtensor import matrix_powers, project_gradient

    comps, scalar = _as_comps(q)
    m = to_matrices(comps)
    if isinstance(model, RpBulk):
        g = 2.0 * model.a * m
    elif isinstance(model, LdgBulk):
        t2 = np.trace(m @ m, axis1=-2, axis2=-1)
        g = 2.0 * model.a * m - 3.0 * model.b * (m @ m) + 4.0 * model.c * t2[..., None, None] * m
    elif isinstance(model, GenBulk):
        kmax = len(model.coeffs) + 1
        pw = matrix_powers(m, kmax - 1)
        g = np.zeros_like(m)
        for i, a_k in enumerate(model.coeffs):
            k = i + 2
            g += a_k * k * pw[k - 1]
    else:
        raise ValidationError(f"unknown bulk model {model!r}")
    return project_gradient(g)


def _check_unit_normals(nu):
    n = np.asarray(nu, dtype=float)
    norms = np.linalg.norm(n, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= 1e-12):
        raise ValidationError("surface normals must be unit vectors")
    return n


def _nu_qk_nu(mats, nu, kmax):
    """nu . Q^k nu for k = 1..kmax via repeated matrix-vector products."""
    out = {}
    u = nu
    for k in range(1, kmax + 1):
        u = np.einsum("...ij,...j->...i", mats, u)
        out[k] = np.einsum("...i,...i->...", nu, u)
    return out


def f_s(q, nu, model):
    """Surface anchoring density f_s(Q, nu)."""
    comps, scalar = _as_comps(q)
    n = _check_unit_normals(nu)
    m = to_matrices(comps)
    if isinstance(m, np.ndarray) and n.ndim < m.ndim - 1:
        n = np.broadcast_to(n, m.shape[:-2] + (3,))

    if isinstance(model, RpSurface):
        qnu = np.einsum("...i,...j->...ij", n, n) - np.eye(3) / 3.0
        diff = m - qnu
        val = (model.p / 12.0) * (model.a_eff - model.a) * np.einsum(
            "...ij,...ij->...", diff, diff
        )
    elif isinstance(model, LdgSurface):
        t = _nu_qk_nu(m, n, 4)
        val = (model.p / 4.0) * (
            (model.a_eff - model.a) * t[2]
            - (model.b_eff - model.b) * t[3]
            + 2.0 * (model.c_eff - model.c) * t[4]
        )
    elif isinstance(model, GenSurface):
        kmax = len(model.coeffs) + 1
        t = _nu_qk_nu(m, n, kmax)
        val = np.zeros(m.shape[:-2])
        for i, b_k in enumerate(model.coeffs):
            val += b_k * t[i + 2]
        val *= model.p / 4.0
    elif isinstance(model, AsymSurface):
        t = _nu_qk_nu(m, n, 4)
        val = (1.0 / (2.0 * model.omega)) * (
            (model.a_eff - model.a) * t[2]
            - (model.b_eff - model.b) * t[3]
            + (model.c_eff - model.c) * t[4]
        )
    else:
        raise ValidationError(f"unknown surface model {model!r}")
    return float(val) if scalar else val


def df_s(q, nu, model):
    """d f_s / d components, shape (..., 5)."""
    from .qtensor import matrix_powers, project_gradient

    comps, scalar = _as_comps(q)
    n = _check_unit_normals(nu)
    m = to_matrices(comps)
    if n.ndim < m.ndim - 1:
        n = np.broadcast_to(n, m.shape[:-2] + (3,))

    if isinstance(model, RpSurface):
        qnu = np.einsum("...i,...j->...ij", n, n) - np.eye(3) / 3.0
        g = (model.p / 6.0) * (model.a_eff - model.a) * (m - qnu)
    else:
        nn = np.einsum("...i,...j->...ij", n, n)

        def dk(k, pw):
            # d(nu.Q^k nu)/dQ = sum_m Q^m (nu x nu) Q^(k-1-m)
            return sum(pw[i] @ nn @ pw[k - 1 - i] for i in range(k))

        if isinstance(model, LdgSurface):
            pw = matrix_powers(m, 3)
            g = (model.p / 4.0) * (
                (model.a_eff - model.a) * dk(2, pw)
                - (model.b_eff - model.b) * dk(3, pw)
                + 2.0 * (model.c_eff - model.c) * dk(4, pw)
            )
        elif isinstance(model, GenSurface):
            kmax = len(model.coeffs) + 1
            pw = matrix_powers(m, kmax - 1)
            g = np.zeros_like(m)
            for i, b_k in enumerate(model.coeffs):
                g += b_k * dk(i + 2, pw)
            g *= model.p / 4.0
        elif isinstance(model, AsymSurface):
            pw = matrix_powers(m, 3)
            g = (1.0 / (2.0 * model.omega)) * (
                (model.a_eff - model.a) * dk(2, pw)
                - (model.b_eff - model.b) * dk(3, pw)
                + (model.c_eff - model.c) * dk(4, pw)
            )
        else:
            raise ValidationError(f"unknown surface model {model!r}")
    return project_gradient(g)


def surface_prefactor(eps, alpha):
    """eps^(3-alpha) / (eps - eps^alpha), the scaling of the surface term."""
    if not (0.0 < eps < 1.0) or alpha <= 1.0:
        raise ValidationError("surface prefactor needs 0 < eps < 1 and alpha > 1")
    return eps ** (3.0 - alpha) / (eps - eps**alpha)


# ---------------------------------------------------------------------------
# face quadrature


@lru_cache(maxsize=None)
def _gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def face_quadrature_points(faces, quad_order):
    """Quadrature nodes and weights on each rectangle of a FaceSet.

    Returns (points (M, n^2, 3), weights (M, n^2)); weights include the
    face area scaling so that sum(weights) equals the face area.
    """
    x, w = _gauss_legendre(quad_order)
    uu, vv = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    w2 = (wu * wv).ravel()

    pts = np.repeat(faces.centers[:, None, :], uu.size, axis=1)
    for nd in range(3):
        sel = faces.axis == nd
        if not np.any(sel):
            continue
        tu, tv = sorted(d for d in range(3) if d != nd)
        pts[sel, :, tu] += faces.half_u[sel, None] * uu[None, :]
        pts[sel, :, tv] += faces.half_v[sel, None] * vv[None, :]
    weights = faces.half_u[:, None] * faces.half_v[:, None] * w2[None, :]
    return pts, weights


def integrate_f_s(faces, qfun, model, quad_order=3):
    """Per-face integrals of f_s(Q(x), nu) over a FaceSet, shape (M,)."""
    if len(faces) == 0:
        return np.zeros(0)
    pts, weights = face_quadrature_points(faces, quad_order)
    m, nq, _ = pts.shape
    comps = np.asarray(qfun(pts.reshape(-1, 3)), dtype=float).reshape(m, nq, 5)
    nu = np.repeat(faces.normals[:, None, :], nq, axis=1)
    vals = f_s(comps, nu, model)
    return np.einsum("mq,mq->m", weights, vals)


def j_eps_t(qfun, scaffold, model, params=None, quad_order=3, return_components=False):
    """Scaled surface energy over the connector lateral faces.

    The reduction is per connector axis (fixed face order, pairwise
    summation within each axis, axis results added in x, y, z order), so
    the x/y/z split sums exactly to the total.
    """
    params = params or scaffold.params
    pref = surface_prefactor(params.eps, params.alpha)
    vals = integrate_f_s(scaffold.t_faces, qfun, model, quad_order)
    parts = [pref * float(np.sum(vals[s])) for s in scaffold.t_face_axis_slices]
    total = parts[0] + parts[1] + parts[2]
    if return_components:
        return total, tuple(parts)
    return total


def j_eps_s(qfun, scaffold, model, params=None, quad_order=3):
    """Scaled surface energy over the exposed outer node faces."""
    params = params or scaffold.params
    pref = surface_prefactor(params.eps, params.alpha)
    vals = integrate_f_s(scaffold.s_faces, qfun, model, quad_order)
    return pref * float(np.sum(vals))
