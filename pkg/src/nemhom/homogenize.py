"""Effective (homogenised) densities and the unit-cube face identities.

The face integrals over the unit cube are evaluated analytically (the
normal is constant on each face and each face has unit area); quadrature
enters only through the volume functional j_0 and the cross-checking
tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .energy import RpSurface, f_s
from .errors import ValidationError
from .qtensor import QTensor, to_matrices, trace_powers

_AXES = np.eye(3)


def psi(q, axis, model):
    """Integral of f_s(Q, .) over the two unit-cube faces normal to `axis`."""
    if axis not in (0, 1, 2):
        raise ValidationError("axis must be 0, 1 or 2")
    e = _AXES[axis]
    return f_s(q, e, model) + f_s(q, -e, model)


def f_hom_general(q, model, p, q_factor, r):
    """Face-integral form of the homogenised surface density.

    (q+r)/(qr) Psi^X + (p+r)/(pr) Psi^Y + (p+q)/(pq) Psi^Z with the
    anisotropy factors (p, q, r) of the scaffold cross sections.
    """
    qf = q_factor
    return (
        (qf + r) / (qf * r) * psi(q, 0, model)
        + (p + r) / (p * r) * psi(q, 1, model)
        + (p + qf) / (p * qf) * psi(q, 2, model)
    )


def f_hom_sym(q, model, p):
    """Symmetric reduction (2/p) * integral of f_s over the whole cube surface."""
    return (2.0 / p) * (psi(q, 0, model) + psi(q, 1, model) + psi(q, 2, model))


def _traces(q, kmax):
    if isinstance(q, QTensor):
        return [q.trace_power(k) if k >= 1 else 3.0 for k in range(kmax + 1)], True
    mats = to_matrices(np.asarray(q, dtype=float))
    tp = trace_powers(mats, kmax)
    return [tp[k] for k in range(kmax + 1)], False


def f_hom_ldg(q, a, a_eff, b, b_eff, c, c_eff):
    """(a'-a) tr(Q^2) - (b'-b) tr(Q^3) + (c'-c) (tr Q^2)^2."""
    t, scalar = _traces(q, 3)
    out = (a_eff - a) * t[2] - (b_eff - b) * t[3] + (c_eff - c) * t[2] ** 2
    return float(out) if scalar else out


def f_hom_rp(q, a, a_eff, include_constant=False):
    """(a'-a) tr(Q^2), optionally keeping the additive constant (2/3)(a'-a)."""
    t, scalar = _traces(q, 2)
    out = (a_eff - a) * t[2]
    if include_constant:
        out = out + (2.0 / 3.0) * (a_eff - a)
    return float(out) if scalar else out


def f_hom_gen(q, bulk_coeffs, surface_coeffs):
    """Merged-coefficient polynomial sum_k c_k tr(Q^k).

    c_k adds the bulk and surface coefficients where both exist and keeps
    the single available one beyond the shorter range.
    """
    na, nb = len(bulk_coeffs), len(surface_coeffs)
    kmax = max(na, nb) + 1
    t, scalar = _traces(q, kmax)
    out = 0.0
    for i in range(max(na, nb)):
        c_k = (bulk_coeffs[i] if i < na else 0.0) + (surface_coeffs[i] if i < nb else 0.0)
        out = out + c_k * t[i + 2]
    return float(out) if scalar else out


@dataclass(frozen=True)
class AsymMatrices:
    """Alignment-bias matrices of the anisotropic scaffold; tr A = 0, B = w I + A."""

    A: np.ndarray
    B: np.ndarray
    omega: float


def asym_matrices(p, q, r):
    """Diagonal matrices A, B and scalar w from the anisotropy factors."""
    a = np.diag(
        [
            (-2.0 / p + 1.0 / q + 1.0 / r) / 3.0,
            (1.0 / p - 2.0 / q + 1.0 / r) / 3.0,
            (1.0 / p + 1.0 / q - 2.0 / r) / 3.0,
        ]
    )
    b = np.diag([1.0 / q + 1.0 / r, 1.0 / p + 1.0 / r, 1.0 / p + 1.0 / q])
    omega = (2.0 / 3.0) * (1.0 / p + 1.0 / q + 1.0 / r)
    return AsymMatrices(A=a, B=b, omega=omega)


def asym_matrices_exact(p, q, r):
    """Rational-arithmetic variant; returns diagonals of A and B plus w as Fractions."""
    p, q, r = Fraction(p), Fraction(q), Fraction(r)
    third = Fraction(1, 3)
    a_diag = (
        third * (-2 / p + 1 / q + 1 / r),
        third * (1 / p - 2 / q + 1 / r),
        third * (1 / p + 1 / q - 2 / r),
    )
    b_diag = (1 / q + 1 / r, 1 / p + 1 / r, 1 / p + 1 / q)
    omega = Fraction(2, 3) * (1 / p + 1 / q + 1 / r)
    return a_diag, b_diag, omega


def f_hom_asym(q, a, a_eff, b, b_eff, c, c_eff, p, q_factor, r, quartic="tr_q4"):
    """Homogenised density for the anisotropic scaffold.

    Isotropic part plus (1/w) tr(A Q^k) corrections. The isotropic quartic
    is tr(Q^4) by default; quartic="tr_q2_squared" rewrites it through the
    identity 2 tr(Q^4) = (tr Q^2)^2.
    """
    if quartic not in ("tr_q4", "tr_q2_squared"):
        raise ValidationError("quartic must be 'tr_q4' or 'tr_q2_squared'")
    mats_obj = asym_matrices(p, q_factor, r)
    comps_scalar = isinstance(q, QTensor)
    m = to_matrices(q.comps if comps_scalar else np.asarray(q, dtype=float))
    m2 = m @ m
    m3 = m2 @ m
    m4 = m3 @ m
    t2 = np.trace(m2, axis1=-2, axis2=-1)
    t3 = np.trace(m3, axis1=-2, axis2=-1)
    t4 = 0.5 * t2**2 if quartic == "tr_q2_squared" else np.trace(m4, axis1=-2, axis2=-1)
    iso = (a_eff - a) * t2 - (b_eff - b) * t3 + (c_eff - c) * t4

    def tr_a(mk):
        return np.einsum("ij,...ji->...", mats_obj.A, mk)

    aniso = (1.0 / mats_obj.omega) * (
        (a_eff - a) * tr_a(m2) - (b_eff - b) * tr_a(m3) + (c_eff - c) * tr_a(m4)
    )
    out = iso + aniso
    return float(out) if comps_scalar else out


def cube_surface_moment(q, k):
    """Integral of nu . Q^k nu over the unit-cube surface, by face summation."""
    if not isinstance(k, (int, np.integer)) or k < 2:
        raise ValidationError("cube_surface_moment needs integer k >= 2")
    m = q.matrix() if isinstance(q, QTensor) else to_matrices(np.asarray(q, dtype=float))
    total = 0.0
    for axis in range(3):
        for sign in (+1.0, -1.0):
            nu = sign * _AXES[axis]
            u = nu.copy()
            for _ in range(int(k)):
                u = m @ u
            total += float(nu @ u)  # each face has unit area
    return total


def cube_surface_rp(q):
    """Integral of tr(Q - Q_nu)^2 over the unit-cube surface, by face summation."""
    m = q.matrix() if isinstance(q, QTensor) else to_matrices(np.asarray(q, dtype=float))
    total = 0.0
    for axis in range(3):
        for sign in (+1.0, -1.0):
            nu = sign * _AXES[axis]
            qnu = np.outer(nu, nu) - np.eye(3) / 3.0
            diff = m - qnu
            total += float(np.sum(diff * diff))
    return total


def f_hom_density(q, model, p, q_factor, r, include_rp_constant=False):
    """Homogenised density used by the volume functionals.

    Goes through the face-integral form; for the Rapini-Papoular model the
    additive constant (the value at Q = 0) is subtracted unless asked for,
    since it does not move any minimiser. Other models are constant free.
    """
    out = f_hom_general(q, model, p, q_factor, r)
    if isinstance(model, RpSurface) and not include_rp_constant:
        out = out - _rp_constant_general(model, p, q_factor, r)
    return out


def df_hom_density(q, model, p, q_factor, r):
    """d f_hom_density / d components; additive constants do not contribute."""
    from .energy import df_s

    qf = q_factor
    coef = ((qf + r) / (qf * r), (p + r) / (p * r), (p + qf) / (p * qf))
    out = 0.0
    for axis in range(3):
        e = _AXES[axis]
        out = out + coef[axis] * (df_s(q, e, model) + df_s(q, -e, model))
    return out


def _rp_constant_general(model, p, q_factor, r):
    """Additive constant of the face-integral RP density (its value at Q = 0)."""
    zero = np.zeros(5)
    return float(f_hom_general(zero, model, p, q_factor, r))


def j_0(qfun, model, p, q_factor, r, domain, cells=16, order=1, include_rp_constant=True):
    """Volume integral of the homogenised density over the full domain box.

    Uniform cell subdivision with tensor Gauss-Legendre points per cell;
    order=1 is the midpoint rule. The face-integral density is used, so
    for the Rapini-Papoular model the additive constant is present unless
    include_rp_constant is False.
    """
    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)
    x, w = np.polynomial.legendre.leggauss(order)
    axes, wts = [], []
    for d in range(3):
        edges = np.linspace(lo[d], hi[d], cells + 1)
        half = 0.5 * (edges[1] - edges[0])
        mids = 0.5 * (edges[:-1] + edges[1:])
        axes.append((mids[:, None] + half * x[None, :]).ravel())
        wts.append(np.tile(w * half, cells))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    wx, wy, wz = np.meshgrid(*wts, indexing="ij")
    weights = (wx * wy * wz).ravel()
    comps = np.asarray(qfun(pts), dtype=float)
    dens = f_hom_general(comps, model, p, q_factor, r)
    total = float(np.dot(weights, dens))
    if isinstance(model, RpSurface) and not include_rp_constant:
        total -= _rp_constant_general(model, p, q_factor, r) * float(domain.volume)
    return total
