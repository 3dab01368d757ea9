"""Symmetric traceless 3x3 order tensors and their exact trace algebra.

A tensor is stored through five independent components (q11, q12, q13,
q22, q23); the 33 entry is always derived as -q11-q22, so symmetry and
tracelessness hold by construction and cannot drift during long
minimisation loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Basis matrices B_m with Q = sum_m q_m B_m for the component order
# (q11, q12, q13, q22, q23).
BASIS = np.zeros((5, 3, 3))
BASIS[0, 0, 0] = 1.0
BASIS[0, 2, 2] = -1.0
BASIS[1, 0, 1] = BASIS[1, 1, 0] = 1.0
BASIS[2, 0, 2] = BASIS[2, 2, 0] = 1.0
BASIS[3, 1, 1] = 1.0
BASIS[3, 2, 2] = -1.0
BASIS[4, 1, 2] = BASIS[4, 2, 1] = 1.0


def to_matrices(comps):
    """Map component arrays (..., 5) to symmetric traceless matrices (..., 3, 3)."""
    c = np.asarray(comps, dtype=float)
    m = np.zeros(c.shape[:-1] + (3, 3))
    m[..., 0, 0] = c[..., 0]
    m[..., 1, 1] = c[..., 3]
    m[..., 2, 2] = -c[..., 0] - c[..., 3]
    m[..., 0, 1] = m[..., 1, 0] = c[..., 1]
    m[..., 0, 2] = m[..., 2, 0] = c[..., 2]
    m[..., 1, 2] = m[..., 2, 1] = c[..., 4]
    return m


def from_matrices(mats):
    """Inverse of :func:`to_matrices`; input must already be symmetric traceless."""
    m = np.asarray(mats, dtype=float)
    return np.stack(
        [m[..., 0, 0], m[..., 0, 1], m[..., 0, 2], m[..., 1, 1], m[..., 1, 2]],
        axis=-1,
    )


def project_gradient(grad_mats):
    """Project d(F)/d(Q_ij), shape (..., 3, 3), onto the five stored components.

    Accounts for the symmetric off-diagonal pairing and the derived 33 entry.
    """
    g = np.asarray(grad_mats, dtype=float)
    return np.stack(
        [
            g[..., 0, 0] - g[..., 2, 2],
            g[..., 0, 1] + g[..., 1, 0],
            g[..., 0, 2] + g[..., 2, 0],
            g[..., 1, 1] - g[..., 2, 2],
            g[..., 1, 2] + g[..., 2, 1],
        ],
        axis=-1,
    )


def matrix_powers(mats, kmax):
    """Return [I, Q, Q^2, ..., Q^kmax] for a batch of matrices (..., 3, 3)."""
    m = np.asarray(mats, dtype=float)
    eye = np.broadcast_to(np.eye(3), m.shape).copy()
    powers = [eye]
    for _ in range(kmax):
        powers.append(powers[-1] @ m)
    return powers


def trace_powers(mats, kmax):
    """Return tr(Q^k) for k = 0..kmax, shape (kmax+1, ...).

    Exact matrix products are used for k <= 4; higher powers use the
    traceless Cayley-Hamilton recursion
    tr(Q^k) = tr(Q^2) tr(Q^{k-2}) / 2 + tr(Q^3) tr(Q^{k-3}) / 3.
    """
    m = np.asarray(mats, dtype=float)
    base = m.shape[:-2]
    out = np.zeros((kmax + 1,) + base)
    out[0] = 3.0
    if kmax >= 2:
        m2 = m @ m
        out[2] = np.trace(m2, axis1=-2, axis2=-1)
    if kmax >= 3:
        m3 = m2 @ m
        out[3] = np.trace(m3, axis1=-2, axis2=-1)
    if kmax >= 4:
        out[4] = np.trace(m3 @ m, axis1=-2, axis2=-1)
    for k in range(5, kmax + 1):
        out[k] = 0.5 * out[2] * out[k - 2] + out[3] * out[k - 3] / 3.0
    return out


@dataclass(frozen=True)
class UniaxialSpec:
    """Scalar order parameter s and unit director n."""

    s: float
    n: tuple

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        if n.shape != (3,) or not np.all(np.isfinite(n)) or not math.isfinite(self.s):
            raise ValidationError("uniaxial spec needs finite s and a 3-vector n")
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-12:
            raise ValidationError(f"director must be a unit vector, |n| = {np.linalg.norm(n)}")
        object.__setattr__(self, "n", tuple(float(v) for v in n))


@dataclass(frozen=True)
class QTensor:
    """Immutable symmetric traceless 3x3 tensor; see module docstring."""

    q11: float
    q12: float
    q13: float
    q22: float
    q23: float

    def __post_init__(self):
        for name in ("q11", "q12", "q13", "q22", "q23"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValidationError(f"non-finite component {name} = {v!r}")
            object.__setattr__(self, name, float(v))

    @property
    def q33(self):
        return -self.q11 - self.q22

    @property
    def comps(self):
        return np.array([self.q11, self.q12, self.q13, self.q22, self.q23])

    def matrix(self):
        return to_matrices(self.comps)

    def trace_power(self, k):
        """tr(Q^k) for integer k >= 1; tr(Q) is identically zero."""
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise ValidationError("trace_power needs an integer k >= 1")
        if k == 1:
            return 0.0
        return float(trace_powers(self.matrix(), int(k))[int(k)])

    def eigenvalues(self):
        """Sorted eigenvalues (descending) by the closed trigonometric form."""
        t2 = self.trace_power(2)
        if t2 == 0.0:
            return (0.0, 0.0, 0.0)
        det = (
            self.q11 * (self.q22 * self.q33 - self.q23 * self.q23)
            - self.q12 * (self.q12 * self.q33 - self.q23 * self.q13)
            + self.q13 * (self.q12 * self.q23 - self.q22 * self.q13)
        )
        scale = 2.0 * math.sqrt(t2 / 6.0)
        arg = 4.0 * det / scale**3
        arg = min(1.0, max(-1.0, arg))
        phi = math.acos(arg) / 3.0
        lam1 = scale * math.cos(phi)
        lam2 = scale * math.cos(phi - 2.0 * math.pi / 3.0)
        lam3 = scale * math.cos(phi + 2.0 * math.pi / 3.0)
        return (lam1, lam2, lam3)

    def frobenius(self):
        return math.sqrt(self.trace_power(2))

    def __add__(self, other):
        return QTensor(*(self.comps + other.comps))

    def __sub__(self, other):
        return QTensor(*(self.comps - other.comps))

    def __mul__(self, c):
        return QTensor(*(self.comps * float(c)))

    __rmul__ = __mul__

    @staticmethod
    def zero():
        return QTensor(0.0, 0.0, 0.0, 0.0, 0.0)


def from_components(q11, q12, q13, q22, q23):
    """Build a QTensor, rejecting non-finite input."""
    return QTensor(q11, q12, q13, q22, q23)


def uniaxial(spec):
    """Q = s (n x n - I/3)."""
    n = np.asarray(spec.n)
    m = spec.s * (np.outer(n, n) - np.eye(3) / 3.0)
    return QTensor(m[0, 0], m[0, 1], m[0, 2], m[1, 1], m[1, 2])
