"""Deterministic construction of the cubic microlattice inside a box domain.

The lattice lives in integer index space (a point is i*eps per axis), so
two builds with identical parameters are identical bit for bit and float
equality is never tested. Inclusion at the distance-eps criterion uses a
1e-9 index-space slack so that decimal spacings such as 0.2 land on the
intended integer ranges.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np

from .errors import EmptyLatticeError, ValidationError

_INDEX_SLACK = 1e-9


class Material(IntEnum):
    LIQUID_CRYSTAL = 0
    SCAFFOLD_NODE = 1
    SCAFFOLD_CONNECTOR = 2


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its two corners."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValidationError("box corners must be 3-vectors")
        if not all(math.isfinite(v) for v in lo + hi):
            raise ValidationError("box corners must be finite")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValidationError(f"degenerate box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self):
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self):
        sx, sy, sz = self.size
        return sx * sy * sz

    def contains(self, pts):
        p = np.asarray(pts, dtype=float)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((p >= lo) & (p <= hi), axis=-1)


@dataclass(frozen=True)
class ScaffoldParams:
    """Spacing eps, thickness exponent alpha, anisotropy factors and domain."""

    eps: float
    alpha: float
    p: float = 1.0
    q: float = 1.0
    r: float = 1.0
    domain: Box = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValidationError(f"eps must lie in (0, 1), got {self.eps}")
        if not (1.0 < self.alpha < 1.5):
            raise ValidationError(f"alpha must satisfy 1 < alpha < 3/2, got {self.alpha}")
        if min(self.p, self.q, self.r) < 1.0:
            raise ValidationError("anisotropy factors p, q, r must be >= 1")
        if self.eps ** (self.alpha - 1.0) >= min(self.p, self.q, self.r):
            raise ValidationError(
                "need eps^(alpha-1) < min(p, q, r); the connectors would be degenerate"
            )

    @property
    def pqr(self):
        return (self.p, self.q, self.r)

    @property
    def node_half(self):
        """Half extents of a node box along x, y, z."""
        ea = self.eps**self.alpha
        return (ea / (2.0 * self.p), ea / (2.0 * self.q), ea / (2.0 * self.r))

    def connector_long_half(self, axis):
        """Half length of a connector along its own axis."""
        ea = self.eps**self.alpha
        f = self.pqr[axis]
        return (f * self.eps - ea) / (2.0 * f)


@dataclass(frozen=True)
class ScaffoldCounts:
    N_eps: int
    X_eps: int
    Y_eps: int
    Z_eps: int
    N_eps_1: int
    N_eps_2: int


@dataclass(frozen=True)
class FaceSet:
    """Axis-aligned rectangles stored as arrays.

    For face m, `axis[m]` is the normal direction, `sign[m]` its
    orientation, and (half_u, half_v) the half extents along the two
    tangent axes taken in increasing axis order.
    """

    centers: np.ndarray  # (M, 3)
    axis: np.ndarray  # (M,) int, normal axis
    sign: np.ndarray  # (M,) -1 or +1
    half_u: np.ndarray  # (M,)
    half_v: np.ndarray  # (M,)

    def __len__(self):
        return self.centers.shape[0]

    @property
    def areas(self):
        return 4.0 * self.half_u * self.half_v

    @property
    def normals(self):
        nu = np.zeros((len(self), 3))
        nu[np.arange(len(self)), self.axis] = self.sign
        return nu

    def tangent_axes(self):
        u = np.where(self.axis == 0, 1, 0)
        v = np.where(self.axis == 2, 1, 2)
        return u, v

    @staticmethod
    def concatenate(parts):
        parts = [f for f in parts if len(f) > 0]
        if not parts:
            return FaceSet(
                np.zeros((0, 3)), np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros(0)
            )
        return FaceSet(
            np.concatenate([f.centers for f in parts]),
            np.concatenate([f.axis for f in parts]),
            np.concatenate([f.sign for f in parts]),
            np.concatenate([f.half_u for f in parts]),
            np.concatenate([f.half_v for f in parts]),
        )


def _index_range(lo, hi, eps):
    """Integer i with i*eps at distance >= eps from both interval ends."""
    i0 = math.ceil((lo + eps) / eps - _INDEX_SLACK)
    i1 = math.floor((hi - eps) / eps + _INDEX_SLACK)
    return i0, i1


def build_lattice(params):
    """All points of eps * Z^3 at distance >= eps from the domain boundary."""
    return build_scaffold(params).node_centers


class Scaffold:
    """Realized microlattice: node boxes plus axis connectors.

    For a box domain the admissible index set is a full integer cuboid,
    so counts are exact closed forms and neighbor tests reduce to range
    checks. Face sets are materialized lazily.
    """

    def __init__(self, params):
        self.params = params
        ranges = [
            _index_range(lo, hi, params.eps) for lo, hi in zip(params.domain.lo, params.domain.hi)
        ]
        if any(i1 < i0 for i0, i1 in ranges):
            raise EmptyLatticeError(
                f"domain {params.domain.lo}..{params.domain.hi} admits no lattice point "
                f"at eps = {params.eps}"
            )
        self.i_lo = tuple(i0 for i0, _ in ranges)
        self.i_hi = tuple(i1 for _, i1 in ranges)
        self.shape = tuple(i1 - i0 + 1 for i0, i1 in ranges)

    # -- counts ---------------------------------------------------------

    @property
    def counts(self):
        nx, ny, nz = self.shape
        interior = max(nx - 2, 0) * max(ny - 2, 0) * max(nz - 2, 0)
        total = nx * ny * nz
        return ScaffoldCounts(
            N_eps=total,
            X_eps=(nx - 1) * ny * nz,
            Y_eps=nx * (ny - 1) * nz,
            Z_eps=nx * ny * (nz - 1),
            N_eps_1=interior,
            N_eps_2=total - interior,
        )

    def connector_count(self, axis):
        return (self.counts.X_eps, self.counts.Y_eps, self.counts.Z_eps)[axis]

    # -- geometry -------------------------------------------------------

    def _index_grid(self, shape, lo):
        grids = np.meshgrid(
            *[np.arange(l, l + s, dtype=np.int64) for l, s in zip(lo, shape)], indexing="ij"
        )
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def node_indices(self):
        return self._index_grid(self.shape, self.i_lo)

    @cached_property
    def node_centers(self):
        return self.node_indices * self.params.eps

    def connector_centers(self, axis):
        """Centers of the connectors elongated along `axis` (midpoints of pairs)."""
        shape = list(self.shape)
        shape[axis] -= 1
        if shape[axis] <= 0:
            return np.zeros((0, 3))
        idx = self._index_grid(shape, self.i_lo).astype(float)
        idx[:, axis] += 0.5
        return idx * self.params.eps

    def node_half_extents(self):
        return np.asarray(self.params.node_half)

    def connector_half_extents(self, axis):
        h = list(self.params.node_half)
        h[axis] = self.params.connector_long_half(axis)
        return np.asarray(h)

    # -- faces ----------------------------------------------------------

    def _connector_faces(self, axis):
        centers = self.connector_centers(axis)
        if centers.shape[0] == 0:
            return FaceSet(
                np.zeros((0, 3)), np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), np.zeros(0)
            )
        half = self.connector_half_extents(axis)
        tangents = [d for d in range(3) if d != axis]
        parts = []
        for nd in tangents:  # face normal direction
            t_axes = sorted(d for d in range(3) if d != nd)
            hu, hv = (half[t_axes[0]], half[t_axes[1]])
            for sign in (+1.0, -1.0):
                c = centers.copy()
                c[:, nd] += sign * half[nd]
                m = centers.shape[0]
                parts.append(
                    FaceSet(
                        c,
                        np.full(m, nd, dtype=int),
                        np.full(m, sign),
                        np.full(m, hu),
                        np.full(m, hv),
                    )
                )
        return FaceSet.concatenate(parts)

    @cached_property
    def t_faces(self):
        """Lateral contact faces of every connector, grouped by connector axis."""
        return FaceSet.concatenate([self._connector_faces(a) for a in range(3)])

    @cached_property
    def t_face_axis_slices(self):
        """Slices of `t_faces` per connector axis (x, y, z)."""
        sizes = [4 * self.connector_count(a) for a in range(3)]
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return tuple(slice(int(edges[a]), int(edges[a + 1])) for a in range(3))

    @cached_property
    def s_faces(self):
        """Exposed node-box faces: one per node face without an abutting connector."""
        half = self.node_half_extents()
        parts = []
        for nd in range(3):
            t_axes = sorted(d for d in range(3) if d != nd)
            hu, hv = (half[t_axes[0]], half[t_axes[1]])
            shape = list(self.shape)
            shape[nd] = 1
            slab = self._index_grid(shape, self.i_lo)
            for sign in (-1.0, +1.0):
                c = slab.astype(float)
                if sign > 0:
                    c[:, nd] = self.i_hi[nd]
                c = c * self.params.eps
                c[:, nd] += sign * half[nd]
                m = c.shape[0]
                parts.append(
                    FaceSet(
                        c,
                        np.full(m, nd, dtype=int),
                        np.full(m, sign),
                        np.full(m, hu),
                        np.full(m, hv),
                    )
                )
        return FaceSet.concatenate(parts)

    # -- measures -------------------------------------------------------

    def volume(self):
        """Exact scaffold volume from counts and box extents."""
        p, q, r = self.params.pqr
        eps, ea = self.params.eps, self.params.eps**self.params.alpha
        c = self.counts
        node = c.N_eps * ea**3 / (p * q * r)
        conn = (ea**2 / (p * q * r)) * (
            c.X_eps * (p * eps - ea) + c.Y_eps * (q * eps - ea) + c.Z_eps * (r * eps - ea)
        )
        return node + conn

    def surface_areas(self):
        """(area of connector lateral faces, area of exposed node faces)."""
        p, q, r = self.params.pqr
        eps, ea = self.params.eps, self.params.eps**self.params.alpha
        c = self.counts
        area_t = (2.0 * ea / (p * q * r)) * (
            c.X_eps * (p * eps - ea) * (q + r)
            + c.Y_eps * (q * eps - ea) * (p + r)
            + c.Z_eps * (r * eps - ea) * (p + q)
        )
        nx, ny, nz = self.shape
        missing_x = 2 * ny * nz
        missing_y = 2 * nx * nz
        missing_z = 2 * nx * ny
        area_s = ea**2 * (missing_x / (q * r) + missing_y / (p * r) + missing_z / (p * q))
        return area_t, area_s

    # -- point classification -------------------------------------------

    def _in_index_range(self, idx):
        ok = np.ones(idx.shape[:-1], dtype=bool)
        for d in range(3):
            ok &= (idx[..., d] >= self.i_lo[d]) & (idx[..., d] <= self.i_hi[d])
        return ok

    def classify_points(self, pts):
        """Material tag per point; boundary ties resolve to the scaffold."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        if not np.all(self.params.domain.contains(p)):
            raise ValidationError("classify_points: points must lie inside the domain")
        eps = self.params.eps
        u = p / eps
        tags = np.zeros(p.shape[0], dtype=np.uint8)

        nearest = np.rint(u).astype(np.int64)
        half = self.node_half_extents()
        in_node = self._in_index_range(nearest)
        dist = np.abs(p - nearest * eps)
        in_node &= np.all(dist <= half + 0.0, axis=-1)
        tags[in_node] = Material.SCAFFOLD_NODE

        for axis in range(3):
            half_c = self.connector_half_extents(axis)
            base = np.rint(u).astype(np.int64)
            base[:, axis] = np.floor(u[:, axis]).astype(np.int64)
            ok = self._in_index_range(base)
            upper = base.copy()
            upper[:, axis] += 1
            ok &= self._in_index_range(upper)
            center = base.astype(float) * eps
            center[:, axis] += 0.5 * eps
            ok &= np.all(np.abs(p - center) <= half_c, axis=-1)
            tags[ok & (tags == 0)] = Material.SCAFFOLD_CONNECTOR
        return tags

    def contains(self, point):
        return Material(int(self.classify_points(np.asarray(point)[None, :])[0]))

    # -- export ----------------------------------------------------------

    def _all_boxes(self):
        """(center, half) rows for every box, nodes first, deterministic order."""
        yield self.node_centers, self.node_half_extents()
        for axis in range(3):
            c = self.connector_centers(axis)
            if c.shape[0]:
                yield c, self.connector_half_extents(axis)

    def export_obj(self, path, header=None):
        """Write every box as 8 vertices / 12 triangles in OBJ text form."""
        corners = np.array(
            [[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float
        )
        tris = [
            (1, 2, 3), (3, 2, 4),  # -x
            (5, 7, 6), (6, 7, 8),  # +x
            (1, 5, 2), (2, 5, 6),  # -y
            (3, 4, 7), (7, 4, 8),  # +y
            (1, 3, 5), (5, 3, 7),  # -z
            (2, 6, 4), (4, 6, 8),  # +z
        ]
        with open(path, "w") as fh:
            fh.write("# axis-aligned microlattice mesh\n")
            if header:
                fh.write(f"# {header}\n")
            base = 0
            for centers, half in self._all_boxes():
                verts = centers[:, None, :] + corners[None, :, :] * half
                for box in verts:
                    for v in box:
                        fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
                for b in range(centers.shape[0]):
                    o = base + 8 * b
                    for a, c, d in tris:
                        fh.write(f"f {o + a} {o + c} {o + d}\n")
                base += 8 * centers.shape[0]

    def summary(self):
        c = self.counts
        area_t, area_s = self.surface_areas()
        return {
            "eps": self.params.eps,
            "alpha": self.params.alpha,
            "p": self.params.p,
            "q": self.params.q,
            "r": self.params.r,
            "domain": {"lo": list(self.params.domain.lo), "hi": list(self.params.domain.hi)},
            "counts": {
                "N_eps": c.N_eps,
                "X_eps": c.X_eps,
                "Y_eps": c.Y_eps,
                "Z_eps": c.Z_eps,
                "N_eps_1": c.N_eps_1,
                "N_eps_2": c.N_eps_2,
            },
            "volume": self.volume(),
            "area_T": area_t,
            "area_S": area_s,
        }

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_scaffold(params):
    """Construct the scaffold; raises EmptyLatticeError when no point fits."""
    return Scaffold(params)


def volume(scaffold):
    return scaffold.volume()


def surface_areas(scaffold):
    return scaffold.surface_areas()
