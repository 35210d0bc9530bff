"""Discrete operators on the MAC grid and the kinetic-energy inner product."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import UnderResolvedInterfaceWarning, edge_roots
from .grid import FaceField, MacGrid, lower_upper

__all__ = [
    "RigidBody",
    "CoupledState",
    "gradient",
    "divergence",
    "grad_heaviside",
    "interface_points",
    "j_field",
    "inner_product_Eh",
    "energy_norm",
    "l2_norm_faces",
]


@dataclass(frozen=True)
class RigidBody:
    """Mass ``mass``, inertia tensor ``inertia`` about center of mass ``center``.

    In 2D the inertia is a 1x1 matrix and angular velocities are length-1
    arrays; in 3D both are 3-vectors / 3x3.
    """

    mass: float
    inertia: np.ndarray
    center: np.ndarray

    def __init__(self, mass, inertia, center):
        center = np.asarray(center, dtype=float).reshape(-1)
        if center.size not in (2, 3):
            raise ValueError("center must be a 2- or 3-vector")
        k = 1 if center.size == 2 else 3
        inertia = np.asarray(inertia, dtype=float)
        if inertia.ndim == 0:
            inertia = inertia * np.eye(k)
        inertia = inertia.reshape(k, k)
        if not mass > 0:
            raise ValueError("mass must be positive")
        if not np.allclose(inertia, inertia.T, rtol=1e-14, atol=0.0):
            raise ValueError("inertia must be symmetric")
        try:
            np.linalg.cholesky(inertia)
        except np.linalg.LinAlgError:
            raise ValueError("inertia must be positive definite") from None
        object.__setattr__(self, "mass", float(mass))
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def angular_dim(self) -> int:
        return self.inertia.shape[0]

    @property
    def inertia_inv(self) -> np.ndarray:
        return np.linalg.inv(self.inertia)


@dataclass
class CoupledState:
    """Fluid face velocities plus rigid-body linear and angular velocity."""

    U: FaceField
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        if not isinstance(self.U, FaceField):
            self.U = FaceField(self.U)
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)

    @classmethod
    def zeros(cls, grid: MacGrid) -> "CoupledState":
        return cls(grid.zeros_faces(), np.zeros(grid.dim), np.zeros(1 if grid.dim == 2 else 3))

    def __add__(self, other):
        return CoupledState(self.U + other.U, self.v + other.v, self.omega + other.omega)

    def __sub__(self, other):
        return CoupledState(self.U - other.U, self.v - other.v, self.omega - other.omega)

    def __mul__(self, s):
        return CoupledState(self.U * s, self.v * s, self.omega * s)

    __rmul__ = __mul__

    def copy(self):
        return CoupledState(self.U.copy(), self.v.copy(), self.omega.copy())


def gradient(p: np.ndarray, grid: MacGrid) -> FaceField:
    """Face gradient ``(p[k] - p[k-1]) / h``; zero on closed wall faces."""
    comps = []
    for a in range(grid.dim):
        if grid.periodic[a]:
            g = (p - np.roll(p, 1, axis=a)) / grid.h
        else:
            g = np.zeros(grid.face_shape(a))
            idx = [slice(None)] * grid.dim
            idx[a] = slice(1, -1)
            g[tuple(idx)] = np.diff(p, axis=a) / grid.h
        comps.append(g)
    return FaceField(comps)


def divergence(V: FaceField, grid: MacGrid) -> np.ndarray:
    """Node divergence; closed wall faces contribute nothing."""
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        comp = V[a]
        if not grid.periodic[a]:
            comp = comp * grid.open_faces(a)
        lower, upper = lower_upper(grid, comp, a)
        out += (upper - lower) / grid.h
    return out


def grad_heaviside(H: FaceField, grid: MacGrid) -> np.ndarray:
    """Centered difference of face fractions per node, shape ``(dim, *shape)``.

    Wall faces keep their own fraction, so a solid away from the walls gives
    no contribution there.
    """
    out = np.empty((grid.dim,) + grid.shape)
    for a in range(grid.dim):
        lower, upper = lower_upper(grid, H[a], a)
        out[a] = (upper - lower) / grid.h
    return out


def interface_points(grid: MacGrid, phic: np.ndarray):
    """Midpoints of linear interface roots on each 2D control-volume boundary.

    Returns ``(points, present, n_roots)`` with points of shape
    ``(*shape, 2)``.  Roots that coincide at a shared corner count once.
    Cells with more than two roots get the centroid and trigger
    :class:`UnderResolvedInterfaceWarning`.
    """
    if grid.dim != 2:
        raise ValueError("interface points are only defined in 2D")
    cc = grid.corner_coords()
    # canonical low-to-high orientation so shared edges give identical roots
    rx, hx = edge_roots(phic[:, :-1], phic[:, 1:], cc[:, :-1], cc[:, 1:])
    ry, hy = edge_roots(phic[:-1, :], phic[1:, :], cc[:-1, :], cc[1:, :])
    pts = np.stack([ry[:, :-1], rx[1:], ry[:, 1:], rx[:-1]], axis=2)
    has = np.stack([hy[:, :-1], hx[1:], hy[:, 1:], hx[:-1]], axis=2)
    for p in range(4):
        for q in range(p + 1, 4):
            same = has[..., p] & has[..., q] & np.all(pts[..., p, :] == pts[..., q, :], axis=-1)
            has[..., q] &= ~same
    count = has.sum(axis=-1)
    total = np.where(has[..., None], pts, 0.0).sum(axis=2)
    present = count > 0
    centers = grid.node_coords()
    points = np.where(present[..., None], total / np.maximum(count, 1)[..., None], centers)
    n_bad = int(np.count_nonzero(count > 2))
    if n_bad:
        warnings.warn(f"{n_bad} control volumes meet the interface more than twice",
                      UnderResolvedInterfaceWarning, stacklevel=2)
    return points, present, count


def j_field(GH: np.ndarray, grid: MacGrid, body: RigidBody, points=None, present=None) -> np.ndarray:
    """Torque counterpart of ``GH``: ``(x_rep - c) x GH``, shape ``(d', *shape)``.

    In 2D ``x_rep`` are the interface points (pass ``points``/``present``);
    when omitted, node coordinates are used, which is the 3D rule.
    """
    if points is None:
        points = grid.node_coords()
        present = np.ones(grid.shape, dtype=bool)
    r = points - body.center
    if grid.dim == 2:
        J = r[..., 0] * GH[1] - r[..., 1] * GH[0]
        return np.where(present, J, 0.0)[None]
    J = np.cross(r, np.moveaxis(GH, 0, -1))
    J = np.where(present[..., None], J, 0.0)
    return np.moveaxis(J, -1, 0)


def _face_weights(grid: MacGrid, H: FaceField, rho) -> list:
    out = []
    for a in range(grid.dim):
        r = rho[a] if isinstance(rho, FaceField) else rho
        w = r * H[a]
        if not grid.periodic[a]:
            w = w * grid.open_faces(a)
        out.append(w)
    return out


def inner_product_Eh(s1: CoupledState, s2: CoupledState, H: FaceField, rho,
                     body: RigidBody, grid: MacGrid) -> float:
    """Kinetic-energy inner product of two coupled states."""
    fluid = 0.0
    for a, w in enumerate(_face_weights(grid, H, rho)):
        fluid += float(np.sum(w * s1.U[a] * s2.U[a]))
    fluid *= 0.5 * grid.cell_volume
    solid = 0.5 * body.mass * float(s1.v @ s2.v)
    solid += 0.5 * float(s1.omega @ body.inertia @ s2.omega)
    return fluid + solid


def energy_norm(s: CoupledState, H: FaceField, rho, body: RigidBody, grid: MacGrid) -> float:
    return float(np.sqrt(max(inner_product_Eh(s, s, H, rho, body, grid), 0.0)))


def l2_norm_faces(U: FaceField, H: FaceField, grid: MacGrid) -> float:
    """H-weighted discrete L2 norm of a face vector field."""
    total = 0.0
    for a, w in enumerate(_face_weights(grid, H, 1.0)):
        total += float(np.sum(w * U[a] ** 2))
    return float(np.sqrt(total * grid.cell_volume))
