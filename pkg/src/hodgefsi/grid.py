"""Staggered MAC grid, Heaviside face fractions and node classification.

Layout
------
Control volumes tile ``[lo, hi]``: node ``i`` along an axis sits at
``lo + (i + 1/2) h`` and its lower face at ``lo + i h``.  Face index ``k``
therefore separates nodes ``k - 1`` and ``k``.

* periodic axis: ``n`` faces, face 0 couples node ``n - 1`` to node 0;
* wall axis: ``n + 1`` faces, faces 0 and ``n`` lie on the box boundary and
  carry no flux.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import LevelSetDomain, edge_fractions, square_fractions

__all__ = [
    "ConfigurationError",
    "GeometryError",
    "MacGrid",
    "FaceField",
    "NodeClassification",
    "build_grid",
    "corner_phi",
    "compute_heaviside",
    "classify_nodes",
    "check_connectivity",
    "lower_upper",
    "write_cell_csv",
    "write_face_csv",
]

# Fractions this close to 0 or 1 come from level-set roundoff at grid corners
# lying on the interface; keeping them would leave nodes coupled by ~1e-15.
SNAP = 1e-12


class ConfigurationError(ValueError):
    pass


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class MacGrid:
    lo: tuple
    hi: tuple
    n: tuple
    h: float
    periodic: tuple

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return tuple(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def face_shape(self, axis: int) -> tuple:
        s = list(self.n)
        if not self.periodic[axis]:
            s[axis] += 1
        return tuple(s)

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.lo[axis] + (np.arange(self.n[axis]) + 0.5) * self.h

    def axis_faces(self, axis: int) -> np.ndarray:
        return self.lo[axis] + np.arange(self.face_shape(axis)[axis]) * self.h

    def node_coords(self) -> np.ndarray:
        """Node positions, shape ``(*shape, dim)``."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def corner_coords(self) -> np.ndarray:
        """Control-volume corners, shape ``(n_0 + 1, ..., dim)``."""
        axes = [self.lo[a] + np.arange(self.n[a] + 1) * self.h for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def face_coords(self, axis: int) -> np.ndarray:
        """Face-center positions for the ``axis`` family."""
        axes = [self.axis_faces(a) if a == axis else self.axis_nodes(a)
                for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def open_faces(self, axis: int) -> np.ndarray:
        """False on wall faces that lie on the box boundary."""
        mask = np.ones(self.face_shape(axis), dtype=bool)
        if not self.periodic[axis]:
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = False
            idx[axis] = -1
            mask[tuple(idx)] = False
        return mask

    def zeros_faces(self) -> "FaceField":
        return FaceField(tuple(np.zeros(self.face_shape(a)) for a in range(self.dim)))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def describe(self) -> dict:
        return {
            "lo": list(self.lo), "hi": list(self.hi), "n": list(self.n), "h": self.h,
            "topology": ["periodic" if p else "wall" for p in self.periodic],
        }


class FaceField:
    """One array per face family (x-faces, y-faces[, z-faces])."""

    __slots__ = ("comps",)
    __array_priority__ = 100

    def __init__(self, comps: Sequence[np.ndarray]):
        self.comps = tuple(np.asarray(c, dtype=float) for c in comps)

    def __len__(self):
        return len(self.comps)

    def __iter__(self):
        return iter(self.comps)

    def __getitem__(self, axis):
        return self.comps[axis]

    def _zip(self, other, op):
        if isinstance(other, FaceField):
            return FaceField([op(a, b) for a, b in zip(self.comps, other.comps)])
        return FaceField([op(a, other) for a in self.comps])

    def __add__(self, other):
        return self._zip(other, np.add)

    def __sub__(self, other):
        return self._zip(other, np.subtract)

    def __mul__(self, other):
        return self._zip(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._zip(other, np.divide)

    def __neg__(self):
        return FaceField([-a for a in self.comps])

    def copy(self) -> "FaceField":
        return FaceField([a.copy() for a in self.comps])

    def where(self, mask: "FaceField", other=0.0) -> "FaceField":
        return FaceField([np.where(m, a, other) for a, m in zip(self.comps, mask.comps)])

    def shapes(self):
        return tuple(a.shape for a in self.comps)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a), initial=0.0)) for a in self.comps)

    @classmethod
    def from_function(cls, grid: MacGrid, fn) -> "FaceField":
        """Sample a vector function at face centers, component ``a`` on ``a``-faces."""
        return cls([np.asarray(fn(grid.face_coords(a)))[..., a] for a in range(grid.dim)])

    @classmethod
    def constant(cls, grid: MacGrid, vector) -> "FaceField":
        return cls([np.full(grid.face_shape(a), float(vector[a])) for a in range(grid.dim)])


@dataclass(frozen=True)
class NodeClassification:
    """Boolean node masks; the three sets partition the grid."""

    interior: np.ndarray
    near_boundary: np.ndarray
    excluded: np.ndarray

    @property
    def included(self) -> np.ndarray:
        return ~self.excluded

    def counts(self) -> dict:
        return {
            "interior": int(self.interior.sum()),
            "near_boundary": int(self.near_boundary.sum()),
            "excluded": int(self.excluded.sum()),
        }


def _parse_topology(topology, dim):
    if isinstance(topology, str):
        topology = [topology] * dim
    if len(topology) != dim:
        raise ConfigurationError("topology needs one entry per axis")
    out = []
    for t in topology:
        if t not in ("periodic", "wall"):
            raise ConfigurationError(f"unknown topology {t!r}")
        out.append(t == "periodic")
    return tuple(out)


def build_grid(box, n, topology="periodic", align="cell") -> MacGrid:
    """Uniform MAC grid over ``box = [(lo, hi), ...]`` with spacing ``extent / n``.

    ``align="cell"`` tiles the box with ``n`` control volumes, so wall faces
    sit on the box boundary.  ``align="node"`` puts nodes on the lattice
    ``lo + i h`` instead: a wall axis then has ``n + 1`` nodes and its
    control volumes overhang the box by ``h / 2``; a periodic axis keeps
    ``n`` nodes shifted down by ``h / 2``.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ConfigurationError("box must be a list of (lo, hi) pairs")
    dim = box.shape[0]
    if dim not in (2, 3):
        raise ConfigurationError("only 2D and 3D grids are supported")
    n = tuple(int(k) for k in np.broadcast_to(n, (dim,)))
    if any(k < 2 for k in n):
        raise ConfigurationError("need at least 2 cells per axis")
    extent = box[:, 1] - box[:, 0]
    if np.any(extent <= 0):
        raise ConfigurationError("box extents must be positive")
    hs = extent / np.asarray(n)
    if not np.allclose(hs, hs[0], rtol=1e-12, atol=0.0):
        raise ConfigurationError(f"cells must be square/cubic, got spacings {hs}")
    h = float(hs[0])
    periodic = _parse_topology(topology, dim)
    lo, hi = box[:, 0].copy(), box[:, 1].copy()
    if align == "node":
        lo -= 0.5 * h
        hi += np.where(periodic, -0.5 * h, 0.5 * h)
        n = tuple(k if p else k + 1 for k, p in zip(n, periodic))
    elif align != "cell":
        raise ConfigurationError(f"unknown alignment {align!r}")
    return MacGrid(tuple(lo.tolist()), tuple(hi.tolist()), n, h, periodic)


def corner_phi(grid: MacGrid, domain: LevelSetDomain) -> np.ndarray:
    if domain.dim != grid.dim:
        raise ConfigurationError("domain and grid dimensions differ")
    return domain(grid.corner_coords())


def _take(arr, axis, sl):
    idx = [slice(None)] * arr.ndim
    idx[axis] = sl
    return arr[tuple(idx)]


def full_face_fractions(grid: MacGrid, phic: np.ndarray, axis: int) -> np.ndarray:
    """Fractions of all ``n_axis + 1`` face planes along ``axis``."""
    tang = [a for a in range(grid.dim) if a != axis]
    lo, hi = slice(None, -1), slice(1, None)
    if grid.dim == 2:
        (u,) = tang
        return edge_fractions(_take(phic, u, lo), _take(phic, u, hi))
    u, v = tang

    def c(su, sv):
        return _take(_take(phic, u, hi if su else lo), v, hi if sv else lo)

    return square_fractions(c(0, 0), c(1, 0), c(1, 1), c(0, 1))


def compute_heaviside(grid: MacGrid, domain: LevelSetDomain, phic=None) -> FaceField:
    """Per-face fluid fraction ``H``."""
    if phic is None:
        phic = corner_phi(grid, domain)
    comps = []
    for a in range(grid.dim):
        full = full_face_fractions(grid, phic, a)
        if grid.periodic[a]:
            full = _take(full, a, slice(None, -1))
        full = np.where(full < SNAP, 0.0, np.where(full > 1.0 - SNAP, 1.0, full))
        comps.append(full)
    return FaceField(comps)


def lower_upper(grid: MacGrid, arr: np.ndarray, axis: int):
    """Views of the lower and upper face of every node along ``axis``."""
    if grid.periodic[axis]:
        return arr, np.roll(arr, -1, axis=axis)
    return _take(arr, axis, slice(None, -1)), _take(arr, axis, slice(1, None))


def classify_nodes(grid: MacGrid, H: FaceField) -> NodeClassification:
    """Split nodes into interior (all incident H = 1), near-boundary and excluded.

    A node is excluded when every incident face fraction is zero; such a node
    would give an empty row in the operator.
    """
    all_one = np.ones(grid.shape, dtype=bool)
    any_pos = np.zeros(grid.shape, dtype=bool)
    for a in range(grid.dim):
        for face in lower_upper(grid, H[a], a):
            all_one &= face == 1.0
            any_pos |= face > 0.0
    excluded = ~any_pos
    interior = all_one
    near = any_pos & ~all_one
    return NodeClassification(interior, near, excluded)


def check_connectivity(grid: MacGrid, H: FaceField, included: np.ndarray) -> int:
    """Raise ``GeometryError`` unless included nodes form one H > 0 component."""
    ids = np.full(grid.shape, -1, dtype=np.int64)
    ids[included] = np.arange(int(included.sum()))
    nnodes = int(included.sum())
    if nnodes == 0:
        raise GeometryError("no fluid nodes on the grid")
    rows, cols = [], []
    for a in range(grid.dim):
        if grid.periodic[a]:
            left, right = np.roll(ids, 1, axis=a), ids
            h = H[a]
        else:
            left, right = _take(ids, a, slice(None, -1)), _take(ids, a, slice(1, None))
            h = _take(H[a], a, slice(1, -1))
        m = (h > 0.0) & (left >= 0) & (right >= 0)
        rows.append(left[m])
        cols.append(right[m])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(nnodes, nnodes))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise GeometryError(f"fluid region splits into {ncomp} disconnected pieces")
    return ncomp


def write_cell_csv(path, grid: MacGrid, fields: dict) -> None:
    """Dump node fields as ``index..., coord..., name...`` rows."""
    xyz = grid.node_coords().reshape(-1, grid.dim)
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    names = list(fields)
    cols = [np.asarray(fields[k]).reshape(-1) for k in names]
    axes = "xyz"[: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{a}" for a in axes] + list(axes) + names)
        for r in range(xyz.shape[0]):
            w.writerow(list(idx[r]) + [f"{v:.17g}" for v in xyz[r]]
                       + [f"{c[r]:.17g}" for c in cols])


def write_face_csv(path, grid: MacGrid, fields: dict) -> None:
    """Dump face fields as ``axis, index..., coord..., name...`` rows."""
    names = list(fields)
    axes = "xyz"[: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis"] + [f"i{a}" for a in axes] + list(axes) + names)
        for a in range(grid.dim):
            xyz = grid.face_coords(a).reshape(-1, grid.dim)
            idx = np.indices(grid.face_shape(a)).reshape(grid.dim, -1).T
            cols = [np.asarray(fields[k][a]).reshape(-1) for k in names]
            for r in range(xyz.shape[0]):
                w.writerow([axes[a]] + list(idx[r]) + [f"{v:.17g}" for v in xyz[r]]
                           + [f"{c[r]:.17g}" for c in cols])
