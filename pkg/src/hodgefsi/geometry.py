"""Level-set description of the fluid region and cut-geometry primitives.

A domain is a signed function ``phi`` with ``phi >= 0`` meaning fluid.  All
fractions are computed from values of ``phi`` at segment endpoints or face
corners with linear root placement, so they are exact whenever ``phi`` is
affine and second-order accurate otherwise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "LevelSetDomain",
    "InterfacePoint",
    "UnderResolvedInterfaceWarning",
    "edge_fractions",
    "edge_roots",
    "square_fractions",
    "edge_fluid_fraction",
    "face_fluid_fraction",
    "interface_point",
    "domain_from_config",
]


class UnderResolvedInterfaceWarning(UserWarning):
    """A control volume boundary meets the interface more than twice."""


@dataclass(frozen=True)
class LevelSetDomain:
    """Fluid region ``{x : phi(x) >= 0}``.

    ``phi`` takes an array of points with trailing axis of length ``dim`` and
    returns an array of the leading shape.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        return np.asarray(self.phi(x), dtype=float)

    # -- constructors -----------------------------------------------------
    @classmethod
    def ball_exterior(cls, center, radius: float) -> "LevelSetDomain":
        """Fluid outside a ball: ``phi = |x - center|^2 - radius^2``."""
        c = np.asarray(center, dtype=float)
        r2 = float(radius) ** 2

        def phi(x):
            return np.sum((x - c) ** 2, axis=-1) - r2

        return cls(phi, c.size, "ball_exterior",
                   {"center": c.tolist(), "radius": float(radius)})

    @classmethod
    def ball_interior(cls, center, radius: float) -> "LevelSetDomain":
        dom = cls.ball_exterior(center, radius).complement()
        return cls(dom.phi, dom.dim, "ball_interior", dict(dom.params))

    @classmethod
    def cos_blob(cls, level: float = np.sqrt(3.0) / 2.0) -> "LevelSetDomain":
        """Fluid inside ``cos x cos y > level`` (the blob around the origin)."""

        def phi(x):
            return np.cos(x[..., 0]) * np.cos(x[..., 1]) - level

        return cls(phi, 2, "cos_blob", {"level": float(level)})

    @classmethod
    def half_space(cls, normal, offset: float = 0.0) -> "LevelSetDomain":
        """Fluid where ``normal . x - offset >= 0``; affine, used in tests."""
        n = np.asarray(normal, dtype=float)

        def phi(x):
            return x @ n - offset

        return cls(phi, n.size, "half_space",
                   {"normal": n.tolist(), "offset": float(offset)})

    @classmethod
    def everywhere(cls, dim: int, fluid: bool = True) -> "LevelSetDomain":
        value = 1.0 if fluid else -1.0

        def phi(x):
            return np.full(x.shape[:-1], value)

        return cls(phi, dim, "all_fluid" if fluid else "all_solid")

    # -- combinators ------------------------------------------------------
    def complement(self) -> "LevelSetDomain":
        base = self.phi

        def phi(x):
            return -base(x)

        return LevelSetDomain(phi, self.dim, f"complement({self.name})",
                              {"of": self.params})

    def intersect(self, other: "LevelSetDomain") -> "LevelSetDomain":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        a, b = self.phi, other.phi

        def phi(x):
            return np.minimum(a(x), b(x))

        return LevelSetDomain(phi, self.dim, f"{self.name}&{other.name}")

    def clip_box(self, lo, hi) -> "LevelSetDomain":
        """Restrict the fluid to the axis-aligned box ``[lo, hi]``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)

        def box(x):
            return np.min(np.minimum(x - lo, hi - x), axis=-1)

        return self.intersect(LevelSetDomain(box, self.dim, "box"))


@dataclass(frozen=True)
class InterfacePoint:
    position: np.ndarray
    present: bool
    n_roots: int = 0


# ---------------------------------------------------------------------------
# vectorised kernels on phi samples
# ---------------------------------------------------------------------------

def _root_param(fa, fb):
    # only meaningful where the signs differ, so fa - fb != 0 there
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(fa != fb, fa / (fa - fb), 0.0)


def edge_fractions(fa, fb) -> np.ndarray:
    """Fluid-length fraction of segments from endpoint values of phi."""
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    ina = fa >= 0.0
    inb = fb >= 0.0
    t = _root_param(fa, fb)
    out = np.where(ina & inb, 1.0, 0.0)
    out = np.where(ina & ~inb, t, out)
    out = np.where(~ina & inb, 1.0 - t, out)
    return out


def edge_roots(fa, fb, a, b):
    """Root point of phi on segments [a, b] by linear interpolation.

    ``a`` and ``b`` broadcast against ``fa[..., None]``.  Returns
    ``(points, has_root)``; points are NaN where there is no sign change.
    """
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    has = (fa >= 0.0) != (fb >= 0.0)
    t = _root_param(fa, fb)[..., None]
    pts = a + t * (np.asarray(b, dtype=float) - a)
    pts = np.where(has[..., None], pts, np.nan)
    return pts, has


def square_fractions(f00, f10, f11, f01) -> np.ndarray:
    """Fluid-area fraction of unit squares from corner values of phi.

    Corners are given counter-clockwise starting at the origin corner.  The
    fluid polygon is traced marching-squares style: fluid corners plus the
    linear edge roots, taken in boundary order, and its shoelace area is
    returned.  Saddle squares resolve to the connected-fluid polygon.
    """
    corners = [np.asarray(f, dtype=float) for f in (f00, f10, f11, f01)]
    shape = np.broadcast(*corners).shape
    corners = [np.broadcast_to(c, shape) for c in corners]
    unit = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

    pts = np.zeros(shape + (8, 2))
    valid = np.zeros(shape + (8,), dtype=bool)
    for e in range(4):
        fa, fb = corners[e], corners[(e + 1) % 4]
        pts[..., 2 * e, :] = unit[e]
        valid[..., 2 * e] = fa >= 0.0
        root, has = edge_roots(fa, fb, unit[e], unit[(e + 1) % 4])
        pts[..., 2 * e + 1, :] = np.where(has[..., None], root, 0.0)
        valid[..., 2 * e + 1] = has

    # Fill gaps with the previous valid vertex; repeated vertices add no area.
    for s in range(16):
        k = s % 8
        prev = (k - 1) % 8
        fill = ~valid[..., k] & valid[..., prev]
        pts[..., k, :] = np.where(fill[..., None], pts[..., prev, :], pts[..., k, :])
        valid[..., k] |= fill

    x = pts[..., 0]
    y = pts[..., 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1)
    area = np.where(valid.any(axis=-1), area, 0.0)
    return np.clip(area, 0.0, 1.0)


# ---------------------------------------------------------------------------
# point-wise API
# ---------------------------------------------------------------------------

def edge_fluid_fraction(domain: LevelSetDomain, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("degenerate segment")
    return float(edge_fractions(domain(a), domain(b)))


def face_fluid_fraction(domain: LevelSetDomain, lo, hi) -> float:
    """Fluid-area fraction of an axis-aligned rectangle in 3D.

    The rectangle is ``[lo, hi]`` with exactly one degenerate axis.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    flat = np.flatnonzero(lo == hi)
    if lo.size != 3 or flat.size != 1 or np.any(hi < lo):
        raise ValueError("expected a 3D rectangle with one zero-extent axis")
    u, v = [ax for ax in range(3) if ax != flat[0]]

    def corner(su, sv):
        p = lo.copy()
        p[u] = hi[u] if su else lo[u]
        p[v] = hi[v] if sv else lo[v]
        return domain(p)

    return float(square_fractions(corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)))


def interface_point(domain: LevelSetDomain, lo, hi) -> InterfacePoint:
    """Representative interface point of the box ``[lo, hi]``.

    In 2D this is the midpoint of the linear roots of phi on the four box
    edges.  In 3D the box center is returned whenever any face is cut.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("cell must have positive volume")
    if lo.size == 2:
        c = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        f = domain(c)
        roots = []
        for e in range(4):
            a, b = (e, (e + 1) % 4)
            p, has = edge_roots(f[a], f[b], c[a], c[b])
            if has:
                p = np.asarray(p)
                if not any(np.array_equal(p, q) for q in roots):
                    roots.append(p)
        if not roots:
            return InterfacePoint(0.5 * (lo + hi), False, 0)
        if len(roots) > 2:
            warnings.warn("cell boundary meets the interface more than twice",
                          UnderResolvedInterfaceWarning, stacklevel=2)
        return InterfacePoint(np.mean(roots, axis=0), True, len(roots))
    if lo.size == 3:
        for ax in range(3):
            for side in (lo, hi):
                flo, fhi = lo.copy(), hi.copy()
                flo[ax] = fhi[ax] = side[ax]
                frac = face_fluid_fraction(domain, flo, fhi)
                if 0.0 < frac < 1.0:
                    return InterfacePoint(0.5 * (lo + hi), True)
        return InterfacePoint(0.5 * (lo + hi), False)
    raise ValueError("only 2D and 3D cells are supported")


def domain_from_config(spec: dict) -> LevelSetDomain:
    """Build a domain from a ``{"kind": ..., params...}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("kind")
    complement = spec.pop("complement", False)
    if kind == "ball_exterior":
        dom = LevelSetDomain.ball_exterior(spec["center"], spec["radius"])
    elif kind == "ball_interior":
        dom = LevelSetDomain.ball_interior(spec["center"], spec["radius"])
    elif kind == "cos_blob":
        dom = LevelSetDomain.cos_blob(spec.get("level", np.sqrt(3.0) / 2.0))
    elif kind == "cos_blob_exterior":
        dom = LevelSetDomain.cos_blob(spec.get("level", np.sqrt(3.0) / 2.0)).complement()
    elif kind == "half_space":
        dom = LevelSetDomain.half_space(spec["normal"], spec.get("offset", 0.0))
    elif kind in ("all_fluid", "all_solid"):
        dom = LevelSetDomain.everywhere(int(spec["dim"]), kind == "all_fluid")
    else:
        raise ValueError(f"unknown levelset kind {kind!r}")
    if complement:
        dom = dom.complement()
    if "clip_box" in spec:
        lo, hi = spec["clip_box"]
        dom = dom.clip_box(lo, hi)
    return dom
