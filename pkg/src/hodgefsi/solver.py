"""Matrix-free monolithic pressure operator and mean-zero conjugate gradients."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .field_ops import CoupledState, RigidBody, divergence, gradient
from .grid import FaceField, MacGrid, lower_upper

__all__ = [
    "CompatibilityError",
    "CompatibilityWarning",
    "SolverError",
    "MonolithicOperator",
    "SolveReport",
    "apply_L",
    "assemble_rhs",
    "constraint_residual",
    "check_and_fix_compatibility",
    "solve_pressure",
    "dense_matrix",
]

log = logging.getLogger(__name__)

DEFECT_WARN = 1e-8
DEFECT_FAIL = 1e-3


class CompatibilityError(RuntimeError):
    pass


class CompatibilityWarning(UserWarning):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolveReport:
    iterations: int = 0
    final_relative_residual: float = 0.0
    compatibility_defect: float = 0.0
    converged: bool = True
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_relative_residual": self.final_relative_residual,
            "compatibility_defect": self.compatibility_defect,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


@dataclass
class MonolithicOperator:
    """``L p = -D((H/rho) G p) + GH (sum p GH h^d)/m + J I^-1 (sum p J h^d)``.

    ``GH`` has shape ``(d, *shape)`` and ``J`` shape ``(d', *shape)``.  Only
    nodes in ``active`` carry unknowns; everything else is held at zero.
    Treat instances as immutable once built.
    """

    grid: MacGrid
    H: FaceField
    rho: object
    GH: np.ndarray
    J: np.ndarray
    body: RigidBody
    active: np.ndarray
    coeff: FaceField = field(init=False, repr=False)

    def __post_init__(self):
        comps = []
        for a in range(self.grid.dim):
            r = self.rho[a] if isinstance(self.rho, FaceField) else self.rho
            c = self.H[a] / r
            if not self.grid.periodic[a]:
                c = c * self.grid.open_faces(a)
            comps.append(c)
        self.coeff = FaceField(comps)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def body_moments(self, p: np.ndarray):
        """``(sum p GH h^d, sum p J h^d)``."""
        vol = self.grid.cell_volume
        a = np.tensordot(self.GH, p, axes=p.ndim) * vol
        b = np.tensordot(self.J, p, axes=p.ndim) * vol
        return a, b

    def diagonal(self) -> np.ndarray:
        """Diagonal of L including the low-rank terms (for Jacobi scaling)."""
        g = self.grid
        d = np.zeros(g.shape)
        for a in range(g.dim):
            lower, upper = lower_upper(g, self.coeff[a], a)
            d += (lower + upper) / g.h ** 2
        vol = g.cell_volume
        d += np.sum(self.GH ** 2, axis=0) * vol / self.body.mass
        d += np.einsum("i...,ij,j...->...", self.J, self.body.inertia_inv, self.J) * vol
        return np.where(self.active, d, 0.0)


def apply_L(op: MonolithicOperator, p: np.ndarray) -> np.ndarray:
    g = op.grid
    if p.shape != g.shape:
        raise ValueError(f"pressure has shape {p.shape}, grid is {g.shape}")
    p = np.where(op.active, p, 0.0)
    flux = gradient(p, g) * op.coeff
    out = -divergence(flux, g)
    a, b = op.body_moments(p)
    out += np.tensordot(a / op.body.mass, op.GH, axes=1)
    out += np.tensordot(op.body.inertia_inv @ b, op.J, axes=1)
    return np.where(op.active, out, 0.0)


def constraint_residual(op: MonolithicOperator, s: CoupledState) -> np.ndarray:
    """``-D(H U) + v . GH + omega . J`` on active nodes."""
    out = -divergence(s.U * op.H, op.grid)
    out += np.tensordot(s.v, op.GH, axes=1)
    out += np.tensordot(s.omega, op.J, axes=1)
    return np.where(op.active, out, 0.0)


def assemble_rhs(op: MonolithicOperator, s_star: CoupledState) -> np.ndarray:
    return constraint_residual(op, s_star)


def check_and_fix_compatibility(f: np.ndarray, active: np.ndarray | None = None):
    """Remove the mean of ``f`` over active nodes.

    Returns ``(f_fixed, defect)`` with ``defect = |sum f| / max(1, ||f||_1)``.
    Warns above ``DEFECT_WARN`` and raises :class:`CompatibilityError` above
    ``DEFECT_FAIL``.
    """
    if active is None:
        active = np.ones(f.shape, dtype=bool)
    vals = f[active]
    total = float(np.sum(vals))
    defect = abs(total) / max(1.0, float(np.sum(np.abs(vals))))
    if defect > DEFECT_FAIL:
        raise CompatibilityError(f"right-hand side violates compatibility: defect {defect:.3e}")
    if defect > DEFECT_WARN:
        warnings.warn(f"compatibility defect {defect:.3e}", CompatibilityWarning, stacklevel=2)
    out = np.where(active, f - total / max(vals.size, 1), 0.0)
    return out, defect


def _project_mean(x, active, n):
    return np.where(active, x - np.sum(x[active]) / n, 0.0)


def solve_pressure(op: MonolithicOperator, f: np.ndarray, tol: float = 1e-10,
                   maxiter: int | None = None, precond: str = "none",
                   defect: float = 0.0, callback=None):
    """Conjugate gradients on the mean-zero subspace of the active nodes.

    Returns ``(p, report)``; ``p`` sums to zero over active nodes.
    """
    active = op.active
    n = op.n_active
    if maxiter is None:
        maxiter = 10 * n
    report = SolveReport(compatibility_defect=defect)
    b = _project_mean(f, active, n)
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(op.grid.shape)
    if not np.isfinite(bnorm):
        raise SolverError("non-finite right-hand side", report)
    if bnorm == 0.0:
        return x, report

    if precond == "jacobi":
        diag = op.diagonal()
        inv = np.where(active & (diag > 0), 1.0 / np.where(diag > 0, diag, 1.0), 0.0)

        def M(r):
            return _project_mean(inv * r, active, n)
    elif precond == "none":
        def M(r):
            return r
    else:
        raise ValueError(f"unknown preconditioner {precond!r}")

    r = b.copy()
    z = M(r)
    d = z.copy()
    rz = float(np.vdot(r, z))
    it = 0
    rel = 1.0
    while it < maxiter:
        q = apply_L(op, d)
        dq = float(np.vdot(d, q))
        if not np.isfinite(dq):
            raise SolverError("NaN encountered in conjugate gradients", report)
        if dq <= 0.0:
            report.warnings.append(f"non-positive curvature {dq:.3e} at iteration {it}")
            break
        alpha = rz / dq
        x += alpha * d
        r -= alpha * q
        r = _project_mean(r, active, n)
        it += 1
        rel = float(np.linalg.norm(r)) / bnorm
        if callback is not None:
            callback(it, x)
        if rel <= tol:
            # guard against drift of the recursive residual
            true_r = b - apply_L(op, x)
            rel = float(np.linalg.norm(_project_mean(true_r, active, n))) / bnorm
            if rel <= tol:
                break
            r = _project_mean(true_r, active, n)
        z = M(r)
        rz_new = float(np.vdot(r, z))
        beta = rz_new / rz
        rz = rz_new
        d = _project_mean(z + beta * d, active, n)

    x = _project_mean(x, active, n)
    rel = float(np.linalg.norm(_project_mean(b - apply_L(op, x), active, n))) / bnorm
    report.iterations = it
    report.final_relative_residual = rel
    if not np.isfinite(rel):
        raise SolverError("NaN encountered in conjugate gradients", report)
    if rel > tol:
        report.converged = False
        raise SolverError(f"CG did not reach tol={tol:g} in {it} iterations (rel={rel:.3e})", report)
    log.debug("CG converged in %d iterations, rel=%.2e", it, rel)
    return x, report


def dense_matrix(op: MonolithicOperator, max_nodes: int = 2000) -> np.ndarray:
    """Dense L restricted to active nodes (column-by-column application)."""
    idx = np.flatnonzero(op.active.reshape(-1))
    if idx.size > max_nodes:
        raise ValueError(f"{idx.size} active nodes exceeds dense export limit {max_nodes}")
    A = np.empty((idx.size, idx.size))
    e = np.zeros(op.grid.size)
    for col, k in enumerate(idx):
        e[k] = 1.0
        A[:, col] = apply_L(op, e.reshape(op.grid.shape)).reshape(-1)[idx]
        e[k] = 0.0
    return A
