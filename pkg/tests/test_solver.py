import numpy as np
import pytest

from hodgefsi import RigidBody, build_grid, discretize
from hodgefsi.field_ops import CoupledState
from hodgefsi.geometry import LevelSetDomain
from hodgefsi.grid import FaceField
from hodgefsi.solver import (
    CompatibilityError,
    CompatibilityWarning,
    SolverError,
    apply_L,
    assemble_rhs,
    check_and_fix_compatibility,
    dense_matrix,
    solve_pressure,
)

FLOW_BOX = [(-2.0, 2.0), (-4.0, 4.0)]
DISK = LevelSetDomain.ball_exterior((0.0, 0.0), 1.0)
BODY = RigidBody(4.0, 2.0, (0.0, 0.0))


@pytest.fixture(scope="module")
def flow():
    return discretize(build_grid(FLOW_BOX, (40, 80)), DISK, BODY)


@pytest.fixture(scope="module")
def small():
    g = build_grid([(-2, 2), (-2, 2)], 16, "wall")
    return discretize(g, LevelSetDomain.ball_exterior((0.2, -0.1), 0.8),
                      RigidBody(1.5, 0.7, (0.2, -0.1)))


@pytest.fixture(scope="module")
def small3d():
    g = build_grid([(-1, 1)] * 3, 10, "wall")
    return discretize(g, LevelSetDomain.ball_exterior((0, 0, 0.05), 0.45),
                      RigidBody(2.0, np.diag([1.0, 1.5, 2.0]), (0, 0, 0.05)))


def mean_zero(op, rng):
    q = np.where(op.active, rng.normal(size=op.grid.shape), 0.0)
    return np.where(op.active, q - q[op.active].mean(), 0.0)


class TestOperator:
    def test_kernel(self, flow):
        op = flow.op
        Lp = apply_L(op, np.ones(op.grid.shape))
        assert np.abs(Lp).max() < 1e-12

    def test_plain_laplacian(self):
        g = build_grid([(0, 2 * np.pi), (0, 2 * np.pi)], 16)
        disc = discretize(g, LevelSetDomain.everywhere(2), RigidBody(1, 1, (0, 0)), rho=2.0)
        x = g.node_coords()
        p = np.sin(x[..., 0]) * np.cos(2 * x[..., 1])
        stencil = (np.roll(p, 1, 0) + np.roll(p, -1, 0) + np.roll(p, 1, 1) + np.roll(p, -1, 1) - 4 * p) / g.h ** 2
        assert np.allclose(apply_L(disc.op, p), -stencil / 2.0, atol=1e-12)

    def test_symmetric(self, flow):
        op = flow.op
        rng = np.random.default_rng(0)
        p, q = rng.normal(size=op.grid.shape), rng.normal(size=op.grid.shape)
        p, q = np.where(op.active, p, 0), np.where(op.active, q, 0)
        lhs = float(np.sum(apply_L(op, p) * q))
        rhs = float(np.sum(p * apply_L(op, q)))
        assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(p) * np.linalg.norm(q)

    def test_psd(self, flow):
        op = flow.op
        rng = np.random.default_rng(1)
        for _ in range(5):
            p = np.where(op.active, rng.normal(size=op.grid.shape), 0)
            assert float(np.sum(apply_L(op, p) * p)) >= -1e-12 * float(np.sum(p * p))

    @pytest.mark.parametrize("name", ["small", "small3d"])
    def test_dense_properties(self, name, request):
        op = request.getfixturevalue(name).op
        A = dense_matrix(op)
        assert np.allclose(A, A.T, atol=1e-12 * np.abs(A).max())
        w = np.linalg.eigvalsh(0.5 * (A + A.T))
        assert w[0] > -1e-10 * w[-1]
        # exactly one zero eigenvalue: the constants
        assert np.sum(np.abs(w) < 1e-9 * w[-1]) == 1
        assert np.allclose(A.sum(axis=1), 0.0, atol=1e-10 * w[-1])
        d = op.diagonal()[op.active]
        assert np.allclose(np.diag(A), d, rtol=1e-12)

    def test_dense_limit(self, flow):
        with pytest.raises(ValueError):
            dense_matrix(flow.op, max_nodes=10)

    def test_shape_mismatch(self, flow):
        with pytest.raises(ValueError):
            apply_L(flow.op, np.zeros((3, 3)))


class TestRhs:
    def test_constant_flow_no_solid(self):
        g = build_grid(FLOW_BOX, (8, 16))
        disc = discretize(g, LevelSetDomain.everywhere(2), BODY)
        s = CoupledState(FaceField.constant(g, (0.3, -1.0)), (1.0, 0.0), (0.0,))
        assert np.abs(assemble_rhs(disc.op, s)).max() < 1e-13

    def test_flow_input_compatible(self, flow):
        g = flow.grid
        s = CoupledState(FaceField.constant(g, (0.0, -1.0)), (1.0, 0.0), (0.0,))
        f = assemble_rhs(flow.op, s)
        near = flow.nodes.near_boundary
        assert np.all(f[~near] == 0.0)
        _, defect = check_and_fix_compatibility(f, flow.op.active)
        assert defect <= 1e-12


class TestCompatibility:
    def test_balanced_unchanged(self):
        f = np.array([1.0, -2.0, 1.0])
        out, defect = check_and_fix_compatibility(f)
        assert defect == 0.0 and np.array_equal(out, f)

    def test_constant_rejected(self):
        with pytest.raises(CompatibilityError):
            check_and_fix_compatibility(np.ones(10))

    def test_small_defect_warns(self):
        f = np.array([1.0, -1.0 + 1e-6])
        with pytest.warns(CompatibilityWarning):
            out, defect = check_and_fix_compatibility(f)
        assert 1e-8 < defect < 1e-3
        assert abs(out.sum()) < 1e-15

    def test_inactive_ignored(self):
        f = np.array([1.0, -1.0, 5.0])
        out, _ = check_and_fix_compatibility(f, np.array([True, True, False]))
        assert out[2] == 0.0


class TestSolve:
    def test_zero_rhs(self, flow):
        p, rep = solve_pressure(flow.op, np.zeros(flow.grid.shape))
        assert rep.iterations == 0 and np.all(p == 0)

    @pytest.mark.parametrize("precond", ["none", "jacobi"])
    def test_manufactured(self, flow, precond):
        op = flow.op
        q = mean_zero(op, np.random.default_rng(2))
        p, rep = solve_pressure(op, apply_L(op, q), precond=precond, tol=1e-12)
        assert np.abs(p - q).max() <= 1e-8 * np.abs(q).max()
        assert abs(p[op.active].sum()) <= 1e-12 * np.linalg.norm(p)
        assert rep.final_relative_residual <= 1e-12

    def test_manufactured_3d(self, small3d):
        op = small3d.op
        q = mean_zero(op, np.random.default_rng(3))
        p, _ = solve_pressure(op, apply_L(op, q), precond="jacobi", tol=1e-12)
        assert np.abs(p - q).max() <= 1e-8 * np.abs(q).max()

    def test_constant_shift_invisible(self, small):
        op = small.op
        q = mean_zero(op, np.random.default_rng(4))
        f1 = apply_L(op, q)
        f2 = apply_L(op, np.where(op.active, q + 7.0, 0.0))
        assert np.allclose(f1, f2, atol=1e-10)

    def test_homogeneous(self, flow):
        op = flow.op
        f = apply_L(op, mean_zero(op, np.random.default_rng(5)))
        p1, _ = solve_pressure(op, f, tol=1e-13)
        p3, _ = solve_pressure(op, 3.0 * f, tol=1e-13)
        assert np.abs(p3 - 3 * p1).max() <= 1e-10 * np.abs(p3).max()

    def test_energy_error_monotone(self, flow):
        op = flow.op
        q = mean_zero(op, np.random.default_rng(6))
        errs = []

        def cb(it, x):
            e = np.where(op.active, x - x[op.active].mean() - q, 0.0)
            errs.append(float(np.sum(apply_L(op, e) * e)))

        solve_pressure(op, apply_L(op, q), tol=1e-10, callback=cb)
        assert len(errs) > 10
        assert all(b <= a * (1 + 1e-9) + 1e-24 for a, b in zip(errs, errs[1:]))

    def test_maxiter(self, flow):
        op = flow.op
        f = apply_L(op, mean_zero(op, np.random.default_rng(7)))
        with pytest.raises(SolverError) as info:
            solve_pressure(op, f, maxiter=3)
        assert info.value.report.iterations == 3
        assert not info.value.report.converged

    def test_nan(self, flow):
        f = np.zeros(flow.grid.shape)
        f[flow.op.active] = np.nan
        with pytest.raises(SolverError):
            solve_pressure(flow.op, f)

    def test_bad_precond(self, flow):
        f = apply_L(flow.op, mean_zero(flow.op, np.random.default_rng(8)))
        with pytest.raises(ValueError):
            solve_pressure(flow.op, f, precond="ilu")

    def test_jacobi_fewer_iterations_3d(self, small3d):
        op = small3d.op
        f = apply_L(op, mean_zero(op, np.random.default_rng(9)))
        _, plain = solve_pressure(op, f)
        _, jac = solve_pressure(op, f, precond="jacobi")
        assert jac.iterations <= plain.iterations
