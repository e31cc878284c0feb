import mpmath
import numpy as np
import pytest
from scipy import integrate

from mesoscatter import _lattice, ls_solver
from mesoscatter.effective import compute_C_tensors
from mesoscatter.errors import ConvergenceError, DomainError
from mesoscatter.farfield import lebedev_86
from mesoscatter.kernels import PlaneWave, incident_fields
from mesoscatter.polarization import pair_from_json
from oracles import born_reference, cube_integral_phi
from conftest import oblique_wave

SPHERE = pair_from_json({"shape": "sphere", "eps": 2.0, "mu": 1.5})


def isotropic(a_eps, a_mu):
    return a_eps * np.eye(3), a_mu * np.eye(3)


def block_average(U):
    n = U.shape[0] // 2
    return U.reshape(n, 2, n, 2, n, 2, 3).mean(axis=(1, 3, 5))


class TestSelfTerm:
    def test_static_limit(self):
        np.testing.assert_allclose(ls_solver.self_term(0.0, 0.1), -np.eye(3) / 3, atol=1e-16)

    def test_smooth_part_against_radial_integral(self):
        k, h = 2.3, 0.4
        R = h * (3 / (4 * np.pi)) ** (1 / 3)
        mpmath.mp.dps = 30
        # k^2 times the ball integral of Phi_k, by direct radial quadrature.
        smooth = complex(k * k * mpmath.quad(lambda r: r * mpmath.exp(1j * k * r), [0, R]))
        got = ls_solver.self_term(k, h)
        np.testing.assert_allclose(got, (-1 / 3 + 2 / 3 * smooth) * np.eye(3), rtol=1e-13)

    def test_ball_close_to_cube(self):
        # The equal-volume ball differs from the true cube at order (kh)^2, with
        # the static gap between the two Newtonian potentials as coefficient.
        R = (3 / (4 * np.pi)) ** (1 / 3)
        static_gap = 0.5 * R * R - cube_integral_phi(0.0, 1.0).real
        assert 0.0029 < static_gap < 0.0031
        for kh in (0.25, 0.5):
            ball = 1.5 * (ls_solver.self_term(kh, 1.0)[0, 0] + 1 / 3)
            cube = kh * kh * cube_integral_phi(kh, 1.0)
            assert abs(ball - cube) / kh**2 == pytest.approx(static_gap, rel=0.1)

    def test_single_voxel_operator(self, rng):
        A_eps, A_mu = isotropic(0.4, 0.7)
        grid = ls_solver.VolumeGrid.unit_cube(1)
        op = ls_solver.LSOperator(grid, (A_eps, A_mu), 1.2)
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        S = ls_solver.self_term(1.2, 1.0)
        expected = np.concatenate([x[:3] - S @ A_eps @ x[:3], x[3:] - S @ A_mu @ x[3:]])
        np.testing.assert_allclose(op.apply(x), expected, rtol=1e-14)


class TestOperator:
    def test_zero_contrast_is_identity(self, rng):
        grid = ls_solver.VolumeGrid.unit_cube(4)
        U = rng.standard_normal(grid.shape + (3,)) + 0j
        V = rng.standard_normal(grid.shape + (3,)) + 0j
        out = ls_solver.ls_apply(ls_solver.VolumeField(grid, U, V), isotropic(0, 0), 1.0)
        np.testing.assert_array_equal(out.U, U)
        np.testing.assert_array_equal(out.V, V)

    def test_fft_matches_direct(self, rng):
        grid = ls_solver.VolumeGrid.unit_cube(8)
        op = ls_solver.LSOperator(grid, compute_C_tensors(SPHERE, 2.0), 1.0)
        x = rng.standard_normal(op.shape[0]) + 1j * rng.standard_normal(op.shape[0])
        direct = op.apply(x, direct=True)
        assert np.linalg.norm(op.apply(x) - direct) <= 1e-11 * np.linalg.norm(direct)

    def test_kernel_table_is_reciprocal(self):
        op = ls_solver.LSOperator(ls_solver.VolumeGrid.unit_cube(5), isotropic(1, 1), 1.7)
        pi, grad = op._conv.pi, op._conv.grad
        np.testing.assert_allclose(pi, np.swapaxes(pi[::-1, ::-1, ::-1], -1, -2), rtol=1e-13,
                                   atol=1e-16)
        np.testing.assert_allclose(grad, -grad[::-1, ::-1, ::-1], rtol=1e-13, atol=1e-16)

    @pytest.mark.parametrize("center", [[0.7, -0.45, 1.1], [0.4, 0.0, 0.0], [-0.4, 0.4, 0.4]])
    def test_cell_integral_against_adaptive_quadrature(self, center):
        h = 0.4
        c = np.asarray(center)

        def hessian(y, i, j):
            r = np.linalg.norm(y)
            return (3 * y[i] * y[j] / r**5 - (i == j) / r**3) / (4 * np.pi)

        ref = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                ref[i, j] = integrate.tplquad(
                    lambda z, y, x: hessian(np.array([x, y, z]), i, j),
                    c[0] - h / 2, c[0] + h / 2, c[1] - h / 2, c[1] + h / 2,
                    c[2] - h / 2, c[2] + h / 2, epsabs=1e-11, epsrel=1e-9)[0]
        np.testing.assert_allclose(_lattice.box_static_dyadic(c, h), ref, rtol=1e-7, atol=1e-10)

    def test_cell_integral_sums_to_whole_box(self):
        # Static cell integrals over all cells of a centered 3x3x3 block add up
        # to the integral over the block, which is -I/3 by cubic symmetry.
        idx = np.stack(np.meshgrid(*[np.arange(-1, 2)] * 3, indexing="ij"), -1).reshape(-1, 3)
        total = _lattice.box_static_dyadic(idx * 0.2, 0.2).sum(0)
        np.testing.assert_allclose(total, -np.eye(3) / 3, atol=1e-14)


class TestSolve:
    def test_zero_contrast_returns_incident_field(self, rng):
        pw = oblique_wave(rng)
        sol = ls_solver.ls_solve(6, isotropic(0, 0), pw)
        E, H = incident_fields(pw, sol.grid.centers())
        assert sol.iterations == 0
        np.testing.assert_array_equal(sol.U, E)
        np.testing.assert_array_equal(sol.V, H)

    def test_first_born_agreement(self, wave):
        A_eps, A_mu = isotropic(1e-3, 0.6e-3)
        grid = ls_solver.VolumeGrid.unit_cube(6)
        sol = ls_solver.ls_solve(6, (A_eps, A_mu), wave, tol=1e-13)
        U, V = born_reference(grid, A_eps, A_mu, wave)
        rel = np.linalg.norm(np.r_[(sol.U - U).ravel(), (sol.V - V).ravel()])
        rel /= np.linalg.norm(np.r_[U.ravel(), V.ravel()])
        assert rel <= 1e-4

    def test_solution_satisfies_system(self, wave):
        ops = compute_C_tensors(SPHERE, 2.0)
        sol = ls_solver.ls_solve(8, ops, wave, tol=1e-11)
        assert sol.residual_norm <= 1e-11
        assert len(sol.residual_history) >= 1

    def test_nonconvergence_carries_history(self, wave):
        with pytest.raises(ConvergenceError) as info:
            ls_solver.ls_solve(4, isotropic(2.0, 1.0), wave, tol=1e-15, restart=2, max_iter=2)
        assert len(info.value.residual_history) > 0

    def test_refinement_halves_error_at_unit_contrast(self, wave):
        # Piecewise-constant densities leave an O(h) error in the voxels along
        # the boundary; at unit contrast it dominates the self-convergence.
        ratio = self_convergence_ratio(isotropic(1.0, 0.6), wave)
        assert 1.4 <= ratio <= 2.6

    def test_refinement_is_cauchy_at_pipeline_contrast(self, wave):
        # Weaker contrast lets the second-order interior error show through,
        # so the error drops at least as fast as first order.
        ratio = self_convergence_ratio(compute_C_tensors(SPHERE, 2.0), wave)
        assert ratio >= 1.4


def self_convergence_ratio(contrasts, pw):
    sols = {N: ls_solver.ls_solve(N, contrasts, pw) for N in (8, 16, 32)}
    errs = []
    for N in (8, 16):
        fine = np.r_[block_average(sols[2 * N].U).ravel(), block_average(sols[2 * N].V).ravel()]
        coarse = np.r_[sols[N].U.ravel(), sols[N].V.ravel()]
        errs.append(np.linalg.norm(fine - coarse) / np.linalg.norm(fine))
    return errs[0] / errs[1]


class TestFarField:
    def test_zero_contrast_radiates_nothing(self, wave):
        sol = ls_solver.ls_solve(4, isotropic(0, 0), wave)
        ff = ls_solver.effective_far_field(sol, isotropic(0, 0), 1.0, lebedev_86()[0])
        assert np.all(ff.values == 0)

    def test_transversality(self, wave):
        ops = compute_C_tensors(SPHERE, 2.0)
        sol = ls_solver.ls_solve(8, ops, wave)
        for mode in ("C_T", "P0"):
            ff = ls_solver.effective_far_field(sol, ops, 1.0, lebedev_86()[0], mode=mode)
            assert ff.transversality() < 1e-13

    def test_weighting_modes_converge_together(self, wave):
        gaps = []
        c_values = (2.0, 4.0, 8.0)
        for c in c_values:
            ops = compute_C_tensors(SPHERE, c)
            sol = ls_solver.ls_solve(8, ops, wave)
            d = lebedev_86()[0]
            a = ls_solver.effective_far_field(sol, ops, 1.0, d, mode="C_T").values
            b = ls_solver.effective_far_field(sol, ops, 1.0, d, mode="P0").values
            gaps.append(np.abs(a - b).max())
        slope = np.polyfit(np.log(c_values), np.log(gaps), 1)[0]
        assert slope <= -5.0

    def test_unknown_mode(self, wave):
        sol = ls_solver.ls_solve(2, isotropic(0.1, 0.1), wave)
        with pytest.raises(DomainError):
            ls_solver.effective_far_field(sol, isotropic(0.1, 0.1), 1.0, [[0, 0, 1.0]], mode="x")
        with pytest.raises(DomainError):
            ls_solver.effective_far_field(sol, isotropic(0.1, 0.1), 1.0, [[0, 0, 1.0]], mode="P0")


class TestSerialization:
    def test_json_round_trip(self, wave):
        sol = ls_solver.ls_solve(3, isotropic(0.2, 0.1), wave)
        back = ls_solver.VolumeField.from_json(sol.to_json())
        np.testing.assert_array_equal(back.U, sol.U)
        np.testing.assert_array_equal(back.V, sol.V)
        assert back.grid.h == sol.grid.h

    def test_grid_size_must_be_positive(self):
        with pytest.raises(DomainError):
            ls_solver.VolumeGrid.unit_cube(0)


def test_regularity_diagnostic():
    diag = ls_solver.regularity_diagnostic(1.0, 2.0, 4.0)
    assert diag["g"] == pytest.approx(5.0)
    assert diag["product"] == pytest.approx(5.0 * 4.0 / 8.0)
    assert diag["c_reg_assumed"] == 1.0


def test_oblique_incidence_matches_rotated_geometry():
    # Swapping the x and y axes maps the solution for one wave onto another.
    pw = PlaneWave(1.0, [1.0, 0, 0], [0, 0, 1.0])
    swapped = PlaneWave(1.0, [0, 1.0, 0], [0, 0, 1.0])
    a = ls_solver.ls_solve(6, isotropic(0.3, 0.2), pw, tol=1e-12)
    b = ls_solver.ls_solve(6, isotropic(0.3, 0.2), swapped, tol=1e-12)
    perm = [1, 0, 2]
    # Reflection x<->y flips the orientation, so H picks up a sign.
    np.testing.assert_allclose(np.swapaxes(a.U, 0, 1)[..., perm], b.U, atol=1e-10)
    np.testing.assert_allclose(np.swapaxes(a.V, 0, 1)[..., perm], -b.V, atol=1e-10)
