import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lognormal_qmc.exceptions import CoercivityError, FDStepError, ParameterError
from lognormal_qmc.fem import (
    DiffusionFunctional, FemSolution, Mesh1D, assemble_solve, derivative_bound_check,
    element_stiffness, f_dual_norm, functional_G, nodal_v_norms, strang_truncation_gap,
    tridiagonal_solve, v_norm, v_norm_diff,
)
from lognormal_qmc.wavelet import WaveletModel, index_of, sample_parameters

HAAR4 = WaveletModel(beta1=4.0, theta=1.2, L=5)


def test_mesh():
    m = Mesh1D(8)
    assert m.h == 0.125 and m.n_nodes == 7
    assert m.quadrature_points.shape == (8, 2)
    with pytest.raises(ParameterError):
        Mesh1D(1)


def test_constant_coefficient_exact_solution():
    mesh = Mesh1D(64)
    sol = assemble_solve(1.0, 1.0, mesh)
    x = mesh.nodes
    assert np.max(np.abs(sol.u - x * (1 - x) / 2)) <= 1e-3
    assert sol.residual <= 1e-12
    assert np.all(sol.with_boundary()[[0, -1]] == 0)


def test_doubling_coefficient_halves_solution():
    mesh = Mesh1D(50)
    np.testing.assert_allclose(assemble_solve(2.0, 1.0, mesh).u, assemble_solve(1.0, 1.0, mesh).u / 2,
                               rtol=1e-13)


def _prolong(sol, fine):
    x = np.concatenate([[0.0], sol.mesh.nodes, [1.0]])
    return FemSolution(fine, np.interp(fine.nodes, x, sol.with_boundary()))


def test_self_convergence_variable_coefficient():
    fine = Mesh1D(8192)
    ref = assemble_solve(lambda x: 1 + x, 1.0, fine)
    hs, errs = [], []
    for n in (16, 32, 64, 128, 256):
        sol = assemble_solve(lambda x: 1 + x, 1.0, Mesh1D(n))
        assert sol.residual <= 1e-12
        hs.append(1 / n)
        errs.append(v_norm_diff(_prolong(sol, fine), ref))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 1.0) <= 0.1
    nodal = assemble_solve(lambda x: 1 + x, 1.0, Mesh1D(64))
    ref_at = np.interp(nodal.mesh.nodes, fine.nodes, ref.u)
    assert np.max(np.abs(nodal.u - ref_at)) <= 5 * (1 / 64) ** 2


def test_functional_and_norm_examples():
    mesh = Mesh1D(2048)
    sol = assemble_solve(1.0, 1.0, mesh)
    assert functional_G(sol) == pytest.approx(1 / 12, rel=1e-5)
    assert v_norm(sol) == pytest.approx(math.sqrt(1 / 12), rel=1e-6)
    zero = FemSolution(mesh, np.zeros(mesh.n_nodes))
    assert functional_G(zero) == 0.0 and v_norm_diff(sol, sol) == 0.0


@settings(max_examples=30)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2 ** 31))
def test_G_linear(alpha, beta, seed):
    mesh = Mesh1D(32)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, mesh.n_nodes))
    lhs = functional_G(FemSolution(mesh, alpha * u + beta * v))
    rhs = alpha * functional_G(FemSolution(mesh, u)) + beta * functional_G(FemSolution(mesh, v))
    assert lhs == pytest.approx(rhs, abs=1e-13)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31))
def test_triangle_inequality(seed):
    mesh = Mesh1D(32)
    a, b, c = (FemSolution(mesh, u) for u in np.random.default_rng(seed).standard_normal((3, mesh.n_nodes)))
    assert v_norm_diff(a, c) <= v_norm_diff(a, b) + v_norm_diff(b, c) + 1e-12


def test_mesh_mismatch():
    with pytest.raises(ParameterError):
        v_norm_diff(assemble_solve(1.0, 1.0, Mesh1D(8)), assemble_solve(1.0, 1.0, Mesh1D(16)))


def test_coercivity_guards():
    with pytest.raises(CoercivityError):
        assemble_solve(lambda x: x - 0.5, 1.0, Mesh1D(16))
    with pytest.raises(CoercivityError):
        element_stiffness(np.array([[1.0, 0.0]]), 0.5)
    # an indefinite system with positive-looking inputs still trips the pivot check
    with pytest.raises(CoercivityError):
        tridiagonal_solve(np.array([-1.0, 1.0, 1.0]), np.ones(2))
    with pytest.raises(CoercivityError):
        DiffusionFunctional(HAAR4, a0=0.0).fit()


def test_lax_milgram_bound_on_every_solve():
    solver = DiffusionFunctional(HAAR4, n_elements=128).fit()
    Y = 2 * sample_parameters(HAAR4, 50, 4)
    norms = nodal_v_norms(solver.transform(Y), solver.mesh_.h)
    assert np.all(norms <= solver.f_dual_norm_ / solver.a_check(Y))


def test_f_dual_norm():
    assert f_dual_norm(1.0) == pytest.approx(1 / math.pi)
    assert f_dual_norm(lambda x: np.sin(np.pi * x), Mesh1D(1024)) == pytest.approx(
        math.sqrt(0.5) / math.pi, rel=1e-6)


def test_estimator_shapes_and_consistency():
    solver = DiffusionFunctional(HAAR4, n_elements=64).fit()
    assert solver.get_params()["n_elements"] == 64
    Y = sample_parameters(HAAR4, 5, 1)
    U = solver.transform(Y)
    assert U.shape == (5, 63)
    G = solver.predict(Y)
    sol = solver.solution(Y[2])
    assert G[2] == pytest.approx(functional_G(sol), rel=1e-13)
    assert sol.residual <= 1e-12
    zero = solver.predict(np.zeros((1, HAAR4.n_params)))[0]
    assert zero == pytest.approx(functional_G(assemble_solve(1.0, 1.0, Mesh1D(64))), rel=1e-14)


def test_derivative_check_at_zero():
    rep = derivative_bound_check(HAAR4, np.zeros(HAAR4.n_params), [0])
    assert rep.passed and rep.fd_norm > 0


def test_derivative_check_empty_set_is_lax_milgram():
    y = sample_parameters(HAAR4, 1, 0)[0]
    rep = derivative_bound_check(HAAR4, y, [])
    assert rep.fd_norm <= f_dual_norm(1.0) / rep.a_check
    assert rep.passed


def test_derivative_bound_scales_with_rho():
    y = np.zeros(HAAR4.n_params)
    a = derivative_bound_check(WaveletModel(beta1=4.0, theta=1.2, L=5, c_rho=0.02), y, [0])
    b = derivative_bound_check(WaveletModel(beta1=4.0, theta=1.2, L=5, c_rho=0.04), y, [0])
    assert b.bound == pytest.approx(a.bound / 2 * math.sqrt(b.C0 / a.C0), rel=1e-12)


def test_derivative_check_pairs():
    y = sample_parameters(HAAR4, 1, 3)[0]
    j = [index_of(HAAR4, 2, 1) - 1, index_of(HAAR4, 4, 5) - 1]
    rep = derivative_bound_check(HAAR4, y, j)
    assert rep.passed and rep.ratio < 1


def test_derivative_check_detects_cancellation():
    with pytest.raises(FDStepError):
        derivative_bound_check(HAAR4, np.zeros(HAAR4.n_params), [30], fd_step=1e-13, step_scale="y")


def test_derivative_check_validation():
    y = np.zeros(HAAR4.n_params)
    with pytest.raises(ParameterError):
        derivative_bound_check(HAAR4, y, [0, 1, 2, 3])
    with pytest.raises(ParameterError):
        derivative_bound_check(HAAR4, y, [HAAR4.n_params])
    with pytest.raises(ParameterError):
        derivative_bound_check(HAAR4, y, [0], step_scale="x")


def test_strang_trivial_cases():
    y = sample_parameters(HAAR4, 1, 0)[0]
    rep = strang_truncation_gap(HAAR4, y, HAAR4.L)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed
    y0 = np.zeros(HAAR4.n_params)
    y0[0] = 1.5
    assert strang_truncation_gap(HAAR4, y0, 0).lhs == 0
    with pytest.raises(ParameterError):
        strang_truncation_gap(HAAR4, y, HAAR4.L + 1)


def test_strang_random_draws():
    for y in sample_parameters(HAAR4, 20, 8):
        rep = strang_truncation_gap(HAAR4, y, 2, n_elements=128)
        assert rep.passed and isinstance(rep.rhs, float)


def test_derivative_noise_floor_reported():
    rep = derivative_bound_check(HAAR4, np.zeros(HAAR4.n_params), [1, 2])
    assert 0 < rep.noise_floor < 1e-6 * rep.bound
    assert rep.fd_norm_coarse >= 0 and len(rep.steps) == 2


def test_derivative_check_detects_unresolved_step():
    with pytest.raises(FDStepError, match="halving"):
        derivative_bound_check(HAAR4, np.zeros(HAAR4.n_params), [0], fd_step=4.0, step_scale="y")
