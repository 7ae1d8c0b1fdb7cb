"""Piecewise-linear finite elements for ``-(a u')' = f`` on (0, 1), ``u(0) = u(1) = 0``."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_parameters, check_positive_int, check_scalar_in
from .exceptions import CoercivityError, FDStepError, ParameterError
from .weights import c_zero
from .wavelet import (FieldRealization, WaveletModel, check_assumption_b1, design_matrix,
                      level_of, rho_of_index, sigma_level)

POINCARE = 1.0 / math.pi
_GAUSS = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


@dataclass(frozen=True)
class Mesh1D:
    n_elements: int

    def __post_init__(self):
        check_positive_int(self.n_elements, "n_elements", minimum=2)

    @property
    def h(self):
        return 1.0 / self.n_elements

    @property
    def nodes(self):
        """Interior node coordinates."""
        return np.arange(1, self.n_elements) * self.h

    @property
    def n_nodes(self):
        return self.n_elements - 1

    @property
    def quadrature_points(self):
        """``(n_elements, 2)`` Gauss points per element."""
        left = np.arange(self.n_elements) * self.h
        return left[:, None] + self.h * np.array(_GAUSS)[None, :]


@dataclass(frozen=True)
class FemSolution:
    mesh: Mesh1D
    u: np.ndarray = field(repr=False)
    residual: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != (self.mesh.n_nodes,):
            raise ParameterError("nodal vector does not match the mesh")
        object.__setattr__(self, "u", u)

    def with_boundary(self):
        return np.concatenate([[0.0], self.u, [0.0]])


def _evaluate(func, x):
    if callable(func):
        return np.broadcast_to(np.asarray(func(x), dtype=float), x.shape)
    return np.full(x.shape, float(func))


def element_stiffness(a_quad, h):
    """Per-element ``∫ a φ_i' φ_i'`` from Gauss values ``a_quad[..., 2]``."""
    a_quad = np.asarray(a_quad, dtype=float)
    if not np.all(a_quad > 0):
        raise CoercivityError("diffusion coefficient is not positive at a quadrature node")
    return (a_quad[..., 0] + a_quad[..., 1]) / (2.0 * h)


def load_vector(f, mesh):
    """``∫ f φ_i`` by two-point Gauss quadrature on each element."""
    xq = mesh.quadrature_points
    fq = _evaluate(f, xq)
    g = np.array(_GAUSS)
    # left node basis = 1 - t, right node basis = t on each element
    left = 0.5 * mesh.h * (fq * (1.0 - g)).sum(axis=1)
    right = 0.5 * mesh.h * (fq * g).sum(axis=1)
    return left[1:] + right[:-1]


def tridiagonal_solve(k, b):
    """Solve the stiffness system from element stiffness ``k`` (shape ``(..., n_el)``).

    Symmetric tridiagonal with diagonal ``k_i + k_{i+1}`` and off-diagonal
    ``-k_{i+1}``.  ``b`` broadcasts against the leading batch axes.  Raises
    :class:`CoercivityError` on a non-positive pivot.
    """
    k = np.asarray(k, dtype=float)
    diag = k[..., :-1] + k[..., 1:]
    off = -k[..., 1:-1]
    n = diag.shape[-1]
    b = np.broadcast_to(np.asarray(b, dtype=float), diag.shape)
    c_prime = np.empty(diag.shape[:-1] + (max(n - 1, 0),))
    d_prime = np.empty(diag.shape)
    pivot = diag[..., 0]
    if np.any(pivot <= 0):
        raise CoercivityError("non-positive pivot in tridiagonal elimination")
    if n > 1:
        c_prime[..., 0] = off[..., 0] / pivot
    d_prime[..., 0] = b[..., 0] / pivot
    for i in range(1, n):
        pivot = diag[..., i] - off[..., i - 1] * c_prime[..., i - 1]
        if np.any(pivot <= 0):
            raise CoercivityError("non-positive pivot in tridiagonal elimination")
        if i < n - 1:
            c_prime[..., i] = off[..., i] / pivot
        d_prime[..., i] = (b[..., i] - off[..., i - 1] * d_prime[..., i - 1]) / pivot
    x = np.empty(diag.shape)
    x[..., -1] = d_prime[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = d_prime[..., i] - c_prime[..., i] * x[..., i + 1]
    return x


def stiffness_apply(k, u):
    """Matrix-vector product with the stiffness matrix defined by ``k``."""
    ub = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u, np.zeros(u.shape[:-1] + (1,))], -1)
    flux = k * np.diff(ub, axis=-1)
    return flux[..., :-1] - flux[..., 1:]


def _relative_residual(k, u, b):
    """Componentwise backward error ``max |K u - b| / (|K| |u| + |b|)``."""
    r = stiffness_apply(k, u) - b
    k, au = np.abs(k), np.abs(u)
    pad = np.zeros(u.shape[:-1] + (1,))
    ub = np.concatenate([pad, au, pad], -1)
    scale = (k[..., :-1] + k[..., 1:]) * au + k[..., :-1] * ub[..., :-2] + k[..., 1:] * ub[..., 2:]
    return float(np.max(np.abs(r) / np.maximum(scale + np.abs(b), 1e-300)))


def assemble_solve(coeff, f, mesh):
    """Galerkin solution for the coefficient ``coeff`` (callable or constant) and load ``f``."""
    a_q = _evaluate(coeff, mesh.quadrature_points)
    k = element_stiffness(a_q, mesh.h)
    b = load_vector(f, mesh)
    u = tridiagonal_solve(k, b)
    return FemSolution(mesh, u, _relative_residual(k, u, b))


def functional_G(sol):
    """Domain average of the solution (exact for piecewise linears)."""
    return sol.mesh.h * math.fsum(sol.u)


def v_norm(sol):
    return math.sqrt(np.sum(np.diff(sol.with_boundary()) ** 2) / sol.mesh.h)


def v_norm_diff(sol_a, sol_b):
    """``‖u_a − u_b‖_V`` for two solutions on the same mesh."""
    if sol_a.mesh != sol_b.mesh:
        raise ParameterError("solutions live on different meshes")
    return v_norm(FemSolution(sol_a.mesh, sol_a.u - sol_b.u))


def nodal_v_norms(u, h):
    """Row-wise V-norms of interior nodal arrays ``u[..., n_nodes]``."""
    pad = np.zeros(u.shape[:-1] + (1,))
    du = np.diff(np.concatenate([pad, u, pad], -1), axis=-1)
    return np.sqrt(np.sum(du ** 2, axis=-1) / h)


def f_dual_norm(f, mesh=None):
    """``‖f‖_{L²} / π``, an upper bound for the dual norm of ``f``."""
    if not callable(f):
        return abs(float(f)) * POINCARE
    mesh = Mesh1D(4096) if mesh is None else mesh
    vals = _evaluate(f, mesh.quadrature_points)
    return math.sqrt(0.5 * mesh.h * np.sum(vals ** 2)) * POINCARE


class DiffusionFunctional(TransformerMixin, BaseEstimator):
    """Parameter-to-solution map for the wavelet-driven lognormal coefficient.

    ``transform(Y)`` returns interior nodal values ``(n_samples, n_nodes)``;
    ``predict(Y)`` returns the domain average ``G(u)`` per sample.
    """

    def __init__(self, model=None, n_elements=256, a_star=0.0, a0=1.0, f=1.0):
        self.model = model
        self.n_elements = n_elements
        self.a_star = a_star
        self.a0 = a0
        self.f = f

    def fit(self, Y=None, y=None):
        self.model_ = WaveletModel() if self.model is None else self.model
        self.mesh_ = Mesh1D(self.n_elements)
        xq = self.mesh_.quadrature_points.reshape(-1)
        self.quad_design_ = design_matrix(self.model_, xq)
        self.a_star_q_ = _evaluate(self.a_star, xq)
        self.a0_q_ = _evaluate(self.a0, xq)
        if np.any(self.a_star_q_ < 0) or np.any(self.a0_q_ <= 0):
            raise CoercivityError("need a_star >= 0 and a0 > 0")
        self.load_ = load_vector(self.f, self.mesh_)
        self.f_dual_norm_ = f_dual_norm(self.f, self.mesh_)
        self.n_features_in_ = self.model_.n_params
        return self

    def coefficient(self, Y):
        """Coefficient at the quadrature points, shape ``(n_samples, n_elements, 2)``."""
        check_is_fitted(self, "quad_design_")
        Y = check_parameters(Y, self.model_.n_params)
        T = np.asarray(self.quad_design_ @ Y.T).T
        a = self.a_star_q_ + self.a0_q_ * np.exp(T)
        return a.reshape(Y.shape[0], self.mesh_.n_elements, 2)

    def a_check(self, Y):
        """Minimum of the coefficient over the quadrature points, per sample."""
        return self.coefficient(Y).reshape(np.atleast_2d(Y).shape[0], -1).min(axis=1)

    def transform(self, Y):
        a = self.coefficient(Y)
        k = element_stiffness(a, self.mesh_.h)
        try:
            return tridiagonal_solve(k, self.load_)
        except CoercivityError as exc:
            bad = np.where(~np.all(a.reshape(a.shape[0], -1) > 0, axis=1))[0]
            raise CoercivityError(f"{exc}; offending samples {bad.tolist()}") from exc

    def predict(self, Y):
        u = self.transform(Y)
        return self.mesh_.h * np.sum(u, axis=-1)

    def solution(self, y):
        """Single :class:`FemSolution` for one parameter vector."""
        u = self.transform(np.asarray(y, dtype=float).reshape(1, -1))[0]
        a = self.coefficient(np.asarray(y, dtype=float).reshape(1, -1))[0]
        k = element_stiffness(a, self.mesh_.h)
        return FemSolution(self.mesh_, u, _relative_residual(k, u, self.load_))


@dataclass(frozen=True)
class DerivativeReport:
    """``fd_norm`` uses the halved steps, ``fd_norm_coarse`` the requested ones."""

    j_set: tuple
    fd_norm: float
    fd_norm_coarse: float
    bound: float
    a_check: float
    C0: float
    kappa: float
    steps: tuple
    tol: float
    noise_floor: float = 0.0

    @property
    def ratio(self):
        return self.fd_norm / self.bound

    @property
    def passed(self):
        return self.fd_norm <= self.bound * (1.0 + self.tol)


def _mixed_difference(solver, y, j_set, steps):
    signs = list(itertools.product((1.0, -1.0), repeat=len(j_set)))
    Y = np.repeat(y[None, :], len(signs), axis=0)
    for row, sgn in enumerate(signs):
        for j, s, h in zip(j_set, sgn, steps):
            Y[row, j] += s * h
    U = solver.transform(Y)
    coef = np.array([np.prod(s) for s in signs])
    return (coef @ U) / np.prod([2.0 * h for h in steps])


def derivative_bound_check(model, y, j_set, fd_step=1e-4, n_elements=256, f=1.0,
                           tol=0.05, step_scale="field", kappa=None):
    """Compare a finite-difference mixed derivative of ``u`` in ``y`` with its a priori bound.

    ``j_set`` holds zero-based parameter indices (at most three).  With
    ``step_scale="field"`` the step for coordinate ``j`` is
    ``fd_step / sup|sigma_j phi_j|`` so every perturbation moves ``T`` by
    ``fd_step`` in sup norm; ``"y"`` uses ``fd_step`` directly.  The
    difference quotient is recomputed with halved steps; a relative
    disagreement above 10% raises :class:`FDStepError` unless both values
    sit below the estimated roundoff level, which must itself stay below
    the bound.
    """
    j_set = tuple(sorted(int(j) for j in j_set))
    if len(j_set) > 3 or len(set(j_set)) != len(j_set):
        raise ParameterError("j_set must hold at most three distinct indices")
    if any(not 0 <= j < model.n_params for j in j_set):
        raise ParameterError("index in j_set outside the parameter range")
    check_scalar_in(fd_step, "fd_step", 0.0)
    if step_scale not in ("field", "y"):
        raise ParameterError("step_scale must be 'field' or 'y'")
    y = np.asarray(y, dtype=float).reshape(-1)
    report = check_assumption_b1(model)
    if not report.verified:
        raise ParameterError("model does not satisfy the summability assumption")
    kappa = report.analytic if kappa is None else kappa
    C0 = c_zero(kappa)
    solver = DiffusionFunctional(model, n_elements=n_elements, f=f).fit()
    fnorm = solver.f_dual_norm_
    a_min = float(solver.a_check(y)[0])

    rho, steps = [], []
    for j in j_set:
        ell, _ = level_of(model, j + 1)
        rho.append(rho_of_index(model, ell))
        sup = sigma_level(model, ell) * 2.0 ** (model.d * ell / 2.0)
        steps.append(fd_step / sup if step_scale == "field" else fd_step)
    bound = math.sqrt(C0) * fnorm / a_min * math.prod(1.0 / r for r in rho)

    if not j_set:
        norm = float(nodal_v_norms(solver.transform(y[None, :])[0], solver.mesh_.h))
        return DerivativeReport(j_set, norm, norm, bound, a_min, C0, kappa, (), tol)
    u0 = solver.transform(y[None, :])[0]
    # roundoff of a solve is about n * eps * |u|; the 2^k-term difference divides it by prod(2 h)
    half = [s / 2 for s in steps]
    noise = (2.0 ** len(j_set) * n_elements * np.finfo(float).eps
             * float(nodal_v_norms(u0, solver.mesh_.h)) / math.prod(2.0 * h for h in half))
    if noise >= bound:
        raise FDStepError(f"roundoff level {noise:.3e} of the difference quotient exceeds the bound {bound:.3e}")
    d1 = _mixed_difference(solver, y, j_set, steps)
    d2 = _mixed_difference(solver, y, j_set, half)
    n1 = float(nodal_v_norms(d1, solver.mesh_.h))
    n2 = float(nodal_v_norms(d2, solver.mesh_.h))
    scale = max(n1, n2)
    if scale > noise and abs(n1 - n2) > 0.1 * scale:
        raise FDStepError(f"step halving changed the derivative norm from {n1:.3e} to {n2:.3e}")
    return DerivativeReport(j_set, n2, n1, bound, a_min, C0, kappa, tuple(steps), tol, noise)


@dataclass(frozen=True)
class StrangReport:
    lhs: float
    rhs: float
    coefficient_gap: float
    a_check_full: float
    a_check_trunc: float
    tol: float

    @property
    def passed(self):
        return self.lhs <= self.rhs * (1.0 + self.tol)


def strang_truncation_gap(model, y_full, L_small, n_elements=256, f=1.0, tol=0.05):
    """``‖u − u^{s(L_small)}‖_V`` against ``‖a − a^s‖_∞ ‖f‖ / (ǎ ǎ^s)``.

    Both solutions use the same mesh; sup and inf are taken over the
    quadrature points, which is where the discrete coefficients live.
    """
    if not model.ell0 <= L_small <= model.L:
        raise ParameterError("L_small must lie between ell0 and the model level")
    full = FieldRealization(model, y_full)
    trunc = full.truncated(L_small).zero_padded(model.L)
    solver = DiffusionFunctional(model, n_elements=n_elements, f=f).fit()
    Y = np.stack([full.y, trunc.y])
    a = solver.coefficient(Y).reshape(2, -1)
    U = solver.transform(Y)
    lhs = float(nodal_v_norms(U[0] - U[1], solver.mesh_.h))
    gap = float(np.max(np.abs(a[0] - a[1])))
    rhs = float(gap * solver.f_dual_norm_ / (a[0].min() * a[1].min()))
    return StrangReport(lhs, rhs, gap, float(a[0].min()), float(a[1].min()), tol)
