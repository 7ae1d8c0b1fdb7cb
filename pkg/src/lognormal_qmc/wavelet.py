"""Multilevel wavelet-type expansion of a Gaussian field on the unit cube.

    T^L(x, y) = sum_{l0 <= l <= L} sum_{k} y_{l,k} sigma_l phi_{l,k}(x),
    sigma_l  = 2^(-beta1 d l / 2),
    rho_{l}  = c 2^(theta l).

Two basis families are built in:

``"haar"``
    ``2^(l d/2) h(2^l x - k)`` with ``h`` the d-fold product of the Haar
    mother wavelet.  One function per level is non-zero at any point.
``"hat"`` (d = 1 only)
    ``2^(l/2) hat(2^l x - k - 1/2)`` with the unit triangle ``hat(t) =
    max(0, 1 - |t|)``.  Continuous, at most two per level overlap.  This is
    not an exact Riesz wavelet basis; coefficients are identified with
    ``y sigma`` when computing Besov norms.

Parameters are ordered lexicographically in ``(l, k)``; ``j`` is 1-based.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_parameters, check_positive_int, check_scalar_in
from .exceptions import AssumptionViolation, ParameterError

LN2 = math.log(2.0)

BASES = ("haar", "hat")
_OVERLAP = {"haar": 1, "hat": 2}
_T_STAR = {"haar": 0.5, "hat": 1.5}
_HOLDER = {"haar": None, "hat": 1.0}


@dataclass(frozen=True)
class LevelIndex:
    ell: int
    k: int
    j: int


@dataclass(frozen=True)
class WaveletModel:
    """Parameters of the multilevel expansion.

    ``c_rho=None`` selects half of the largest constant compatible with
    ``kappa < ln 2``.  ``amplitude`` multiplies every ``sigma_l``; it is 1
    in the standard model.
    """

    d: int = 1
    beta0: float = 1.0
    beta1: float = 4.0
    theta: float = 1.2
    c_rho: float = None
    ell0: int = 0
    L: int = 5
    basis: str = "haar"
    amplitude: float = 1.0

    def __post_init__(self):
        check_positive_int(self.d, "d")
        if self.basis not in BASES:
            raise ParameterError(f"basis must be one of {BASES}, got {self.basis!r}")
        if self.basis == "hat" and self.d != 1:
            raise ParameterError("the hat basis is implemented for d = 1 only")
        check_scalar_in(self.beta0, "beta0", 0.0, low_open=False)
        check_scalar_in(self.beta1, "beta1", 1.0)
        if not self.beta1 > self.beta0:
            raise ParameterError("beta1 must exceed beta0")
        check_scalar_in(self.theta, "theta", 0.0)
        if not isinstance(self.ell0, (int, np.integer)) or self.ell0 < 0:
            raise ParameterError("ell0 must be a non-negative integer")
        if not isinstance(self.L, (int, np.integer)) or self.L < self.ell0:
            raise ParameterError("L must be an integer >= ell0")
        check_scalar_in(self.amplitude, "amplitude", 0.0, low_open=False)
        if self.c_rho is None:
            bound = self.c_rho_bound
            object.__setattr__(self, "c_rho", 0.5 * bound if math.isfinite(bound) else 1.0)
        else:
            check_scalar_in(self.c_rho, "c_rho", 0.0)

    # structural constants of the basis family
    @property
    def M(self):
        return _OVERLAP[self.basis]

    @property
    def C_phi(self):
        return 1.0

    @property
    def C_nabla(self):
        return 1

    @property
    def t_star(self):
        return _T_STAR[self.basis]

    @property
    def holder_exponent(self):
        return _HOLDER[self.basis]

    def level_size(self, ell):
        return self.C_nabla * 2 ** (ell * self.d)

    @property
    def levels(self):
        return range(self.ell0, self.L + 1)

    @property
    def n_params(self):
        return sum(self.level_size(ell) for ell in self.levels)

    def level_offset(self, ell):
        """Zero-based position of the first parameter of level ``ell``."""
        return sum(self.level_size(l) for l in range(self.ell0, ell))

    @property
    def decay_gap(self):
        """``theta - d (beta1 - beta0)/2``; negative when the rho-series converges."""
        return self.theta - 0.5 * self.d * (self.beta1 - self.beta0)

    def _level_factor_sum(self, start, stop=None):
        r = 2.0 ** self.decay_gap
        if stop is None:
            if r >= 1.0:
                return math.inf
            return r ** start / (1.0 - r)
        return math.fsum(r ** ell for ell in range(start, stop + 1))

    @property
    def c_rho_bound(self):
        """Supremum of admissible ``c`` for ``kappa < ln 2``."""
        if self.amplitude == 0:
            return math.inf
        total = self._level_factor_sum(self.ell0)
        if not math.isfinite(total):
            return 0.0
        return LN2 / (self.M * self.C_phi * self.amplitude * total)

    def with_level(self, L):
        """Same model truncated at level ``L`` (``c_rho`` kept fixed)."""
        return replace(self, L=int(L))

    def admissible_q(self):
        """Infimum of exponents ``q`` for which the reordered ``1/rho_j`` lie in l^q
        and ``2/q < beta1 - beta0``; the admissible set is open at this value."""
        return max(self.d / self.theta, 2.0 / (self.beta1 - self.beta0))

    def qmc_ready(self, q):
        """True when ``q`` in (0, 1] satisfies ``2/q < beta1 - beta0`` and
        ``d/q < theta < d (beta1 - beta0)/2``."""
        if not 0 < q <= 1:
            return False
        return (2.0 / q < self.beta1 - self.beta0
                and self.d / q < self.theta
                and self.decay_gap < 0
                and self.c_rho < self.c_rho_bound)


def enumerate_indices(model):
    out, j = [], 1
    for ell in model.levels:
        for k in range(model.level_size(ell)):
            out.append(LevelIndex(ell, k, j))
            j += 1
    return out


def index_of(model, ell, k):
    """1-based linear index of ``(ell, k)``."""
    if not model.ell0 <= ell <= model.L or not 0 <= k < model.level_size(ell):
        raise ParameterError(f"invalid index ({ell}, {k})")
    return model.level_offset(ell) + k + 1


def level_of(model, j):
    """Inverse of :func:`index_of`."""
    if not 1 <= j <= model.n_params:
        raise ParameterError(f"j={j} outside 1..{model.n_params}")
    pos = j - 1
    for ell in model.levels:
        size = model.level_size(ell)
        if pos < size:
            return ell, pos
        pos -= size
    raise AssertionError("unreachable")


def _as_points(model, x):
    x = np.asarray(x, dtype=float)
    if model.d == 1:
        x = x.reshape(-1, 1) if x.ndim <= 1 else x
    else:
        x = np.atleast_2d(x)
    if x.shape[-1] != model.d:
        raise ParameterError(f"points must have {model.d} coordinates")
    if np.any(x < 0) or np.any(x > 1):
        raise ParameterError("points must lie in [0, 1]^d")
    return x


def _haar_mother(t):
    return np.where(t < 0.5, 1.0, -1.0)


def _unflatten(model, ell, k):
    n1 = 2 ** ell
    digits = []
    for _ in range(model.d):
        digits.append(k % n1)
        k //= n1
    return digits[::-1]


def basis_eval(model, ell, k, x):
    """``phi_{ell,k}(x)`` for points ``x`` in ``[0,1]^d``."""
    if not 0 <= k < model.level_size(ell) or ell < model.ell0:
        raise ParameterError(f"invalid index ({ell}, {k})")
    pts = _as_points(model, x)
    scale = 2.0 ** ell
    if model.basis == "haar":
        val = np.full(pts.shape[0], 2.0 ** (ell * model.d / 2.0))
        for axis, ki in enumerate(_unflatten(model, ell, k)):
            u = pts[:, axis] * scale
            cell = np.minimum(np.floor(u), scale - 1)
            val = val * np.where(cell == ki, _haar_mother(u - cell), 0.0)
    else:
        t = pts[:, 0] * scale - k - 0.5
        val = 2.0 ** (ell / 2.0) * np.maximum(0.0, 1.0 - np.abs(t))
    return val if np.ndim(x) > (0 if model.d == 1 else 1) else float(val[0])


def sigma_level(model, ell):
    if ell < model.ell0:
        raise ParameterError("level below ell0")
    return model.amplitude * 2.0 ** (-model.beta1 * model.d * ell / 2.0)


def rho_of_index(model, ell):
    if model.c_rho >= model.c_rho_bound:
        raise AssumptionViolation(
            f"c_rho={model.c_rho} not below its bound {model.c_rho_bound}")
    return model.c_rho * 2.0 ** (model.theta * ell)


def level_vector(model, func):
    """Per-parameter array of a level-wise quantity ``func(ell)``."""
    return np.concatenate([np.full(model.level_size(ell), func(ell)) for ell in model.levels])


def rho_sequence(model):
    """Reordered ``rho_j`` for ``j = 1..s(L)``."""
    return level_vector(model, lambda ell: rho_of_index(model, ell))


def rho_power_tail(model, p):
    """``sum_{j > s(L)} rho_j^(-p)`` in closed form (``inf`` when divergent)."""
    r = 2.0 ** (model.d - model.theta * p)
    if r >= 1.0:
        return math.inf
    return model.c_rho ** (-p) * r ** (model.L + 1) / (1.0 - r)


def sigma_sequence(model):
    return level_vector(model, lambda ell: sigma_level(model, ell))


def _local_entries(model, pts):
    """Non-zero (row, column, value) triples of ``sigma_l phi_{l,k}(x_row)``."""
    rows, cols, vals = [], [], []
    n_pts = pts.shape[0]
    base_rows = np.arange(n_pts)
    for ell in model.levels:
        scale = 2.0 ** ell
        off = model.level_offset(ell)
        sig = sigma_level(model, ell)
        if model.basis == "haar":
            val = np.full(n_pts, sig * 2.0 ** (ell * model.d / 2.0))
            k = np.zeros(n_pts, dtype=np.int64)
            for axis in range(model.d):
                u = pts[:, axis] * scale
                cell = np.minimum(np.floor(u), scale - 1)
                val = val * _haar_mother(u - cell)
                k = k * int(scale) + cell.astype(np.int64)
            rows.append(base_rows)
            cols.append(off + k)
            vals.append(val)
        else:
            t = pts[:, 0] * scale - 0.5
            first = np.floor(t).astype(np.int64)
            for k in (first, first + 1):
                ok = (k >= 0) & (k < scale)
                v = sig * 2.0 ** (ell / 2.0) * np.maximum(0.0, 1.0 - np.abs(t - k))
                ok &= v != 0
                rows.append(base_rows[ok])
                cols.append(off + k[ok])
                vals.append(v[ok])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def design_matrix(model, x):
    """Sparse ``(n_points, s(L))`` matrix with entries ``sigma_l phi_{l,k}(x)``."""
    pts = _as_points(model, x)
    r, c, v = _local_entries(model, pts)
    return sp.csr_matrix((v, (r, c)), shape=(pts.shape[0], model.n_params))


@dataclass(frozen=True)
class FieldRealization:
    model: WaveletModel
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != self.model.n_params:
            raise ParameterError(f"y has {y.size} entries, model needs {self.model.n_params}")
        object.__setattr__(self, "y", y)

    def truncated(self, L):
        """Realisation of the level-``L`` model using the leading entries of ``y``."""
        m = self.model.with_level(L)
        return FieldRealization(m, self.y[: m.n_params])

    def zero_padded(self, L):
        """Realisation at a finer level ``L`` with the new entries set to zero."""
        m = self.model.with_level(L)
        y = np.zeros(m.n_params)
        y[: self.y.size] = self.y
        return FieldRealization(m, y)


def field_eval(realization, x):
    """``T^L(x, y)`` using only the basis functions whose support contains ``x``."""
    pts = _as_points(realization.model, x)
    r, c, v = _local_entries(realization.model, pts)
    out = np.bincount(r, weights=v * realization.y[c], minlength=pts.shape[0])
    return out if np.ndim(x) > (0 if realization.model.d == 1 else 1) else float(out[0])


def field_eval_naive(realization, x):
    """Same as :func:`field_eval` by summing every basis function."""
    m = realization.model
    pts = _as_points(m, x)
    total = np.zeros(pts.shape[0])
    for idx in enumerate_indices(m):
        total += realization.y[idx.j - 1] * sigma_level(m, idx.ell) * basis_eval(m, idx.ell, idx.k, pts)
    return total


def coefficient_eval(realization, a_star, a_0, x):
    """``a(x, y) = a_*(x) + a_0(x) exp(T^L(x, y))``; ``a_star``/``a_0`` are callables or constants."""
    T = field_eval(realization, x)
    xs = np.asarray(x, dtype=float)
    a_s = a_star(xs) if callable(a_star) else a_star
    a0 = a_0(xs) if callable(a_0) else a_0
    return a_s + a0 * np.exp(T)


def covariance(model, x1, x2):
    """Covariance of ``T^L`` between the points ``x1`` and ``x2``."""
    B1 = design_matrix(model, x1)
    B2 = design_matrix(model, x2)
    out = np.asarray(B1.multiply(B2).sum(axis=1)).ravel()
    return out if out.size > 1 or np.ndim(x1) > (0 if model.d == 1 else 1) else float(out[0])


def sample_parameters(model, n_samples, seed):
    """``(n_samples, s(L))`` standard-normal draws from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    return rng.standard_normal((n_samples, model.n_params))


def besov_threshold(d, beta1):
    """Largest smoothness ``t`` (exclusive) with realisations in ``B^t_q(L_p)``."""
    return d * (beta1 - 1.0) / 2.0


def besov_norm(realization, t, p=2.0, q_besov=2.0, t_star=None):
    """Sequence-space Besov norm of the realisation's expansion coefficients.

    ``(sum_l 2^(l (t + d(1/2 - 1/p)) q) (sum_k |y_{l,k} sigma_l|^p)^(q/p))^(1/q)``.
    ``t_star`` caps the admissible smoothness (defaults to the basis value).
    """
    m = realization.model
    t_star = m.t_star if t_star is None else t_star
    p = check_scalar_in(p, "p", 1.0, low_open=False)
    q_besov = check_scalar_in(q_besov, "q_besov", 1.0, low_open=False)
    lower = m.d * max(1.0 / p - 1.0, 0.0)
    if not lower < t < t_star:
        raise ParameterError(f"t={t} must lie in ({lower}, {t_star})")
    total = 0.0
    for ell in m.levels:
        off = m.level_offset(ell)
        c = realization.y[off: off + m.level_size(ell)] * sigma_level(m, ell)
        inner = np.sum(np.abs(c) ** p) ** (q_besov / p)
        total += 2.0 ** (ell * (t + m.d * (0.5 - 1.0 / p)) * q_besov) * inner
    return total ** (1.0 / q_besov)


@dataclass(frozen=True)
class KappaReport:
    analytic: float
    analytic_truncated: float
    empirical: float
    resolution: int

    @property
    def verified(self):
        return self.analytic < LN2 and self.empirical < LN2 and self.empirical <= self.analytic + 1e-10


def check_assumption_b1(model, grid_resolution=2 ** 14):
    """Analytic and grid-based values of ``sup_x sum_j rho_j |psi_j(x)|``.

    The analytic value includes the geometric tail of levels above ``L``;
    the empirical one is the maximum over the cell midpoints and nodes of a
    uniform grid (per axis) of the truncated sum.
    """
    pref = model.c_rho * model.M * model.C_phi * model.amplitude
    truncated = pref * model._level_factor_sum(model.ell0, model.L)
    analytic = pref * model._level_factor_sum(model.ell0)
    g = np.linspace(0.0, 1.0, grid_resolution + 1)
    g = np.unique(np.concatenate([g, 0.5 * (g[1:] + g[:-1])]))
    if model.d == 1:
        pts = g[:, None]
    else:
        side = g if g.size ** model.d <= 2 ** 22 else np.linspace(0, 1, int(2 ** (22 / model.d)))
        pts = np.stack(np.meshgrid(*([side] * model.d), indexing="ij"), -1).reshape(-1, model.d)
    r, c, v = _local_entries(model, pts)
    rho = model.c_rho * 2.0 ** (model.theta * np.array(
        [ell for ell in model.levels for _ in range(model.level_size(ell))]))
    amounts = np.bincount(r, weights=rho[c] * np.abs(v), minlength=pts.shape[0])
    return KappaReport(analytic, truncated, float(np.max(amounts)), grid_resolution)


def holder_quotient(realization, t, resolution=2 ** 12):
    """``max |T(x) - T(x')| / |x - x'|^t`` over dyadic grid neighbours at every scale (d = 1)."""
    m = realization.model
    if m.d != 1:
        raise ParameterError("holder_quotient is implemented for d = 1")
    x = np.linspace(0.0, 1.0, resolution + 1)
    T = field_eval(realization, x)
    best, step = 0.0, 1
    while step <= resolution // 2:
        diff = np.abs(T[step:] - T[:-step])
        best = max(best, float(np.max(diff)) / (step / resolution) ** t)
        step *= 2
    return best


class WaveletField(TransformerMixin, BaseEstimator):
    """Evaluate realisations of the Gaussian field at fixed points.

    ``fit(X)`` stores the evaluation points ``X`` (shape ``(n_points,)`` or
    ``(n_points, d)``) and assembles the sparse design matrix;
    ``transform(Y)`` maps parameter blocks ``(n_samples, s(L))`` to field
    values ``(n_samples, n_points)``.
    """

    def __init__(self, d=1, beta0=1.0, beta1=4.0, theta=1.2, c_rho=None, ell0=0, L=5,
                 basis="haar", amplitude=1.0):
        self.d = d
        self.beta0 = beta0
        self.beta1 = beta1
        self.theta = theta
        self.c_rho = c_rho
        self.ell0 = ell0
        self.L = L
        self.basis = basis
        self.amplitude = amplitude

    @classmethod
    def from_model(cls, model):
        return cls(model.d, model.beta0, model.beta1, model.theta, model.c_rho, model.ell0,
                   model.L, model.basis, model.amplitude)

    def fit(self, X, y=None):
        self.model_ = WaveletModel(self.d, self.beta0, self.beta1, self.theta, self.c_rho,
                                   self.ell0, self.L, self.basis, self.amplitude)
        self.points_ = _as_points(self.model_, X)
        self.design_ = design_matrix(self.model_, self.points_)
        self.n_features_in_ = self.model_.n_params
        return self

    def transform(self, Y):
        check_is_fitted(self, "design_")
        Y = check_parameters(Y, self.model_.n_params)
        return np.asarray(self.design_ @ Y.T).T


def write_parameters(y, path):
    """Save ``y`` as raw little-endian float64 (``.bin``) or one value per CSV line."""
    y = np.asarray(y, dtype="<f8").reshape(-1)
    path = str(path)
    if path.endswith(".bin"):
        y.tofile(path)
    else:
        with open(path, "w") as fh:
            fh.writelines(f"{v!r}\n" for v in y.tolist())


def read_parameters(path):
    path = str(path)
    if path.endswith(".bin"):
        return np.fromfile(path, dtype="<f8")
    return np.loadtxt(path, dtype=float, delimiter=",", ndmin=1).reshape(-1)


def field_snapshot(realization, resolution=256):
    """CSV text of ``T`` on a uniform grid (``x,T`` in 1-D, ``x1,x2,T`` in 2-D)."""
    m = realization.model
    g = np.linspace(0.0, 1.0, resolution + 1)
    if m.d == 1:
        pts, header = g[:, None], "x,T"
    elif m.d == 2:
        pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        header = "x1,x2,T"
    else:
        raise ParameterError("snapshots are available for d <= 2")
    T = field_eval(realization, pts)
    rows = [",".join(repr(float(v)) for v in (*p, t)) for p, t in zip(pts, T)]
    return header + "\n" + "\n".join(rows) + "\n"
