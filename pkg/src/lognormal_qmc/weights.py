"""Product weights and constants of the QMC error bound.

Everything here is a pure function of its inputs.  Weight-function rates
``alpha_j`` close to ``ln 2 / rho_j`` or exponents ``lambda`` close to 1/2
make ``varsigma_j`` astronomically large, so the library works with
logarithms internally and only exponentiates at the boundary.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_sequence, check_scalar_in
from .exceptions import AssumptionViolation, ParameterError

LN2 = math.log(2.0)
LAMBDA_TOL = 1e-12

# B_2, B_4, ..., B_16
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)


def riemann_zeta(x, n_terms=16):
    """Riemann zeta function for real ``x > 1`` by Euler-Maclaurin summation.

    The first ``n_terms - 1`` terms are summed directly and the remainder is
    replaced by the integral, the boundary term and eight Bernoulli
    corrections.  Relative accuracy is below 1e-14 on ``(1, 3]``.
    """
    x = float(x)
    if not x > 1.0:
        raise ParameterError(f"zeta(x) requires x > 1, got {x}")
    N = n_terms
    head = math.fsum(k ** -x for k in range(1, N))
    tail = N ** (1.0 - x) / (x - 1.0) + 0.5 * N ** -x
    rising = x  # x (x+1) ... (x+2m-2)
    fact = 2.0  # (2m)!
    power = N ** (-x - 1.0)
    corr = 0.0
    for m, b in enumerate(_BERNOULLI_EVEN, start=1):
        corr += b / fact * rising * power
        rising *= (x + 2 * m - 1) * (x + 2 * m)
        fact *= (2 * m + 1) * (2 * m + 2)
        power /= N * N
    return head + tail + corr


def choose_lambda(q, delta=0.5):
    """Exponent lambda of the error bound for summability exponent ``q``.

    ``1/(2 - 2 delta)`` when ``q <= 2/3`` and ``q/(2 - q)`` otherwise.
    """
    q = check_scalar_in(q, "q", 0.0, 1.0)
    delta = check_scalar_in(delta, "delta", 0.0, 0.5)
    if q <= 2.0 / 3.0:
        return 1.0 / (2.0 - 2.0 * delta)
    return q / (2.0 - q)


def _check_lambda(lam):
    lam = check_scalar_in(lam, "lambda", None, 1.0)
    if lam <= 0.5 + LAMBDA_TOL:
        raise ParameterError(f"lambda must exceed 1/2, got {lam}")
    return lam


def log_varsigma(lam, alpha):
    """Natural logarithm of :func:`varsigma`; vectorised over ``alpha``."""
    lam = _check_lambda(lam)
    a = np.asarray(alpha, dtype=float)
    if np.any(~(a > 0)) or np.any(~np.isfinite(a)):
        raise ParameterError("alpha must be positive and finite")
    lstar = (2.0 * lam - 1.0) / (4.0 * lam)
    const = (
        0.5 * math.log(2.0 * math.pi)
        - (2.0 - 2.0 * lstar) * math.log(math.pi)
        - math.log1p(-lstar)
        - math.log(lstar)
    )
    out = LN2 + lam * (const + np.square(a) / lstar) + math.log(riemann_zeta(lam + 0.5))
    return float(out) if out.ndim == 0 else out


def varsigma(lam, alpha):
    """The per-coordinate constant ``varsigma_j(lambda)``.

    ``2 (sqrt(2 pi) exp(alpha^2/L) / (pi^(2-2L) (1-L) L))^lambda zeta(lambda + 1/2)``
    with ``L = (2 lambda - 1)/(4 lambda)``.  Overflows to ``inf`` for
    large ``alpha`` or ``lambda`` near 1/2; use :func:`log_varsigma` there.
    """
    with np.errstate(over="ignore"):
        out = np.exp(log_varsigma(lam, alpha))
    return float(out) if np.ndim(out) == 0 else out


def default_alpha(rho):
    """``alpha_j = 1 + ln 2 / rho_j``."""
    r = np.asarray(rho, dtype=float)
    if np.any(~(r > 0)):
        raise ParameterError("rho must be positive")
    out = 1.0 + LN2 / r
    return float(out) if out.ndim == 0 else out


def _alpha_gap(rho, alpha):
    gap = np.asarray(alpha, dtype=float) - LN2 / np.asarray(rho, dtype=float)
    if np.any(gap <= 0):
        raise ParameterError("alpha_j must exceed ln 2 / rho_j")
    return gap


def log_product_gamma(lam, rho, alpha, log_vs):
    """Logarithm of :func:`product_gamma`, taking ``log varsigma_j``."""
    lam = _check_lambda(lam)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ParameterError("rho must be positive")
    gap = _alpha_gap(rho, alpha)
    return -(2.0 * np.log(rho) + np.asarray(log_vs, dtype=float) + np.log(gap)) / (1.0 + lam)


def product_gamma(lam, rho, alpha, varsigma_j):
    """``gamma_j = [1 / (rho_j^2 varsigma_j (alpha_j - ln 2/rho_j))]^(1/(1+lambda))``."""
    with np.errstate(divide="ignore"):
        log_vs = np.log(np.asarray(varsigma_j, dtype=float))
    out = np.exp(log_product_gamma(lam, rho, alpha, log_vs))
    return float(out) if np.ndim(out) == 0 else out


def subset_weight(gamma, subset):
    """``gamma_u = prod_{j in u} gamma_j`` for a set of zero-based indices."""
    gamma = np.asarray(gamma, dtype=float)
    idx = np.fromiter(subset, dtype=int)
    return float(np.prod(gamma[idx])) if idx.size else 1.0


def closed_form_weight(lam, rho, alpha, varsigma_j, subset):
    """Evaluate the subset weight directly from its closed form (no per-j factorisation)."""
    idx = np.fromiter(subset, dtype=int)
    if idx.size == 0:
        return 1.0
    rho = np.asarray(rho, dtype=float)[idx]
    alpha = np.asarray(alpha, dtype=float)[idx]
    vs = np.asarray(varsigma_j, dtype=float)[idx]
    inner = (1.0 / np.prod(rho)) ** 2 / np.prod(vs * (alpha - LN2 / rho))
    return float(inner ** (1.0 / (1.0 + lam)))


def _log_beta(lam, rho, log_vs):
    return (np.asarray(log_vs, dtype=float) - 2.0 * lam * np.log(rho)) / (1.0 + lam)


def log_constant_C_rho_q(lam, rho, log_vs, tail=0.0):
    """Logarithm of :func:`constant_C_rho_q` with ``log varsigma`` input."""
    lam = _check_lambda(lam)
    rho = check_positive_sequence(rho, "rho")
    log_beta = _log_beta(lam, rho, log_vs)
    log_prod = float(np.sum(np.logaddexp(0.0, log_beta))) + float(tail)
    if log_prod == 0.0:
        return -math.inf
    if log_prod > 40.0:
        log_prod_m1 = log_prod + math.log1p(-math.exp(-log_prod))
    else:
        log_prod_m1 = math.log(math.expm1(log_prod))
    return log_prod_m1 / (2.0 * lam) + 0.5 * log_prod


def constant_C_rho_q(lam, rho, varsigma_j, tail=0.0):
    """``(prod(1+beta_j) - 1)^(1/(2 lambda)) prod(1+beta_j)^(1/2)``.

    ``beta_j = (varsigma_j / rho_j^(2 lambda))^(1/(1+lambda))``.  The product
    runs over the supplied range; ``tail`` is an upper estimate of
    ``sum_{j > s_max} beta_j`` and enters as the factor ``exp(tail)``.
    """
    with np.errstate(divide="ignore"):
        log_vs = np.log(np.asarray(varsigma_j, dtype=float))
    with np.errstate(over="ignore"):
        return float(np.exp(log_constant_C_rho_q(lam, rho, log_vs, tail=tail)))


def constant_C_star(f_dual_norm, G_dual_norm, C0, a0_inf, rho, tail=(0.0, 0.0)):
    """Constant bounding the weighted Sobolev norm of the integrand.

    ``tail`` carries upper estimates of the omitted parts of
    ``sum (ln 2)^2 / rho_j^2`` and ``sum ln 2 / rho_j``.
    """
    a0_inf = float(a0_inf)
    if not a0_inf > 0:
        raise ParameterError("inf a_0 must be positive")
    rho = check_positive_sequence(rho, "rho", allow_inf=True)
    inv = LN2 / rho
    s2 = math.fsum(np.square(inv)) + tail[0]
    s1 = math.fsum(inv) + tail[1]
    expo = 0.5 * s2 + 2.0 / math.sqrt(2.0 * math.pi) * s1
    return f_dual_norm * G_dual_norm * math.sqrt(C0) / a0_inf * math.exp(expo)


def c_zero(kappa):
    """Constant of the mixed-derivative bound, ``1 / (1 - delta)``.

    ``delta = kappa / ln 2 + pad`` with ``pad = min(1e-6, (1 - kappa/ln 2)/2)``:
    the smallest admissible ratio plus a margin that keeps the inequality
    strict.
    """
    kappa = float(kappa)
    if kappa < 0:
        raise ParameterError("kappa must be non-negative")
    if kappa >= LN2:
        raise AssumptionViolation(f"kappa={kappa} is not below ln 2")
    ratio = kappa / LN2
    delta = ratio + min(1e-6, 0.5 * (1.0 - ratio))
    return 1.0 / (1.0 - delta)


def extrapolated_tail(values, n_fit=None):
    """Upper estimate of ``sum_{j > s} v_j`` for a positive decreasing sequence.

    Fits ``v_j ~ C j^(-r)`` on the trailing half of the sequence and integrates
    the power law from ``s``.  Returns ``inf`` when the fitted decay is not
    summable.
    """
    v = np.asarray(values, dtype=float)
    s = v.size
    if s < 4:
        return math.inf
    n_fit = n_fit or max(2, s // 2)
    j = np.arange(s - n_fit + 1, s + 1, dtype=float)
    tail_v = v[-n_fit:]
    if np.any(tail_v <= 0):
        return 0.0 if np.all(tail_v == 0) else math.inf
    slope, _ = np.polyfit(np.log(j), np.log(tail_v), 1)
    r = -slope
    # exponents within fitting noise of 1 are treated as divergent
    if r <= 1.0 + 1e-6:
        return math.inf
    # anchor the power law on the largest trailing value so the estimate stays an upper one
    C = float(np.max(tail_v * j ** r))
    return C * s ** (1.0 - r) / (r - 1.0)


@dataclass(frozen=True)
class SmoothnessParams:
    q: float
    delta: float
    rho: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_scalar_in(self.q, "q", 0.0, 1.0)
        check_scalar_in(self.delta, "delta", 0.0, 0.5)
        object.__setattr__(self, "rho", check_positive_sequence(self.rho, "rho"))

    @property
    def rho_power_sum(self):
        return float(np.sum(self.rho ** -self.q))


@dataclass(frozen=True)
class WeightScheme:
    """Fitted weight parameters; validates the ``alpha_j`` window on construction."""

    lam: float
    alpha: np.ndarray = field(repr=False)
    log_gamma: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    alpha_min: float
    alpha_max: float
    kappa: float = math.nan

    def __post_init__(self):
        lower = np.maximum(LN2 / self.rho, self.alpha_min)
        if np.any(self.alpha <= lower) or np.any(self.alpha > self.alpha_max * (1 + 1e-15)):
            raise ParameterError("alpha_j violates max(ln2/rho_j, alpha_min) < alpha_j <= alpha_max")

    @property
    def gamma(self):
        return np.exp(self.log_gamma)

    @property
    def assumption_b1_verified(self):
        return bool(np.isfinite(self.kappa) and self.kappa < LN2)


class ProductWeights(BaseEstimator):
    """Product weights for a given sequence ``rho``.

    Parameters
    ----------
    q : float
        Summability exponent of ``1/rho_j``, in (0, 1].
    delta : float
        Rate-loss parameter in (0, 1/2]; only used when ``q <= 2/3``.
    alpha : array-like or None
        Weight-function rates. ``None`` selects ``1 + ln 2 / rho_j``.
    kappa : float or None
        Value of ``sup_x sum_j rho_j |psi_j(x)|`` if known; enables ``C0_``
        and ``C_star_``.
    f_dual_norm, G_dual_norm, a0_inf : float
        Data entering ``C_star_``. The defaults are the Poincare surrogates
        ``1/pi`` for ``f = 1`` and ``G(v) = int v`` on (0, 1).
    tails : tuple or None
        Upper estimates ``(sum beta_j, sum (ln2/rho_j)^2, sum ln2/rho_j)``
        over the indices beyond the supplied ``rho``.  ``None`` extrapolates
        a power law fitted to the trailing entries.

    Attributes
    ----------
    lambda_, alpha_, log_varsigma_, log_gamma_, gamma_ : fitted quantities
    C_rho_q_ : float
        Product constant including the extrapolated tail (may be ``inf``).
    scheme_ : WeightScheme
    """

    def __init__(self, q=1.0, delta=0.5, alpha=None, kappa=None,
                 f_dual_norm=1.0 / math.pi, G_dual_norm=1.0 / math.pi, a0_inf=1.0, tails=None):
        self.q = q
        self.delta = delta
        self.alpha = alpha
        self.kappa = kappa
        self.f_dual_norm = f_dual_norm
        self.G_dual_norm = G_dual_norm
        self.a0_inf = a0_inf
        self.tails = tails

    def fit(self, rho, y=None):
        params = SmoothnessParams(self.q, self.delta, rho)
        rho = params.rho
        lam = choose_lambda(self.q, self.delta)
        if self.alpha is None:
            alpha = default_alpha(rho)
            alpha_min, alpha_max = 1.0, float(np.max(alpha))
        else:
            alpha = check_positive_sequence(self.alpha, "alpha")
            if alpha.shape != rho.shape:
                raise ParameterError("alpha and rho lengths differ")
            alpha_min, alpha_max = 0.5 * float(np.min(alpha)), float(np.max(alpha))
        log_vs = log_varsigma(lam, alpha)
        log_gamma = log_product_gamma(lam, rho, alpha, log_vs)

        self.lambda_ = lam
        self.alpha_ = alpha
        self.rho_ = rho
        self.log_varsigma_ = log_vs
        self.log_gamma_ = log_gamma
        self.gamma_ = np.exp(log_gamma)
        if self.tails is not None and len(self.tails) != 3:
            raise ParameterError("tails must hold three entries")
        self.beta_tail_ = (extrapolated_tail(np.exp(_log_beta(lam, rho, log_vs)))
                           if self.tails is None else float(self.tails[0]))
        self.log_C_rho_q_ = log_constant_C_rho_q(lam, rho, log_vs, tail=self.beta_tail_)
        self.C_rho_q_ = math.exp(self.log_C_rho_q_) if self.log_C_rho_q_ < 700 else math.inf
        kappa = math.nan if self.kappa is None else float(self.kappa)
        self.scheme_ = WeightScheme(lam, alpha, log_gamma, rho, alpha_min, alpha_max, kappa)
        if self.scheme_.assumption_b1_verified:
            self.C0_ = c_zero(kappa)
            inv = LN2 / rho
            if self.tails is None:
                tail = (extrapolated_tail(inv ** 2), extrapolated_tail(inv))
            else:
                tail = (float(self.tails[1]), float(self.tails[2]))
            self.C_star_ = constant_C_star(
                self.f_dual_norm, self.G_dual_norm, self.C0_, self.a0_inf, rho, tail=tail
            )
        else:
            self.C0_ = math.nan
            self.C_star_ = math.nan
        return self

    def log_error_bound(self, n):
        """Natural log of :meth:`error_bound`."""
        check_is_fitted(self, "lambda_")
        return (math.log(9.0) + self.log_C_rho_q_ + math.log(self.C_star_)
                - math.log(float(n)) / (2.0 * self.lambda_))

    def error_bound(self, n):
        """Right-hand side ``9 C_rho_q C_star n^(-1/(2 lambda))`` of the RMS error bound."""
        value = self.log_error_bound(n)
        return math.exp(value) if value < 700 else math.inf

    def to_dict(self):
        check_is_fitted(self, "lambda_")

        def num(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "lambda": self.lambda_,
            "q": float(self.q),
            "delta": float(self.delta),
            "kappa": num(math.nan if self.kappa is None else self.kappa),
            "C0": num(self.C0_),
            "C_star": num(self.C_star_),
            "C_rho_q": num(self.C_rho_q_),
            "log_C_rho_q": num(self.log_C_rho_q_),
            "gamma": [float(g) for g in self.gamma_],
            "log_gamma": [float(g) for g in self.log_gamma_],
            "alpha": [float(a) for a in self.alpha_],
            "rho": [float(r) for r in self.rho_],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text
