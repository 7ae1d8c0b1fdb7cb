"""Rank-1 lattice rules: CBC construction, shifted points and Gaussian nodes.

The CBC objective is the shift-averaged squared worst-case error for the
Bernoulli kernel with product weights,

    e^2(z) = (1/n) sum_k [ prod_j (1 + gamma_j B2({k z_j / n})) - 1 ],

evaluated as ``expm1(sum_j log1p(.))`` so that weights spanning hundreds of
orders of magnitude keep their relative precision.

For prime ``n`` the candidate scan of each component is a cyclic
correlation over the multiplicative group (Nuyens-Cools) and costs one FFT
of length ``n - 1``.  Both paths finish with the same exact re-evaluation of
the near-optimal candidates, so they return identical vectors.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int
from .exceptions import DomainError, ParameterError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# candidates whose approximate score is within this relative band of the
# minimum are re-scored exactly
_NEAR_BAND = 1e-11
# exact scores closer than this (relative) count as ties; smallest z wins
_TIE_BAND = 1e-13


def bernoulli2(x):
    return x * x - x + 1.0 / 6.0


def is_prime(n):
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    r = int(math.isqrt(n))
    return all(n % p for p in range(3, r + 1, 2))


def _prime_factors(m):
    out, p = [], 2
    while p * p <= m:
        if m % p == 0:
            out.append(p)
            while m % p == 0:
                m //= p
        p += 1
    if m > 1:
        out.append(m)
    return out


def primitive_root(n):
    """Smallest generator of the multiplicative group modulo prime ``n``."""
    if not is_prime(n):
        raise ParameterError(f"{n} is not prime")
    if n == 2:
        return 1
    factors = _prime_factors(n - 1)
    for g in range(2, n):
        if all(pow(g, (n - 1) // p, n) != 1 for p in factors):
            return g
    raise AssertionError("no primitive root found")  # unreachable for primes


def _kernel_table(n):
    """B2(m/n) for m = 0..n-1, mirrored so that entry m equals entry n-m bitwise."""
    m = np.arange(n)
    half = np.minimum(m, n - m)
    return bernoulli2(half / n)


@dataclass(frozen=True)
class LatticeRule:
    """Rank-1 lattice with ``n`` points and generating vector ``z``."""

    n: int
    z: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive_int(self.n, "n", minimum=2)
        z = np.asarray(self.z, dtype=np.int64).reshape(-1)
        if z.size == 0:
            raise ParameterError("generating vector is empty")
        if np.any(z < 1) or np.any(z > self.n - 1):
            raise ParameterError("entries of z must lie in 1..n-1")
        if any(math.gcd(int(zj), self.n) != 1 for zj in z):
            raise ParameterError("entries of z must be coprime to n")
        object.__setattr__(self, "z", z)

    @property
    def s(self):
        return int(self.z.size)

    def to_dict(self):
        return {"n": int(self.n), "s": self.s, "z": [int(v) for v in self.z]}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data):
        rule = cls(int(data["n"]), data["z"])
        if "s" in data and int(data["s"]) != rule.s:
            raise ParameterError("s does not match the length of z")
        return rule

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _check_gamma(gamma, s=None):
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if s is not None and gamma.size < s:
        raise ParameterError(f"need {s} weights, got {gamma.size}")
    if np.any(~np.isfinite(gamma)) or np.any(gamma <= 0):
        raise ParameterError("weights must be positive and finite")
    return gamma if s is None else gamma[:s]


def _log_factors(n, zj, gj, table):
    k = np.arange(n, dtype=np.int64)
    return np.log1p(gj * table[(k * zj) % n])


def worst_case_error(rule, gamma):
    """Shift-averaged squared worst-case error ``e^2(z)`` of a lattice rule."""
    n, z = rule.n, rule.z
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.size < z.size:
        raise ParameterError("fewer weights than dimensions")
    if np.any(gamma < 0):
        raise ParameterError("weights must be non-negative")
    table = _kernel_table(n)
    logp = np.zeros(n)
    for zj, gj in zip(z, gamma):
        logp += _log_factors(n, int(zj), gj, table)
    return max(math.fsum(np.expm1(logp)) / n, 0.0)


def _exact_scores(q, table, n, candidates):
    """sum_k q_k B2({k z/n}) for each candidate z, correctly rounded."""
    k = np.arange(n, dtype=np.int64)
    return np.array([math.fsum(q * table[(k * int(z)) % n]) for z in candidates])


def _pick(q, table, n, candidates, approx):
    """Resolve the argmin from approximate scores with exact re-scoring."""
    scale = math.fsum(np.abs(q)) / 6.0
    lo = float(np.min(approx))
    near = candidates[approx <= lo + _NEAR_BAND * scale]
    exact = _exact_scores(q, table, n, near)
    best = float(np.min(exact))
    tied = near[exact <= best + _TIE_BAND * scale]
    return int(np.min(tied))


def _slow_scores(q, table, n, candidates, block=256):
    k = np.arange(n, dtype=np.int64)
    out = np.empty(candidates.size)
    for start in range(0, candidates.size, block):
        c = candidates[start:start + block]
        out[start:start + block] = table[np.outer(c, k) % n] @ q
    return out


class _FastScorer:
    """Cyclic-correlation scorer over the multiplicative group of prime n."""

    def __init__(self, n, table):
        self.n = n
        g = primitive_root(n)
        m = n - 1
        perm = np.empty(m, dtype=np.int64)
        perm[0] = 1
        for i in range(1, m):
            perm[i] = (perm[i - 1] * g) % n
        self.perm = perm
        self.table_fft = np.fft.rfft(table[perm])
        self.candidates = perm  # candidate g^a sits at position a

    def __call__(self, q):
        Q = q[self.perm]
        # S[a] = sum_b Q[b] W[(a + b) mod m]
        m = self.n - 1
        return np.fft.irfft(np.conj(np.fft.rfft(Q)) * self.table_fft, n=m)


def cbc_construct(n, s, gamma, slow=False):
    """Component-by-component generating vector for product weights.

    Parameters
    ----------
    n : int
        Number of points, ``n >= 2``.  Prime ``n`` uses the FFT path unless
        ``slow`` is set; composite ``n`` always uses the direct scan.
    s : int
        Dimension.
    gamma : array-like
        Positive product weights, at least ``s`` of them.
    slow : bool
        Force the O(s n^2) direct scan.

    Returns
    -------
    LatticeRule
    """
    n = check_positive_int(n, "n", minimum=2)
    s = check_positive_int(s, "s")
    gamma = _check_gamma(gamma, s)
    table = _kernel_table(n)
    fast = is_prime(n) and not slow and n > 2
    if fast:
        scorer = _FastScorer(n, table)
        candidates = scorer.candidates
    else:
        candidates = np.array([c for c in range(1, n) if math.gcd(c, n) == 1], dtype=np.int64)

    z = np.empty(s, dtype=np.int64)
    logp = np.zeros(n)
    for d in range(s):
        q = np.expm1(logp)
        if not np.any(q):
            # every candidate scores the same
            zd = int(np.min(candidates))
        else:
            approx = scorer(q) if fast else _slow_scores(q, table, n, candidates)
            zd = _pick(q, table, n, candidates, approx)
        z[d] = zd
        logp += _log_factors(n, zd, gamma[d], table)
    return LatticeRule(n, z)


def lattice_points(rule, shift=None, i=None):
    """Shifted lattice points ``frac(i z / n + shift)``.

    With ``i`` an integer in ``1..n`` a single point of shape ``(s,)`` is
    returned; with ``i=None`` all ``n`` points, ordered ``i = 1..n``.
    """
    n, z = rule.n, rule.z
    shift = np.zeros(z.size) if shift is None else np.asarray(shift, dtype=float)
    if shift.shape != z.shape:
        raise ParameterError("shift must have one entry per dimension")
    if np.any(shift < 0) or np.any(shift >= 1):
        raise ParameterError("shift coordinates must lie in [0, 1)")
    if i is None:
        idx = np.arange(1, n + 1, dtype=np.int64)[:, None]
    else:
        if not 1 <= int(i) <= n:
            raise DomainError(f"point index {i} outside 1..{n}")
        idx = np.int64(i)
    base = ((idx * z) % n) / n
    pts = base + shift
    pts -= np.floor(pts)
    return pts


def _norm_cdf(x):
    return 0.5 * erfc(-x / _SQRT2)


# rational approximation coefficients (Acklam)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def inverse_normal_cdf(v):
    """Standard normal quantile for ``0 < v < 1``.

    Rational initial guess followed by one Halley step against an
    erfc-based CDF; absolute error is at the level of double rounding.
    """
    p = np.asarray(v, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("inverse_normal_cdf requires 0 < v < 1")
    x = np.empty_like(p)
    low = p < _P_LOW
    high = p > 1 - _P_LOW
    mid = ~(low | high)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1
        x[mid] = num / den
    for mask, sign, tail in ((low, -1.0, p), (high, 1.0, 1.0 - p)):
        if np.any(mask):
            t = np.sqrt(-2.0 * np.log(tail[mask]))
            num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
            den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1
            x[mask] = -sign * num / den

    # Halley refinement; the upper half is refined through its mirror image
    # so that erfc never loses digits near 1
    upper = p > 0.5
    pm = np.where(upper, 1.0 - p, p)
    xm = np.where(upper, -x, x)
    e = _norm_cdf(xm) - pm
    u = e * _SQRT2PI * np.exp(0.5 * xm * xm)
    xm = xm - u / (1.0 + 0.5 * xm * u)
    x = np.where(upper, -xm, xm)
    x = np.where(p == 0.5, 0.0, x)
    return float(x) if x.ndim == 0 else x


def gaussian_nodes(rule, shift, i=None):
    """``inverse_normal_cdf(lattice_points(rule, shift, i))`` coordinate-wise."""
    return inverse_normal_cdf(lattice_points(rule, shift, i))


def shift_generator(seed, stream):
    """Counter-based generator for shift replicate ``stream`` of experiment ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


class CBCLatticeRule(BaseEstimator):
    """Randomly shifted rank-1 lattice rule built by the CBC algorithm.

    Parameters
    ----------
    n : int
        Number of points.
    n_shifts : int
        Number of independent random shifts used by :meth:`integrate`.
    random_state : int
        Seed of the shift streams.
    slow : bool
        Force the direct O(s n^2) construction.

    Attributes
    ----------
    rule_ : LatticeRule
    worst_case_error_ : float
    """

    def __init__(self, n=127, n_shifts=16, random_state=0, slow=False):
        self.n = n
        self.n_shifts = n_shifts
        self.random_state = random_state
        self.slow = slow

    def fit(self, gamma, y=None):
        gamma = _check_gamma(gamma)
        self.rule_ = cbc_construct(self.n, gamma.size, gamma, slow=self.slow)
        self.gamma_ = gamma
        self.worst_case_error_ = worst_case_error(self.rule_, gamma)
        return self

    @property
    def z_(self):
        check_is_fitted(self, "rule_")
        return self.rule_.z

    def shift(self, index):
        check_is_fitted(self, "rule_")
        return shift_generator(self.random_state, index).random(self.rule_.s)

    def nodes(self, index):
        """All ``n`` Gaussian nodes for shift replicate ``index``, shape ``(n, s)``."""
        return gaussian_nodes(self.rule_, self.shift(index))

    def integrate(self, func):
        """Shift estimates of ``E[func(Y)]`` for ``func`` acting on ``(n, s)`` blocks.

        Returns the array of ``n_shifts`` equal-weight averages.
        """
        return np.array([float(np.mean(func(self.nodes(r)))) for r in range(self.n_shifts)])
