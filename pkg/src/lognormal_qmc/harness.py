"""QMC and MC experiments for ``E[G(u)]`` with the wavelet-driven coefficient."""

import csv
import functools
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from ._validation import check_positive_int
from .config import ExperimentConfig
from .exceptions import CoercivityError, ParameterError
from .fem import DiffusionFunctional, nodal_v_norms
from .lattice import cbc_construct, gaussian_nodes, is_prime, shift_generator
from .wavelet import (FieldRealization, besov_norm, besov_threshold, check_assumption_b1,
                      rho_of_index, rho_power_tail, rho_sequence, sample_parameters)
from .weights import ProductWeights, choose_lambda, default_alpha, log_varsigma

# stream offsets keep shift, reference and MC draws independent
REFERENCE_STREAM = 1 << 20
MC_STREAM = 1 << 21
_CHUNK = 4096


def thread_count():
    """Worker cap from ``QMC_THREADS`` (default 1)."""
    raw = os.environ.get("QMC_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ParameterError(f"QMC_THREADS must be an integer, got {raw!r}") from exc
    return max(1, value)


def _ordered_map(func, items):
    items = list(items)
    workers = min(thread_count(), len(items)) or 1
    if workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def model_weights(model, q, delta):
    """Product weights for the model's ``rho``, with closed-form tails beyond level ``L``.

    For levels above ``L`` the weight-function rate ``1 + ln2/rho`` is at most
    its level-``L+1`` value, so ``varsigma`` there bounds every omitted term.
    """
    lam = choose_lambda(q, delta)
    rho_next = rho_of_index(model, model.L + 1)
    log_vs_next = float(log_varsigma(lam, float(default_alpha(rho_next))))
    expo = 2.0 * lam / (1.0 + lam)
    beta_tail = math.exp(log_vs_next / (1.0 + lam)) * rho_power_tail(model, expo)
    tails = (beta_tail, math.log(2.0) ** 2 * rho_power_tail(model, 2.0),
             math.log(2.0) * rho_power_tail(model, 1.0))
    kappa = check_assumption_b1(model).analytic
    return ProductWeights(q=q, delta=delta, kappa=kappa, tails=tails).fit(rho_sequence(model))


class Experiment:
    """Weights, lattice rules and solver shared by every estimate of one config."""

    def __init__(self, config):
        self.config = config
        self.model = config.model
        if not self.model.qmc_ready(config.q):
            warnings.warn("model is not qmc-ready for this q; rate assertions are disabled")
        self.rho = rho_sequence(self.model)
        self.weights = model_weights(self.model, config.q, config.delta)
        # weights that underflow carry no information for the CBC choice
        self.gamma = np.maximum(self.weights.gamma_, np.finfo(float).tiny)
        self.solver = DiffusionFunctional(self.model, n_elements=config.n_elements).fit()
        self._rules = {}
        self._reference = None

    @property
    def rate_assertions_enabled(self):
        return self.model.qmc_ready(self.config.q)

    def rule(self, n):
        if n not in self._rules:
            if not is_prime(n):
                warnings.warn(f"n={n} is not prime; using the direct CBC search")
            self._rules[n] = cbc_construct(n, self.model.n_params, self.gamma)
        return self._rules[n]

    def integrand(self, Y):
        """``G(u(., y))`` for a block of parameter vectors, evaluated in chunks."""
        out = np.empty(Y.shape[0])
        for start in range(0, Y.shape[0], _CHUNK):
            block = Y[start:start + _CHUNK]
            try:
                out[start:start + _CHUNK] = self.solver.predict(block)
            except CoercivityError as exc:
                raise CoercivityError(f"{exc}; node block starting at {start}: "
                                      f"{np.array2string(block[:4], precision=6)}") from exc
        return out

    def shift_estimate(self, n, stream):
        rule = self.rule(n)
        delta = shift_generator(self.config.seed, stream).random(rule.s)
        return math.fsum(self.integrand(gaussian_nodes(rule, delta))) / n

    def qmc_estimate(self, n, shift_index):
        return self.shift_estimate(n, shift_index)

    def shift_estimates(self, n, R=None, offset=0):
        R = self.config.R if R is None else R
        return np.array(_ordered_map(lambda r: self.shift_estimate(n, offset + r), range(R)))

    def reference(self):
        if self._reference is None:
            est = self.shift_estimates(self.config.n_ref, self.config.R_ref, REFERENCE_STREAM)
            self._reference = (math.fsum(est) / est.size, float(np.std(est, ddof=1) / math.sqrt(est.size)))
        return self._reference

    def rms_shift_error(self, n, estimates=None):
        est = self.shift_estimates(n) if estimates is None else np.asarray(estimates)
        ref, _ = self.reference()
        return math.sqrt(math.fsum((est - ref) ** 2) / est.size)

    def mc_estimates(self, n, R=None):
        R = self.config.R if R is None else R

        def one(r):
            Y = shift_generator(self.config.seed, MC_STREAM + r).standard_normal((n, self.model.n_params))
            return math.fsum(self.integrand(Y)) / n

        return np.array(_ordered_map(one, range(R)))


@functools.lru_cache(maxsize=8)
def experiment(config):
    return Experiment(config)


def qmc_estimate(config, n, shift_index):
    """Shifted-lattice estimate of ``E[G(u^s)]`` with ``n`` points and shift ``shift_index``."""
    return experiment(config).qmc_estimate(n, shift_index)


def rms_shift_error(config, n):
    return experiment(config).rms_shift_error(n)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    intercept_stderr: float
    residual_stderr: float
    n_used: int


def fit_rate(ns, rms):
    """Least-squares fit of ``log rms`` against ``log n``; zero errors are dropped with a warning."""
    ns = np.asarray(ns, dtype=float)
    rms = np.asarray(rms, dtype=float)
    if ns.shape != rms.shape:
        raise ParameterError("ns and rms must have the same length")
    keep = rms > 0
    if not np.all(keep):
        warnings.warn(f"dropping {int(np.sum(~keep))} zero-error point(s) from the fit")
    if np.sum(keep) < 4:
        raise ParameterError("need at least four positive errors to fit a rate")
    x, y = np.log(ns[keep]), np.log(rms[keep])
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    dof = max(x.size - 2, 1)
    return RateFit(float(res.slope), float(res.intercept), float(res.stderr),
                   float(res.intercept_stderr), float(math.sqrt(np.sum(resid ** 2) / dof)), int(x.size))


@dataclass(frozen=True)
class MCResult:
    n: int
    rms_error: float
    estimates: np.ndarray = field(repr=False)


def mc_baseline(config, n):
    """RMS error over ``R`` plain Monte Carlo replicates of size ``n``."""
    exp = experiment(config)
    est = exp.mc_estimates(n)
    ref, _ = exp.reference()
    return MCResult(n, math.sqrt(math.fsum((est - ref) ** 2) / est.size), est)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    ns: tuple
    estimates: dict
    rms_error: dict
    reference: float
    reference_stderr: float
    fit: RateFit
    qmc_ready: bool
    mc_rms_error: dict = None
    mc_fit: RateFit = None
    wall_time: dict = field(default_factory=dict)

    def mean_estimate(self, n):
        return math.fsum(self.estimates[n]) / len(self.estimates[n])

    def summary(self):
        out = {
            "config_hash": self.config.config_hash(),
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "reference": {"value": self.reference, "stderr": self.reference_stderr,
                          "n_ref": self.config.n_ref, "R_ref": self.config.R_ref,
                          "stream_offset": REFERENCE_STREAM},
            "qmc_ready": self.qmc_ready,
            "per_n": [{"n": n, "rms_error": self.rms_error[n], "mean_estimate": self.mean_estimate(n)}
                      for n in self.ns],
            "fit": self.fit.__dict__,
        }
        if self.mc_rms_error is not None:
            out["mc"] = {"per_n": [{"n": n, "rms_error": self.mc_rms_error[n]} for n in self.ns],
                         "fit": self.mc_fit.__dict__, "stream_offset": MC_STREAM}
        return out

    def shifts_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "shift", "estimate", "error"])
        for n in self.ns:
            for r, e in enumerate(self.estimates[n]):
                w.writerow([n, r, repr(float(e)), repr(float(e - self.reference))])
        return buf.getvalue()

    def write(self, directory):
        """Write ``shifts.csv``, ``summary.json`` and (separately) ``timing.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "shifts.csv").write_text(self.shifts_csv())
        (d / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        (d / "timing.json").write_text(json.dumps({str(k): v for k, v in self.wall_time.items()},
                                                  indent=2) + "\n")
        return d


def run_convergence(config, with_mc=False):
    """Shift-RMS errors for every ``n`` in the config, plus the fitted rate."""
    exp = experiment(config)
    wall = {}
    t0 = time.perf_counter()
    ref, ref_se = exp.reference()
    wall["reference"] = time.perf_counter() - t0
    estimates, rms = {}, {}
    for n in config.n_list:
        t0 = time.perf_counter()
        estimates[n] = exp.shift_estimates(n)
        rms[n] = exp.rms_shift_error(n, estimates[n])
        wall[n] = time.perf_counter() - t0
    fit = fit_rate(config.n_list, [rms[n] for n in config.n_list])
    result = ExperimentResult(config, config.n_list, estimates, rms, ref, ref_se, fit,
                              exp.rate_assertions_enabled, wall_time=wall)
    if with_mc:
        mc = {}
        for n in config.n_list:
            t0 = time.perf_counter()
            mc[n] = mc_baseline(config, n).rms_error
            wall[f"mc_{n}"] = time.perf_counter() - t0
        result.mc_rms_error = mc
        result.mc_fit = fit_rate(config.n_list, [mc[n] for n in config.n_list])
    return result


@dataclass(frozen=True)
class CostBenchmark:
    table: dict
    n_list: tuple
    s_list: tuple

    def time(self, n, s):
        return self.table[(n, s)]

    def n_exponent(self, s=None):
        """Slope of ``log t`` against ``log n`` at fixed ``s`` (largest by default)."""
        s = self.s_list[-1] if s is None else s
        t = [self.table[(n, s)] for n in self.n_list]
        return float(stats.linregress(np.log(self.n_list), np.log(t)).slope)

    def s_exponent(self, n=None):
        n = self.n_list[-1] if n is None else n
        t = [self.table[(n, s)] for s in self.s_list]
        return float(stats.linregress(np.log(self.s_list), np.log(t)).slope)

    def ratio(self, n1, n2, s):
        return self.table[(n2, s)] / self.table[(n1, s)]

    def s_ratio(self, n, s1, s2):
        return self.table[(n, s2)] / self.table[(n, s1)]

    def median_ratio(self, n1, n2):
        """Median over ``s`` of the time ratio from ``n1`` to ``n2`` points."""
        return float(np.median([self.ratio(n1, n2, s) for s in self.s_list]))

    def median_s_ratio(self, s1, s2):
        """Median over ``n`` of the time ratio from ``s1`` to ``s2`` dimensions."""
        return float(np.median([self.s_ratio(n, s1, s2) for n in self.n_list]))

    @property
    def n_exponent_ok(self):
        return 0.9 <= self.n_exponent() <= 1.4

    @property
    def s_linear_ok(self):
        return abs(self.s_exponent() - 1.0) <= 0.2

    def rows(self):
        return [{"n": n, "s": s, "seconds": self.table[(n, s)]} for n in self.n_list for s in self.s_list]


def cbc_operation_counts(n, s):
    """Leading operation counts of fast CBC: product weights versus POD weights.

    Only the count model is provided for POD weights; the construction itself
    is implemented for product weights alone.
    """
    fft = s * n * math.log2(n)
    return {"product": fft, "pod": fft + s * s * n}


def cbc_cost_benchmark(n_list=(7681, 15361, 40961, 65537), s_list=(16, 32, 64), gamma=0.01,
                       repeats=7, slow=False):
    """Minimum wall time over ``repeats`` runs of the CBC construction per ``(n, s)``.

    Repeats sweep the whole grid in turn, so a transient slowdown of the
    machine inflates one sample per cell rather than every sample of one cell.
    """
    n_list = tuple(int(n) for n in n_list)
    s_list = tuple(int(s) for s in s_list)
    for n in n_list:
        if not is_prime(n):
            raise ParameterError(f"benchmark point counts must be prime, got {n}")
    check_positive_int(repeats, "repeats")
    table = {(n, s): math.inf for n in n_list for s in s_list}
    for _ in range(repeats):
        for n, s in table:
            g = np.full(s, float(gamma))
            t0 = time.perf_counter()
            cbc_construct(n, s, g, slow=slow)
            table[(n, s)] = min(table[(n, s)], time.perf_counter() - t0)
    return CostBenchmark(table, n_list, s_list)


@dataclass(frozen=True)
class TruncationStudy:
    L_list: tuple
    L_ref: int
    mean_gap: tuple
    stderr_gap: tuple
    mean_coef_gap: tuple
    slope: float
    slope_stderr: float
    coef_slope: float
    predicted_rate: float
    n_samples: int

    @property
    def monotone(self):
        g, se = np.array(self.mean_gap), np.array(self.stderr_gap)
        return bool(np.all(g[1:] <= g[:-1] + 3 * np.hypot(se[1:], se[:-1])))

    @property
    def rate_consistent(self):
        return abs(-self.slope - self.predicted_rate) <= 0.25

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def truncation_rate(model, t=None):
    """Per-level ``log2`` decay rate ``d (beta1 - 1)/2 - t`` of the truncation bound.

    ``t`` defaults to the basis Hölder floor: 0 for Haar, 1 for the hat family.
    """
    if t is None:
        t = model.holder_exponent or 0.0
    return besov_threshold(model.d, model.beta1) - t


def truncation_study(config, L_list, n_samples=200, t=0.0):
    """Monte Carlo mean of ``‖u^{ref} - u^{s(L)}‖_V`` for each ``L`` in ``L_list``.

    The reference level is ``config.model.L``; ``u^{s(L)}`` reuses the
    leading entries of the same parameter draw.
    """
    L_list = tuple(int(L) for L in L_list)
    model = config.model
    if any(b <= a for a, b in zip(L_list, L_list[1:])):
        raise ParameterError("L_list must be strictly increasing")
    if L_list[0] < model.ell0 or L_list[-1] > model.L:
        raise ParameterError("levels must lie between ell0 and the reference level")
    check_positive_int(n_samples, "n_samples", minimum=2)
    solver = DiffusionFunctional(model, n_elements=config.n_elements).fit()
    Y = sample_parameters(model, n_samples, config.seed)
    U_ref = solver.transform(Y)
    a_ref = solver.coefficient(Y).reshape(n_samples, -1)
    gaps, coef_gaps = [], []
    for L in L_list:
        Yt = np.zeros_like(Y)
        k = model.with_level(L).n_params
        Yt[:, :k] = Y[:, :k]
        U = solver.transform(Yt)
        gaps.append(nodal_v_norms(U_ref - U, solver.mesh_.h))
        coef_gaps.append(np.max(np.abs(a_ref - solver.coefficient(Yt).reshape(n_samples, -1)), axis=1))
    mean = tuple(float(np.mean(g)) for g in gaps)
    se = tuple(float(np.std(g, ddof=1) / math.sqrt(n_samples)) for g in gaps)
    cmean = tuple(float(np.mean(g)) for g in coef_gaps)
    use = [i for i, L in enumerate(L_list) if L < model.L and mean[i] > 0]
    if len(use) >= 2:
        fit = stats.linregress([L_list[i] for i in use], np.log2([mean[i] for i in use]))
        cfit = stats.linregress([L_list[i] for i in use], np.log2([cmean[i] for i in use]))
        slope, slope_se, cslope = float(fit.slope), float(fit.stderr), float(cfit.slope)
    else:
        slope = slope_se = cslope = float("nan")
    return TruncationStudy(L_list, model.L, mean, se, cmean, slope, slope_se, cslope,
                           truncation_rate(model, t), n_samples)


def besov_ensemble(model, t, L_list, n_samples=1000, seed=0, p=2.0, q_besov=2.0, t_star=None):
    """Ensemble mean of ``‖T^L‖^{q}`` in the sequence Besov norm for each ``L``."""
    L_max = max(L_list)
    top = model.with_level(L_max)
    Y = sample_parameters(top, n_samples, seed)
    out = []
    for L in L_list:
        m = model.with_level(L)
        k = m.n_params
        vals = [besov_norm(FieldRealization(m, Y[i, :k]), t, p, q_besov, t_star) ** q_besov
                for i in range(n_samples)]
        out.append(float(np.mean(vals)))
    return np.array(out)
