import math
import warnings

import numpy as np
import pytest
from scipy.special import ndtri

from lognormal_qmc.config import ExperimentConfig
from lognormal_qmc.exceptions import ParameterError
from lognormal_qmc.fem import Mesh1D, assemble_solve, functional_G
from lognormal_qmc.harness import (
    MC_STREAM, REFERENCE_STREAM, CostBenchmark, Experiment, besov_ensemble, cbc_cost_benchmark,
    cbc_operation_counts,
    experiment, fit_rate, mc_baseline, model_weights, qmc_estimate, rms_shift_error,
    run_convergence, thread_count, truncation_rate, truncation_study,
)
from lognormal_qmc.lattice import shift_generator
from lognormal_qmc.wavelet import WaveletModel, check_assumption_b1, rho_sequence

SMALL_MODEL = WaveletModel(beta1=6.0, theta=2.25, ell0=1, L=3)
SMALL = ExperimentConfig(model=SMALL_MODEL, n_elements=32, n_list=(31, 61, 127, 251), R=8,
                         n_ref=2039, R_ref=8)


def test_fit_rate_exact_power_laws():
    ns = np.array([31, 61, 127, 251, 509])
    fit = fit_rate(ns, 1.0 / ns)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.residual_stderr < 1e-12
    assert fit_rate(ns, 3.0 * ns ** -0.5).slope == pytest.approx(-0.5, abs=1e-12)


def test_fit_rate_drops_zeros_and_needs_four_points():
    ns = [10, 20, 40, 80, 160]
    with pytest.warns(UserWarning):
        fit = fit_rate(ns, [0.1, 0.05, 0.0, 0.0125, 0.00625])
    assert fit.n_used == 4 and fit.slope == pytest.approx(-1.0)
    with pytest.raises(ParameterError):
        fit_rate([1, 2, 3], [1, 1, 1])


def _naive_G_one_level(y, n_elements):
    """Dense FEM for the single-level Haar field a = exp(+-y) on the two halves."""
    h = 1.0 / n_elements
    mid = (np.arange(n_elements) + 0.5) * h
    a = np.where(mid < 0.5, math.exp(y), math.exp(-y))
    K = np.zeros((n_elements - 1, n_elements - 1))
    for e in range(n_elements):
        for p in (e - 1, e):
            for q in (e - 1, e):
                if 0 <= p < n_elements - 1 and 0 <= q < n_elements - 1:
                    K[p, q] += a[e] / h * (1 if p == q else -1)
    u = np.linalg.solve(K, np.full(n_elements - 1, h))
    return h * u.sum()


@pytest.mark.parametrize("n", [2, 3])
def test_qmc_estimate_matches_naive_one_level(n):
    model = WaveletModel(beta1=4.0, theta=1.2, ell0=0, L=0)
    cfg = ExperimentConfig(model=model, n_elements=16, n_list=(2, 3), R=8, n_ref=24, R_ref=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = experiment(cfg).rule(n).z
        for shift in range(3):
            delta = shift_generator(cfg.seed, shift).random(1)
            v = np.mod(np.arange(1, n + 1) * z[0] / n + delta[0], 1.0)
            naive = sum(_naive_G_one_level(yv, 16) for yv in ndtri(v)) / n
            assert qmc_estimate(cfg, n, shift) == pytest.approx(naive, abs=1e-13)


def test_constant_integrand():
    model = WaveletModel(beta1=6.0, theta=2.25, ell0=1, L=3, amplitude=0.0)
    cfg = ExperimentConfig(model=model, n_elements=32, n_list=(31, 61, 127, 251), R=8, n_ref=2039, R_ref=2)
    G = functional_G(assemble_solve(1.0, 1.0, Mesh1D(32)))
    for shift in range(3):
        assert qmc_estimate(cfg, 31, shift) == pytest.approx(G, rel=1e-14)
    assert rms_shift_error(cfg, 61) < 1e-14
    assert mc_baseline(cfg, 31).rms_error < 1e-14


def test_determinism_and_stream_separation():
    exp = Experiment(SMALL)
    a = exp.shift_estimates(61)
    np.testing.assert_array_equal(a, Experiment(SMALL).shift_estimates(61))
    assert len(set(a.tolist())) == a.size
    assert REFERENCE_STREAM > 10 ** 5 and MC_STREAM > REFERENCE_STREAM + 10 ** 5


def test_rms_invariant_under_shift_reordering():
    exp = experiment(SMALL)
    est = exp.shift_estimates(61)
    assert exp.rms_shift_error(61, est[::-1]) == pytest.approx(exp.rms_shift_error(61, est), rel=1e-15)


def test_rms_stable_when_doubling_R():
    exp = experiment(SMALL)
    ref, _ = exp.reference()
    e16 = (exp.shift_estimates(127, 16) - ref) ** 2
    e32 = (exp.shift_estimates(127, 32) - ref) ** 2
    se = np.std(e32, ddof=1) / math.sqrt(e32.size)
    assert abs(e16.mean() - e32.mean()) < 3 * se * math.sqrt(2)


def test_shift_mean_matches_high_n_reference():
    exp = experiment(SMALL)
    est = exp.shift_estimates(251, 64)
    ref = exp.shift_estimates(32749, 4, offset=5000)
    se = math.hypot(np.std(est, ddof=1) / 8, np.std(ref, ddof=1) / 2)
    assert abs(est.mean() - ref.mean()) <= 4 * se


def test_small_convergence_run(tmp_path):
    result = run_convergence(SMALL, with_mc=True)
    assert result.qmc_ready
    assert all(v >= 0 for v in result.rms_error.values())
    assert math.isfinite(result.fit.slope) and result.fit.slope < result.mc_fit.slope
    summary = result.summary()
    assert summary["config_hash"] == SMALL.config_hash()
    assert [row["n"] for row in summary["per_n"]] == list(SMALL.n_list)
    lines = result.shifts_csv().splitlines()
    assert lines[0] == "n,shift,estimate,error" and len(lines) == 1 + SMALL.R * len(SMALL.n_list)
    a = result.write(tmp_path / "a")
    b = run_convergence(SMALL, with_mc=True).write(tmp_path / "b")
    for name in ("shifts.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "timing.json").exists()


def test_model_weights_have_finite_log_constants():
    w = model_weights(SMALL_MODEL, SMALL.q, SMALL.delta)
    assert w.gamma_.size == SMALL_MODEL.n_params
    assert np.all(w.gamma_ > 0)
    assert math.isfinite(w.log_C_rho_q_) and math.isfinite(w.C0_)
    assert w.kappa == pytest.approx(check_assumption_b1(SMALL_MODEL).analytic)
    np.testing.assert_array_equal(w.rho_, rho_sequence(SMALL_MODEL))


def test_non_ready_model_warns():
    cfg = ExperimentConfig(model=WaveletModel(beta1=4.0, theta=1.2, L=3), n_elements=16,
                           n_list=(31, 61, 127, 251), R=8, n_ref=2039, R_ref=2)
    with pytest.warns(UserWarning, match="qmc-ready"):
        assert not Experiment(cfg).rate_assertions_enabled


def test_thread_count(monkeypatch):
    monkeypatch.delenv("QMC_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("QMC_THREADS", "3")
    assert thread_count() == 3
    a = Experiment(SMALL).shift_estimates(31)
    monkeypatch.setenv("QMC_THREADS", "1")
    np.testing.assert_array_equal(a, Experiment(SMALL).shift_estimates(31))
    monkeypatch.setenv("QMC_THREADS", "x")
    with pytest.raises(ParameterError):
        thread_count()


def test_cost_benchmark_table():
    bench = cbc_cost_benchmark((127, 257, 509, 1021), (4, 8), repeats=1)
    assert set(bench.table) == {(n, s) for n in (127, 257, 509, 1021) for s in (4, 8)}
    assert all(t > 0 for t in bench.table.values())
    assert len(bench.rows()) == 8
    with pytest.raises(ParameterError):
        cbc_cost_benchmark((128,), (4,))


def test_cost_benchmark_exponents_synthetic():
    n_list, s_list = (100, 200, 400), (10, 20)
    table = {(n, s): 1e-6 * n * s for n in n_list for s in s_list}
    bench = CostBenchmark(table, n_list, s_list)
    assert bench.n_exponent() == pytest.approx(1.0) and bench.s_exponent() == pytest.approx(1.0)
    assert bench.n_exponent_ok and bench.s_linear_ok
    assert bench.ratio(100, 200, 10) == pytest.approx(2.0) and bench.s_ratio(100, 10, 20) == pytest.approx(2.0)
    assert bench.median_ratio(100, 400) == pytest.approx(4.0) and bench.median_s_ratio(10, 20) == pytest.approx(2.0)


def test_truncation_study_small():
    cfg = ExperimentConfig(model=WaveletModel(beta1=4.0, theta=1.2, L=6), n_elements=128,
                           n_list=(31, 61, 127, 251), R=8, n_ref=2039)
    study = truncation_study(cfg, [1, 2, 3, 4, 6], n_samples=200)
    assert study.mean_gap[-1] == 0.0
    assert study.monotone
    assert study.predicted_rate == pytest.approx(1.5)
    assert -study.slope >= 1.0
    with pytest.raises(ParameterError):
        truncation_study(cfg, [3, 2])
    with pytest.raises(ParameterError):
        truncation_study(cfg, [1, 7])


def test_truncation_rate_defaults():
    assert truncation_rate(WaveletModel(beta1=4.0, theta=1.2)) == 1.5
    assert truncation_rate(WaveletModel(beta1=5.0, theta=0.5, basis="hat")) == 1.0


def test_besov_ensemble_analytic():
    m = WaveletModel(beta1=3.0, theta=0.5, basis="hat", L=6)
    t = 0.8
    out = besov_ensemble(m, t, [3, 6], n_samples=500, seed=1)
    exact = [sum(2.0 ** (2 * ell * t) * 2.0 ** ell * 2.0 ** (-3.0 * ell) for ell in range(L + 1)) for L in (3, 6)]
    np.testing.assert_allclose(out, exact, rtol=0.1)


def test_operation_counts():
    ops = cbc_operation_counts(1024, 10)
    assert ops["product"] == 10 * 1024 * 10
    assert ops["pod"] - ops["product"] == 100 * 1024
