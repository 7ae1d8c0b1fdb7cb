"""Command-line entry point ``lognormal-qmc``."""

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, model_from_mapping, parse_text
from .exceptions import ArtifactError
from .fem import DiffusionFunctional, derivative_bound_check, strang_truncation_gap
from .harness import (cbc_cost_benchmark, cbc_operation_counts, experiment, fit_rate, mc_baseline,
                      model_weights, run_convergence, truncation_study)
from .lattice import CBCLatticeRule
from .wavelet import FieldRealization, field_snapshot, read_parameters, sample_parameters, write_parameters


def _emit(payload, output=None):
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer, np.floating, np.bool_)):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _config(args):
    return ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()


def _model(args):
    if not args.config:
        return ExperimentConfig().model
    return model_from_mapping(parse_text(Path(args.config).read_text()))


def _n_elements(args):
    """``--n-elements`` if given, else the config value, else 256."""
    if args.n_elements is not None:
        return args.n_elements
    if args.config:
        raw = parse_text(Path(args.config).read_text())
        if "n_elements" in raw:
            return int(raw["n_elements"])
    return ExperimentConfig.n_elements


def _parameters(args, model):
    if getattr(args, "y", None):
        return read_parameters(args.y)
    return sample_parameters(model, 1, args.seed)[0]


def _load_weights(path):
    text = Path(path).read_text().strip()
    if text.startswith("[") or text.startswith("{"):
        data = json.loads(text)
        return np.asarray(data["gamma"] if isinstance(data, dict) else data, dtype=float)
    return np.asarray([float(v) for v in text.replace(",", " ").split()])


def cmd_cbc(args):
    if args.weights:
        gamma = _load_weights(args.weights)
    else:
        cfg = _config(args)
        gamma = experiment(cfg).gamma
    if args.s is not None:
        if args.s > gamma.size:
            raise ArtifactError(f"need {args.s} weights, only {gamma.size} given")
        gamma = gamma[: args.s]
    est = CBCLatticeRule(n=args.n, slow=args.slow).fit(gamma)
    _emit({"n": args.n, "s": int(gamma.size), "z": est.z_, "worst_case_error_sq": est.worst_case_error_},
          args.output)
    return 0


def cmd_weights(args):
    cfg = _config(args)
    est = model_weights(cfg.model, cfg.q, cfg.delta)
    payload = est.to_dict()
    payload["log10_error_bound"] = {str(n): est.log_error_bound(n) / math.log(10.0) for n in cfg.n_list}
    payload["qmc_ready"] = cfg.model.qmc_ready(cfg.q)
    _emit(payload, args.output)
    return 0


def cmd_solve(args):
    model = _model(args)
    y = _parameters(args, model)
    solver = DiffusionFunctional(model, n_elements=_n_elements(args)).fit()
    sol = solver.solution(y)
    nodes = np.concatenate([[0.0], sol.mesh.nodes, [1.0]])
    lines = ["x,u"] + [f"{x!r},{u!r}" for x, u in zip(nodes.tolist(), sol.with_boundary().tolist())]
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n")
    G = float(solver.predict(y[None, :])[0])
    print(json.dumps({"G": G, "residual": sol.residual, "n_elements": sol.mesh.n_elements}))
    return 0


def cmd_sample(args):
    model = _model(args)
    y = sample_parameters(model, 1, args.seed)[0]
    write_parameters(y, args.output)
    if args.snapshot:
        Path(args.snapshot).write_text(field_snapshot(FieldRealization(model, y), args.resolution))
    print(json.dumps({"s": int(y.size), "output": args.output}))
    return 0


def cmd_check_derivative(args):
    model = _model(args)
    y = _parameters(args, model)
    rep = derivative_bound_check(model, y, args.j, fd_step=args.fd_step, n_elements=_n_elements(args))
    _emit({**rep.__dict__, "ratio": rep.ratio, "passed": rep.passed}, args.output)
    return 0 if rep.passed else 1


def cmd_check_strang(args):
    model = _model(args)
    y = _parameters(args, model)
    rep = strang_truncation_gap(model, y, args.L_small, n_elements=_n_elements(args))
    _emit({**rep.__dict__, "passed": rep.passed}, args.output)
    return 0 if rep.passed else 1


def cmd_converge(args):
    cfg = _config(args)
    result = run_convergence(cfg, with_mc=args.mc)
    out = args.output or cfg.output
    if out:
        result.write(out)
    summary = result.summary()
    _emit({"fit": summary["fit"], "per_n": summary["per_n"], "qmc_ready": result.qmc_ready,
           **({"mc_fit": summary["mc"]["fit"]} if args.mc else {})})
    if args.assert_:
        ok = result.qmc_ready and result.fit.slope <= -0.8 and result.fit.stderr <= 0.1
        if args.mc:
            ok = ok and result.fit.slope <= result.mc_fit.slope - 0.2
        return 0 if ok else 1
    return 0


def cmd_mc(args):
    cfg = _config(args)
    rms = [mc_baseline(cfg, n).rms_error for n in cfg.n_list]
    fit = fit_rate(cfg.n_list, rms)
    payload = {"per_n": [{"n": n, "rms_error": r} for n, r in zip(cfg.n_list, rms)], "fit": fit.__dict__}
    _emit(payload, args.output)
    if args.assert_:
        return 0 if -0.65 <= fit.slope <= -0.35 else 1
    return 0


def cmd_truncate(args):
    cfg = _config(args)
    L_list = args.L or list(range(cfg.model.ell0 + 1, cfg.model.L - 1))
    study = truncation_study(cfg, L_list, n_samples=args.samples)
    _emit({**study.to_dict(), "monotone": study.monotone, "rate_consistent": study.rate_consistent},
          args.output)
    if args.assert_:
        return 0 if study.monotone and study.rate_consistent else 1
    return 0


def cmd_bench_cbc(args):
    bench = cbc_cost_benchmark(args.n, args.s, repeats=args.repeats)
    payload = {"rows": [{**row, "operations": cbc_operation_counts(row["n"], row["s"])}
                        for row in bench.rows()]}
    if len(args.n) >= 2:
        payload["n_exponent"] = bench.n_exponent()
    if len(args.s) >= 2:
        payload["s_exponent"] = bench.s_exponent()
    _emit(payload, args.output)
    if args.assert_:
        ok = (len(args.n) < 2 or bench.n_exponent_ok) and (len(args.s) < 2 or bench.s_linear_ok)
        return 0 if ok else 1
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lognormal-qmc",
                                description="Lattice-rule QMC for lognormal diffusion problems.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True, output=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            sp.add_argument("--config", help="key = value config file")
        if output:
            sp.add_argument("--output", help="output file or directory")
        sp.set_defaults(func=func)
        return sp

    sp = add("cbc", cmd_cbc, "construct a generating vector")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--s", type=int)
    sp.add_argument("--weights", help="file with product weights (JSON list or whitespace separated)")
    sp.add_argument("--slow", action="store_true", help="direct O(s n^2) search")

    add("weights", cmd_weights, "product weights and constants for a model")

    for name, func, text in (("solve", cmd_solve, "FEM solve for one parameter vector"),
                             ("check-derivative", cmd_check_derivative, "finite-difference derivative bound"),
                             ("check-strang", cmd_check_strang, "truncation gap against its bound")):
        sp = add(name, func, text)
        sp.add_argument("--y", help="parameter file (.csv or .bin)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--n-elements", type=int, help="defaults to the config value, else 256")
        if name == "check-derivative":
            sp.add_argument("--j", type=int, nargs="*", default=[0], help="zero-based coordinates")
            sp.add_argument("--fd-step", type=float, default=1e-4)
        if name == "check-strang":
            sp.add_argument("--L-small", type=int, required=True)

    sp = add("sample", cmd_sample, "draw a parameter vector", output=False)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True, help=".csv or .bin")
    sp.add_argument("--snapshot", help="CSV grid of the field")
    sp.add_argument("--resolution", type=int, default=256)

    sp = add("converge", cmd_converge, "shift-RMS convergence experiment")
    sp.add_argument("--mc", action="store_true", help="also run the Monte Carlo baseline")
    sp.add_argument("--assert", dest="assert_", action="store_true")

    sp = add("mc", cmd_mc, "Monte Carlo baseline")
    sp.add_argument("--assert", dest="assert_", action="store_true")

    sp = add("truncate", cmd_truncate, "truncation study")
    sp.add_argument("--L", type=int, nargs="*")
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--assert", dest="assert_", action="store_true")

    sp = add("bench-cbc", cmd_bench_cbc, "CBC timing table", config=False)
    sp.add_argument("--n", type=int, nargs="+", default=[7681, 15361, 40961, 65537])
    sp.add_argument("--s", type=int, nargs="+", default=[16, 32, 64])
    sp.add_argument("--repeats", type=int, default=7)
    sp.add_argument("--assert", dest="assert_", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except (ArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
