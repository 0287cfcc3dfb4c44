"""Batch command-line front end: experiment recipes with deterministic CSV output.

Subcommands
-----------
ratio-sweep    median error ratio of averaged vs centralized fits along an n-grid
bias-mse       empirical vs theoretical bias/MSE along an m-grid at fixed N
highdim-sweep  MSE ratio in the proportional regime along an n-grid
table1         r2/r1 accuracy-loss grid over losses x noise families
plan           machine-count planning under an error constraint
wishart-check  Monte-Carlo z-tests of the rank-one Wishart product identities

Every output CSV starts with a '#' comment line naming the full configuration,
so files are self-describing and reruns with equal flags are byte-identical.
Exit codes: 0 success, 1 usage/validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .errors import ConfigError, InfeasiblePlanError, NumericalError, SplitAvgError
from .estimator import ModelSpec
from .fixed_p import bias2, m2_parallel, ols_gammas, ridge_gammas
from .highdim import (
    QuadratureSpec,
    absolute_series,
    mse_ratio_exact,
    perturb_coeffs,
)
from .losses import LossSpec
from .model import GenerativeConfig, NoiseDist
from .oracles import ALL_IDENTITY_IDS, WishartIdentity, wishart_check
from .parallel import ExperimentConfig, run_experiment, summarize
from .planner import FixedPRegime, HighDimRegime, PlannerProblem, choose_m

_MODEL_CHOICES = ("ols", "ridge", "nls", "logistic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _theta_recipe(p: int, norm: float) -> np.ndarray:
    """Coefficients proportional to (1, 2, ..., p) scaled to the given norm."""
    raw = np.arange(1, p + 1, dtype=float)
    return raw * (norm / np.linalg.norm(raw))


def _model_spec(name: str, penalty: float) -> ModelSpec:
    if name == "ols":
        return ModelSpec.ols()
    if name == "ridge":
        return ModelSpec.ridge(penalty)
    if name == "nls":
        return ModelSpec.nonlinear_ls()
    return ModelSpec.logistic()


def _link_for(name: str) -> str:
    return {"ols": "linear", "ridge": "linear", "nls": "exp_nonlinear",
            "logistic": "logistic"}[name]


def _noise(args) -> NoiseDist:
    if args.noise == "gaussian":
        return NoiseDist.gaussian(args.sigma2)
    return NoiseDist.laplace(args.laplace_scale)


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(tok)) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated float list, got {text!r}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _write_csv(path: str, config: dict, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in config.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    print(f"wrote {path} ({len(rows)} rows)")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("SPLITAVG_THREADS", "1"))


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------


def _run_ratio_sweep(args) -> int:
    theta0 = _theta_recipe(args.p, args.theta_norm)
    gen = GenerativeConfig(p=args.p, theta0=theta0, noise=_noise(args),
                           link=_link_for(args.model))
    model = _model_spec(args.model, args.penalty)
    rows = []
    for n in args.n_grid:
        cfg = ExperimentConfig(gen=gen, model=model, N=n * args.m, m=args.m,
                               replications=args.reps, base_seed=args.seed)
        s = summarize(run_experiment(cfg, threads=_threads(args)))
        rows.append((n, args.m, s.median_ratio, s.mad_ratio, args.reps))
    config = dict(cmd="ratio-sweep", model=args.model, p=args.p, m=args.m,
                  n_grid=",".join(map(str, args.n_grid)), reps=args.reps,
                  seed=args.seed, noise=args.noise, sigma2=args.sigma2,
                  laplace_scale=args.laplace_scale, penalty=args.penalty,
                  theta_norm=args.theta_norm)
    _write_csv(args.out, config, ["n", "m", "median_ratio", "mad_ratio", "reps"], rows)
    return 0


def _gammas_for(args, theta0):
    if args.model == "ols":
        return ols_gammas(None, args.sigma2, args.p)
    return ridge_gammas(theta0, args.sigma2, args.penalty)


def _run_bias_mse(args) -> int:
    if args.model not in ("ols", "ridge"):
        raise UsageError("bias-mse supports models ols and ridge")
    theta0 = _theta_recipe(args.p, args.theta_norm)
    gen = GenerativeConfig(p=args.p, theta0=theta0, noise=_noise(args), link="linear")
    model = _model_spec(args.model, args.penalty)
    gam = _gammas_for(args, theta0)
    rows = []
    for m in args.m_grid:
        cfg = ExperimentConfig(gen=gen, model=model, N=args.N, m=m,
                               replications=args.reps, base_seed=args.seed)
        s = summarize(run_experiment(cfg, threads=_threads(args)))
        n = args.N // m
        theory_bias = bias2(gam, n, m)
        mse_theory = float(np.trace(m2_parallel(gam, n, m)))
        for coord in range(args.p):
            rows.append((m, args.p, coord, s.mean_bias[coord], theory_bias[coord],
                         s.mse_bar, mse_theory))
    config = dict(cmd="bias-mse", model=args.model, p=args.p, N=args.N,
                  m_grid=",".join(map(str, args.m_grid)), reps=args.reps,
                  seed=args.seed, sigma2=args.sigma2, penalty=args.penalty,
                  theta_norm=args.theta_norm)
    _write_csv(args.out, config,
               ["m", "p", "coord", "mean_bias", "theory_bias", "mse_emp", "mse_theory"],
               rows)
    return 0


def _run_highdim_sweep(args) -> int:
    rows = []
    for n in args.n_grid:
        p = int(round(args.kappa * n))
        if p < 1 or p >= n:
            raise UsageError(f"kappa = {args.kappa} gives invalid p at n = {n}")
        kappa = p / n
        theta0 = _theta_recipe(p, args.theta_norm)
        gen = GenerativeConfig(p=p, theta0=theta0, noise=_noise(args),
                               link=_link_for(args.model))
        model = _model_spec(args.model, args.penalty)
        cfg = ExperimentConfig(gen=gen, model=model, N=n * args.m, m=args.m,
                               replications=args.reps, base_seed=args.seed)
        s = summarize(run_experiment(cfg, threads=_threads(args)))
        ratio_emp = s.mse_bar / s.mse_central
        if args.model == "ols":
            ratio_theory = mse_ratio_exact(LossSpec.squared(), _noise(args),
                                           kappa, args.m)
        else:
            ratio_theory = ""
        rows.append((n, args.m, kappa, ratio_emp, ratio_theory))
    config = dict(cmd="highdim-sweep", model=args.model, kappa=args.kappa,
                  m=args.m, n_grid=",".join(map(str, args.n_grid)),
                  reps=args.reps, seed=args.seed, noise=args.noise,
                  sigma2=args.sigma2, laplace_scale=args.laplace_scale,
                  penalty=args.penalty, theta_norm=args.theta_norm)
    _write_csv(args.out, config,
               ["n", "m", "kappa", "mse_ratio_emp", "mse_ratio_theory"], rows)
    return 0


def _run_table1(args) -> int:
    gauss = NoiseDist.gaussian(args.sigma2)
    lap = NoiseDist.laplace(args.laplace_scale)
    q = QuadratureSpec(nodes=args.quad_nodes)
    kappas = args.kappa_grid
    rows = []
    for loss_name, loss in [("squared", LossSpec.squared()),
                            ("pseudo_huber", LossSpec.pseudo_huber(args.delta))]:
        for noise_name, noise in [("gaussian", gauss), ("laplace", lap)]:
            pc = perturb_coeffs(loss, noise, q)
            rows.append((loss_name, noise_name, pc.ratio))
    for noise_name, noise in [("gaussian", gauss), ("laplace", lap)]:
        r1, r2 = absolute_series(noise, kappas, q)
        rows.append(("absolute", noise_name, r2 / r1))
    config = dict(cmd="table1", delta=args.delta, sigma2=args.sigma2,
                  laplace_scale=args.laplace_scale,
                  kappa_grid=",".join(_fmt(k) for k in kappas),
                  quad_nodes=args.quad_nodes)
    _write_csv(args.out, config, ["loss", "noise", "r2_over_r1"], rows)
    return 0


def _run_plan(args) -> int:
    if args.total_eps is not None and args.per_coord_eps is not None:
        raise UsageError("give either --total-eps or --per-coord-eps, not both")
    if args.constraint == "relative":
        if args.rel_eps is None:
            raise UsageError("relative constraint needs --rel-eps")
        eps = args.rel_eps
    else:
        if args.total_eps is not None:
            eps = args.total_eps
        elif args.per_coord_eps is not None:
            eps = args.per_coord_eps * args.p
        else:
            raise UsageError("absolute constraint needs --total-eps or --per-coord-eps")
    if args.regime == "fixed-p":
        theta0 = _theta_recipe(args.p, args.theta_norm)
        regime = FixedPRegime(_gammas_for(args, theta0))
    else:
        loss = {"squared": LossSpec.squared(),
                "pseudo-huber": LossSpec.pseudo_huber(args.delta),
                "absolute": LossSpec.absolute()}[args.loss]
        regime = HighDimRegime(loss=loss, noise=_noise(args), p=args.p)
    mode = "fixed_n" if args.mode == "fixed-n" else "fixed_N"
    size = args.n if mode == "fixed_n" else args.N
    if size is None:
        raise UsageError(f"--{'n' if mode == 'fixed_n' else 'N'} is required "
                         f"for mode {args.mode}")
    prob = PlannerProblem(mode=mode, size=size, constraint=args.constraint,
                          eps=eps, regime=regime)
    result = choose_m(prob)
    config = dict(cmd="plan", mode=args.mode, constraint=args.constraint,
                  size=size, eps=eps, regime=args.regime, model=args.model,
                  p=args.p, sigma2=args.sigma2, penalty=args.penalty)
    _write_csv(args.out, config,
               ["mode", "constraint", "m", "achieved_error"],
               [(args.mode, args.constraint, result.m, result.achieved_error)])
    print(f"m = {result.m} (achieved error {result.achieved_error:.6g}, "
          f"binding={result.binding})")
    return 0


def _run_wishart_check(args) -> int:
    rows = []
    for p in args.p_grid:
        rng = np.random.default_rng(args.seed + p)
        raw = rng.standard_normal((p, p))
        b = (raw + raw.T) / 2.0
        for ident in ALL_IDENTITY_IDS:
            w = WishartIdentity(id=ident, sigma=np.eye(p), B=b)
            res = wishart_check(w, reps=args.reps, seed=args.seed + 1000 + p)
            rows.append((ident, p, args.reps, res.max_abs_z))
    config = dict(cmd="wishart-check", reps=args.reps,
                  p_grid=",".join(map(str, args.p_grid)), seed=args.seed)
    _write_csv(args.out, config, ["identity", "p", "reps", "max_abs_z"], rows)
    worst = max(row[3] for row in rows)
    print(f"worst |z| = {worst:.3f} over {len(rows)} identity checks")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=default_out, help="output CSV path")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: SPLITAVG_THREADS or 1)")
    p.add_argument("--config", default=None, help="flat key=value defaults file")


def _add_noise(p: argparse.ArgumentParser, sigma2: float) -> None:
    p.add_argument("--noise", choices=("gaussian", "laplace"), default="gaussian")
    p.add_argument("--sigma2", type=float, default=sigma2,
                   help="gaussian noise variance")
    p.add_argument("--laplace-scale", type=float, default=1.0)


def build_parser() -> _Parser:
    parser = _Parser(prog="splitavg", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ratio-sweep", help="error-ratio sweep along n")
    p.add_argument("--model", choices=_MODEL_CHOICES, default="ols")
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--n-grid", type=_int_list, default=[50, 200, 1000])
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--penalty", type=float, default=0.1)
    p.add_argument("--theta-norm", type=float, default=1.0)
    _add_noise(p, sigma2=10.0)
    _add_common(p, "ratio_sweep.csv")
    p.set_defaults(func=_run_ratio_sweep)

    p = sub.add_parser("bias-mse", help="bias and MSE vs theory along m")
    p.add_argument("--model", choices=("ols", "ridge"), default="ols")
    p.add_argument("--p", type=int, default=20)
    p.add_argument("--N", type=int, default=20000)
    p.add_argument("--m-grid", type=_int_list, default=[10, 20, 40])
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--penalty", type=float, default=1.0)
    p.add_argument("--theta-norm", type=float, default=10.0)
    _add_noise(p, sigma2=2.0)
    _add_common(p, "bias_mse.csv")
    p.set_defaults(func=_run_bias_mse)

    p = sub.add_parser("highdim-sweep", help="MSE ratio in the proportional regime")
    p.add_argument("--model", choices=_MODEL_CHOICES, default="ols")
    p.add_argument("--kappa", type=float, default=0.2)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--n-grid", type=_int_list, default=[250, 500])
    p.add_argument("--reps", type=int, default=300)
    p.add_argument("--penalty", type=float, default=1.0)
    p.add_argument("--theta-norm", type=float, default=1.0)
    _add_noise(p, sigma2=1.0)
    _add_common(p, "highdim_sweep.csv")
    p.set_defaults(func=_run_highdim_sweep)

    p = sub.add_parser("table1", help="r2/r1 grid over losses and noise families")
    p.add_argument("--delta", type=float, default=3.0)
    p.add_argument("--sigma2", type=float, default=10.0,
                   help="gaussian noise variance for the smooth-loss rows")
    p.add_argument("--laplace-scale", type=float, default=2 ** -0.5,
                   help="laplace scale (default: unit variance)")
    p.add_argument("--kappa-grid", type=_float_list,
                   default=list(np.geomspace(1e-3, 8e-3, 5)),
                   help="grid for the absolute-loss series fit")
    p.add_argument("--quad-nodes", type=int, default=64)
    _add_common(p, "table1.csv")
    p.set_defaults(func=_run_table1)

    p = sub.add_parser("plan", help="choose the machine count")
    p.add_argument("--mode", choices=("fixed-n", "fixed-N"), required=True)
    p.add_argument("--n", type=lambda s: int(float(s)), default=None)
    p.add_argument("--N", type=lambda s: int(float(s)), default=None)
    p.add_argument("--constraint", choices=("absolute", "relative"),
                   default="absolute")
    p.add_argument("--total-eps", type=float, default=None)
    p.add_argument("--per-coord-eps", type=float, default=None)
    p.add_argument("--rel-eps", type=float, default=None)
    p.add_argument("--regime", choices=("fixed-p", "high-dim"), default="fixed-p")
    p.add_argument("--model", choices=("ols", "ridge"), default="ols")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--penalty", type=float, default=0.0)
    p.add_argument("--theta-norm", type=float, default=1.0)
    p.add_argument("--loss", choices=("squared", "pseudo-huber", "absolute"),
                   default="squared")
    p.add_argument("--delta", type=float, default=3.0)
    _add_noise(p, sigma2=1.0)
    _add_common(p, "plan.csv")
    p.set_defaults(func=_run_plan)

    p = sub.add_parser("wishart-check", help="Monte-Carlo identity z-tests")
    p.add_argument("--reps", type=lambda s: int(float(s)), default=1_000_000)
    p.add_argument("--p-grid", type=_int_list, default=[1, 2, 5])
    _add_common(p, "wishart_check.csv")
    p.set_defaults(func=_run_wishart_check)

    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Prepend key=value pairs from --config as flags; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a path")
    path = argv[idx + 1]
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    extra: list[str] = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (need key=value): {line!r}")
        key, value = (tok.strip() for tok in line.split("=", 1))
        extra.extend([f"--{key.replace('_', '-')}", value])
    # subcommand first, then file defaults, then explicit flags (which win)
    return argv[:1] + extra + argv[1:]


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and not argv[0].startswith("-"):
            argv = _apply_config_file(argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, InfeasiblePlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, SplitAvgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
