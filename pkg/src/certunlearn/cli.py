"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Removal indices are 0-based row numbers of the dataset file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from certunlearn import data as data_mod
from certunlearn.errors import CertUnlearnError, ConfigError, DomainError, NumericalError
from certunlearn.experiments import bundled_config, load_config, parse_scale_mode, run_experiment
from certunlearn.glm import LossFamily, ModelSpec, Regularizer
from certunlearn.metrics import certify_check
from certunlearn.noise import EXACT_POLISH, TheoryConstants, calibrate, theoretical_scale
from certunlearn.solver import FitResult, Objective, fit
from certunlearn.unlearn import RemovalRequest, recommended_steps, unlearn

log = logging.getLogger("certunlearn")

OUTPUT_ENV = "CERTUNLEARN_OUTPUT_DIR"
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


def _positive(kind):
    def conv(text):
        val = kind(text)
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val

    return conv


def _nonneg_int(text):
    val = int(text)
    if val < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return val


def _index_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _steps(text):
    if text == "auto":
        return text
    return _nonneg_int(text)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=[f.value for f in LossFamily], default="logistic")
    p.add_argument("--lambda", dest="lam", type=_positive(float), default=1.0, help="ridge strength (> 0)")
    p.add_argument("--nu", type=_positive(float), default=1.0, help="declared strong-convexity constant")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    parser = argparse.ArgumentParser(prog="certunlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="train on a CSV dataset or a synthetic design")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="CSV with header y,x1,...,xp")
    src.add_argument("--synthetic", nargs=2, type=_positive(int), metavar=("N", "P"))
    _add_model_flags(p)
    p.add_argument("--sigma", type=float, default=1.0, help="noise level for synthetic squared-loss data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=_positive(float), default=None, help="gradient-norm tolerance (default 1e-10 sqrt(p))")
    p.add_argument("--max-iter", type=_positive(int), default=100)
    p.add_argument("--out", type=Path, default=None, help="model file (default model.txt in the output dir)")
    p.add_argument("--save-data", type=Path, default=None, help="where to write the synthetic dataset")

    p = sub.add_parser("unlearn", parents=[common], help="remove rows from a fitted model with perturbed Newton steps")
    _add_removal_flags(p)
    p.add_argument("--verify-exact", action="store_true", help="also retrain exactly and report per-step errors")
    p.add_argument("--n-probe", type=_nonneg_int, default=1000)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("calibrate", parents=[common], help="empirical and theoretical noise scales")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--m", type=_positive(int), default=1)
    p.add_argument("--steps", type=_index_list, default=[1, 2], help="comma-separated step counts")
    p.add_argument("--m0", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("certify", parents=[common], help="audit the certifiability condition for one removal")
    _add_removal_flags(p)
    p.add_argument("--n-probe", type=_nonneg_int, default=1000)

    p = sub.add_parser("experiment", parents=[common], help="run a Monte Carlo experiment from a config file")
    p.add_argument("config", help="config path, or the name of a bundled config such as p_scaling.cfg")
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--workers", type=_positive(int), default=None)
    p.add_argument("--trials", type=_positive(int), default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _add_removal_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    rm = p.add_mutually_exclusive_group(required=True)
    rm.add_argument("--remove", type=_index_list, help="comma-separated 0-based row indices")
    rm.add_argument("--remove-random", type=_nonneg_int, metavar="M")
    p.add_argument("--steps", type=_steps, default=2, help="Newton steps, or 'auto' for the minimal count")
    p.add_argument("--epsilon", type=_positive(float), default=0.1)
    p.add_argument("--scale", default="theoretical", help="theoretical | empirical:<m0> | fixed:<r>")
    p.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    spec = ModelSpec(LossFamily(args.loss), Regularizer(args.lam, args.nu))
    out = args.out or _output_dir() / "model.txt"
    meta = {"seed": args.seed}
    if args.synthetic:
        n, p = args.synthetic
        rng = np.random.default_rng(args.seed)
        ds = data_mod.generate(spec.loss, n, p, rng, sigma=args.sigma, seed=args.seed)
        data_path = args.save_data or out.with_suffix(".data.csv")
        data_mod.save_csv(ds, data_path)
        meta.update(source=f"synthetic:{ds.meta['generator']}:n={n}:p={p}", data=str(data_path))
    else:
        ds = data_mod.load_csv(args.data)
        meta.update(source=str(args.data))
    if ds.n == 0:
        raise DomainError("dataset has no rows")
    log.info("fit: loss=%s lambda=%g nu=%g n=%d p=%d seed=%d", spec.loss.value, spec.lam, spec.nu, ds.n, ds.p, args.seed)
    res = fit(Objective(spec, ds.X, ds.y), tol_abs=args.tol, max_iter=args.max_iter)
    print(f"n={ds.n} p={ds.p} iterations={res.iterations} grad_norm={res.grad_norm:.3e} converged={str(res.converged).lower()}")
    if not res.converged:
        log.error("optimizer did not reach the gradient tolerance")
        return EXIT_NUMERICAL
    data_mod.save_model(data_mod.SavedModel(res, spec, meta), out)
    print(f"model written to {out}")
    return 0


def _load_pair(args):
    model = data_mod.load_model(args.model)
    ds = data_mod.load_csv(args.data)
    model.check_compatible(ds)
    if ds.n < 2:
        raise DomainError("dataset needs at least two rows")
    return model, ds


def _request(args, n: int, rng) -> RemovalRequest:
    if args.remove is not None:
        return RemovalRequest(tuple(args.remove), n=n)
    return RemovalRequest.random(n, args.remove_random, rng)


def _resolve_steps(args, req: RemovalRequest, n: int) -> int:
    if args.steps == "auto":
        steps = recommended_steps(req.m, n)
        log.info("steps auto: m=%d n=%d -> T=%d", req.m, n, steps)
        return steps
    return args.steps


def _resolve_scale(args, model, ds, req, steps, rng) -> float:
    mode, arg = parse_scale_mode(args.scale)
    if mode == "fixed":
        return arg
    if mode == "theoretical":
        if steps < 1:
            raise DomainError("the theoretical scale is defined for steps >= 1")
        tc = TheoryConstants(model.spec.lam, ds.n / ds.p, ds.n, ds.p, req.m, steps, model.spec.nu)
        return theoretical_scale(tc)
    if req.m < 1 or steps < 1:
        raise DomainError("empirical calibration needs m >= 1 and steps >= 1")
    cal = calibrate(ds.X, ds.y, model.spec, req.m, steps, arg, rng, beta_hat=model.fit.beta)
    log.info("calibration: raw max %.6g, rescale factor %.4f", cal.raw_max[steps], cal.factor)
    return cal.scale(steps)


def _exact_retrain(obj, req, beta_hat):
    res = fit(obj.without(req.M), init=beta_hat, polish=EXACT_POLISH)
    if not res.converged:
        raise NumericalError(f"exact retrain did not converge (grad norm {res.grad_norm:.3g})")
    return res.beta


def cmd_unlearn(args) -> int:
    model, ds = _load_pair(args)
    root = np.random.SeedSequence(args.seed)
    rm_ss, cal_ss, noise_ss, probe_ss = root.spawn(4)
    req = _request(args, ds.n, np.random.default_rng(rm_ss))
    steps = _resolve_steps(args, req, ds.n)
    scale = _resolve_scale(args, model, ds, req, steps, np.random.default_rng(cal_ss))
    log.info(
        "unlearn: m=%d steps=%d scale=%s (%.6g) epsilon=%g seed=%d",
        req.m, steps, args.scale, scale, args.epsilon, args.seed,
    )
    obj = Objective(model.spec, ds.X, ds.y)
    res = unlearn(obj, model.fit.beta, req, steps, scale, args.epsilon, np.random.default_rng(noise_ss))
    print(f"removed m={req.m} steps={steps} scale={scale:.6e} epsilon={args.epsilon:g} noise_norm={np.linalg.norm(res.noise):.6e}")
    if args.verify_exact:
        exact = _exact_retrain(obj, req, model.fit.beta)
        for t, it in enumerate(res.iterates):
            print(f"err_t{t}={np.linalg.norm(it - exact):.6e}")
        if scale > 0:
            rep = certify_check(res.last, exact, scale, args.epsilon, args.n_probe, np.random.default_rng(probe_ss))
            print(_cert_line(rep))
        else:
            print("certify: skipped (scale 0 gives no certificate)")
    else:
        print("certify: skipped (needs --verify-exact)")
    out = args.out or _output_dir() / "unlearned.txt"
    meta = dict(model.meta)
    meta.update(
        unlearned_from=str(args.model),
        removed=",".join(map(str, req.M)),
        steps=steps,
        scale=f"{scale:.17g}",
        epsilon=f"{args.epsilon:.17g}",
        unlearn_seed=args.seed,
    )
    fr = FitResult(res.perturbed, float("nan"), model.fit.iterations, model.fit.converged)
    data_mod.save_model(data_mod.SavedModel(fr, model.spec, meta), out)
    print(f"unlearned model written to {out}")
    return 0


def _cert_line(rep) -> str:
    return (
        f"certify: delta_norm={rep.delta_norm:.6e} scale={rep.scale:.6e} epsilon={rep.epsilon:g} "
        f"satisfied={str(rep.satisfied).lower()} max_log_ratio={rep.max_observed_log_ratio:.6e} "
        f"bound={rep.log_ratio_bound:.6e}"
    )


def cmd_calibrate(args) -> int:
    model, ds = _load_pair(args)
    log.info("calibrate: m=%d steps=%s m0=%d seed=%d", args.m, args.steps, args.m0, args.seed)
    cal = calibrate(ds.X, ds.y, model.spec, args.m, args.steps, args.m0, np.random.default_rng(args.seed), beta_hat=model.fit.beta)
    print(f"rescale_factor={cal.factor:.6f} subsets={len(cal.subsets)}")
    for t in sorted(cal.raw_max):
        line = f"steps={t} raw_max={cal.raw_max[t]:.6e} empirical_scale={cal.scale(t):.6e}"
        if model.spec.loss is LossFamily.LOGISTIC and t >= 1:
            tc = TheoryConstants(model.spec.lam, ds.n / ds.p, ds.n, ds.p, args.m, t, model.spec.nu)
            line += f" theoretical_scale={theoretical_scale(tc):.6e}"
        print(line)
    return 0


def cmd_certify(args) -> int:
    model, ds = _load_pair(args)
    root = np.random.SeedSequence(args.seed)
    rm_ss, cal_ss, probe_ss = root.spawn(3)
    req = _request(args, ds.n, np.random.default_rng(rm_ss))
    steps = _resolve_steps(args, req, ds.n)
    scale = _resolve_scale(args, model, ds, req, steps, np.random.default_rng(cal_ss))
    if scale <= 0:
        raise DomainError("certification needs a positive scale")
    log.info("certify: m=%d steps=%d scale=%.6g epsilon=%g seed=%d", req.m, steps, scale, args.epsilon, args.seed)
    obj = Objective(model.spec, ds.X, ds.y)
    res = unlearn(obj, model.fit.beta, req, steps, 0.0, args.epsilon, np.random.default_rng(0))
    exact = _exact_retrain(obj, req, model.fit.beta)
    print(_cert_line(certify_check(res.last, exact, scale, args.epsilon, args.n_probe, np.random.default_rng(probe_ss))))
    return 0


def cmd_experiment(args) -> int:
    path = Path(args.config)
    if not path.exists():
        path = bundled_config(args.config)
    out = args.out
    if out is None and OUTPUT_ENV in os.environ:
        out = Path(os.environ[OUTPUT_ENV])
    cfg = load_config(path, output_dir=out, workers=args.workers, trials=args.trials, seed=args.seed)
    log.info("experiment config %s: %s", path, cfg.resolved())
    result = run_experiment(cfg)
    for q, (slope, _, r2) in result.slopes.items():
        print(f"slope {q}: {slope:.4f} (r2={r2:.4f})")
    if cfg.kind == "noise_comparison":
        for t, (mean, se) in result.ged_comparison().items():
            print(f"ged_t{t}: mean={mean:.6e} se={se:.3e}")
    for f in result.files:
        print(f"wrote {f}")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "unlearn": cmd_unlearn,
    "calibrate": cmd_calibrate,
    "certify": cmd_certify,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CertUnlearnError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
