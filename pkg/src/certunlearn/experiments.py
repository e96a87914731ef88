"""Monte Carlo harness for the scaling and noise-comparison experiments.

Every trial draws a fresh synthetic dataset, fits it, removes a random
forget set and records the Newton errors against an exact retrain, the
calibrated noise, and the resulting loss gaps. Trials are independent work
items with their own seed substreams. Results are reduced in
(grid point, trial) order, so output files do not depend on scheduling.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from certunlearn.data import fresh_point_sampler, generate
from certunlearn.errors import ConfigError, DomainError, NumericalError
from certunlearn.glm import LossFamily, ModelSpec, Regularizer, loss_value
from certunlearn.metrics import ged_estimate, in_sample_error, loss_gaps
from certunlearn.noise import EXACT_POLISH, NoiseSpec, TheoryConstants, calibrate, sample_isotropic_laplace, theoretical_scale
from certunlearn.solver import Objective, fit
from certunlearn.unlearn import RemovalRequest, newton_path

log = logging.getLogger(__name__)

KINDS = ("p_scaling", "m_scaling", "noise_comparison")
GRID_COLUMNS = ("n", "p", "m", "lambda", "epsilon")
RECORD_COLUMNS = GRID_COLUMNS + (
    "trial",
    "err_exact",
    "err_t1",
    "err_t2",
    "ged_t1",
    "ged_t2",
    "in_sample_t1",
    "in_sample_t2",
    "out_sample_t1",
    "out_sample_t2",
    "noise_norm_t1",
    "noise_norm_t2",
    "seconds",
)
PAIR_COLUMNS = GRID_COLUMNS + ("trial", "steps", "point", "loss_exact", "loss_perturbed")
ERROR_QUANTITIES = ("err_t1", "err_t2", "err_exact")


# ---------------------------------------------------------------------------
# configuration


def parse_scale_mode(text: str) -> tuple[str, float | int | None]:
    """``theoretical`` | ``empirical:<m0>`` | ``fixed:<r>``."""
    text = text.strip()
    if text == "theoretical":
        return "theoretical", None
    kind, _, arg = text.partition(":")
    try:
        if kind == "empirical":
            m0 = int(arg)
            if m0 < 2:
                raise ValueError
            return "empirical", m0
        if kind == "fixed":
            r = float(arg)
            if not (math.isfinite(r) and r >= 0):
                raise ValueError
            return "fixed", r
    except ValueError:
        pass
    raise ConfigError(f"bad scale mode {text!r} (expected theoretical, empirical:<m0 >= 2> or fixed:<r >= 0>)")


@dataclass
class ExperimentConfig:
    kind: str = "p_scaling"
    loss: LossFamily = LossFamily.LOGISTIC
    p: list[int] = field(default_factory=lambda: [200, 400, 800, 1600])
    gamma0: list[float] = field(default_factory=lambda: [1.0])
    m: list[int] = field(default_factory=lambda: [1])
    lam: list[float] = field(default_factory=lambda: [1.0])
    epsilon: list[float] = field(default_factory=lambda: [0.1])
    nu: float = 1.0
    sigma: float = 1.0
    trials: int = 100
    seed: int = 0
    scale_mode: str = "fixed:0"
    n_test: int = 10_000
    workers: int = 1
    timing: bool = False
    figures: bool = True
    output_dir: Path = Path("results")

    def __post_init__(self):
        self.loss = LossFamily(self.loss)
        self.output_dir = Path(self.output_dir)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"experiment.kind: unknown kind {self.kind!r} (choose from {', '.join(KINDS)})")
        if self.trials < 1:
            raise ConfigError("experiment.trials: must be >= 1")
        if self.n_test < 2:
            raise ConfigError("experiment.n_test: must be >= 2")
        if self.workers < 1:
            raise ConfigError("experiment.workers: must be >= 1")
        parse_scale_mode(self.scale_mode)
        for name in ("p", "gamma0", "m", "lam", "epsilon"):
            if not getattr(self, name):
                raise ConfigError(f"grid.{_GRID_KEYS[name]}: needs at least one value")
        if any(v <= 0 for v in self.lam):
            raise ConfigError("grid.lambda: must be positive")
        if any(v <= 0 for v in self.epsilon):
            raise ConfigError("grid.epsilon: must be positive")
        if any(v <= 0 for v in self.gamma0):
            raise ConfigError("grid.gamma0: must be positive")
        for pt in self.grid():
            if not 1 <= pt["m"] <= pt["n"] - 1:
                raise ConfigError(f"grid.m: need 1 <= m <= n - 1 at n={pt['n']}, m={pt['m']}")

    def grid(self) -> list[dict]:
        points = []
        for p, g, m, lam, eps in itertools.product(self.p, self.gamma0, self.m, self.lam, self.epsilon):
            points.append({"n": max(1, round(g * p)), "p": p, "m": m, "lambda": lam, "epsilon": eps})
        return points

    def resolved(self) -> dict:
        return {f.name: str(getattr(self, f.name).value if f.name == "loss" else getattr(self, f.name)) for f in fields(self)}


_GRID_KEYS = {"p": "p", "gamma0": "gamma0", "m": "m", "lam": "lambda", "epsilon": "epsilon"}
_SCHEMA = {
    "experiment": {
        "kind": ("kind", str),
        "loss": ("loss", str),
        "trials": ("trials", int),
        "seed": ("seed", int),
        "scale_mode": ("scale_mode", str),
        "n_test": ("n_test", int),
        "workers": ("workers", int),
        "timing": ("timing", "bool"),
    },
    "grid": {
        "p": ("p", [int]),
        "gamma0": ("gamma0", [float]),
        "m": ("m", [int]),
        "lambda": ("lam", [float]),
        "epsilon": ("epsilon", [float]),
    },
    "model": {"nu": ("nu", float), "sigma": ("sigma", float)},
    "output": {"dir": ("output_dir", Path), "figures": ("figures", "bool")},
}


def _convert(raw: str, kind, where: str):
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if isinstance(kind, list):
            return [kind[0](v.strip()) for v in raw.split(",") if v.strip()]
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def config_from_mapping(sections: dict[str, dict[str, str]], **overrides) -> ExperimentConfig:
    kwargs = {}
    for section, entries in sections.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in entries.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            attr, kind = _SCHEMA[section][key]
            kwargs[attr] = _convert(raw, kind, f"{section}.{key}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return config_from_mapping(sections, **overrides)


def bundled_config(name: str) -> Path:
    path = Path(__file__).parent / "configs" / name
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


# ---------------------------------------------------------------------------
# single trial


def _streams(cfg: ExperimentConfig, point_index: int, point: dict, trial: int):
    # datasets are keyed by (n, p, trial) so grid points sharing a design
    # share datasets, which steadies slope estimates across m
    data_ss = np.random.SeedSequence(cfg.seed, spawn_key=(0, point["n"], point["p"], trial))
    rest = np.random.SeedSequence(cfg.seed, spawn_key=(1, point_index, trial)).spawn(5)
    return (data_ss, *rest)


def _scales(cfg, point, obj, beta_hat, rng_cal) -> tuple[float, float]:
    mode, arg = parse_scale_mode(cfg.scale_mode)
    if mode == "fixed":
        return arg, arg
    if mode == "theoretical":
        out = []
        for t in (1, 2):
            tc = TheoryConstants(
                lam=point["lambda"], gamma0=point["n"] / point["p"], n=point["n"], p=point["p"], m=point["m"], t=t, nu=cfg.nu
            )
            out.append(theoretical_scale(tc))
        return out[0], out[1]
    cal = calibrate(obj.X, obj.y, obj.spec, point["m"], (1, 2), arg, rng_cal, beta_hat=beta_hat)
    return cal.scale(1), cal.scale(2)


def run_trial(cfg: ExperimentConfig, point_index: int, point: dict, trial: int) -> tuple[dict, list[dict]]:
    started = time.perf_counter()
    data_ss, rm_ss, cal_ss, noise1_ss, noise2_ss, test_ss = _streams(cfg, point_index, point, trial)
    n, p, m = point["n"], point["p"], point["m"]
    spec = ModelSpec(cfg.loss, Regularizer(point["lambda"], cfg.nu))
    dataset = generate(cfg.loss, n, p, np.random.default_rng(data_ss), sigma=cfg.sigma, seed=cfg.seed)
    obj = Objective(spec, dataset.X, dataset.y)
    full = fit(obj)
    if not full.converged:
        raise NumericalError(f"full fit did not converge at {point}, trial {trial}")
    beta_hat = full.beta

    req = RemovalRequest.random(n, m, np.random.default_rng(rm_ss))
    sub = obj.without(req.M)
    path = newton_path(sub, beta_hat, 2)
    exact_fit = fit(sub, init=beta_hat, polish=EXACT_POLISH)
    if not exact_fit.converged:
        raise NumericalError(f"exact retrain did not converge at {point}, trial {trial}")
    exact = exact_fit.beta

    scales = _scales(cfg, point, obj, beta_hat, np.random.default_rng(cal_ss))
    sampler = fresh_point_sampler(dataset, cfg.loss, cfg.sigma)
    rec = dict(point)
    rec["trial"] = trial
    rec["err_exact"] = float(np.linalg.norm(exact - beta_hat))
    pairs = []
    for t, noise_ss in ((1, noise1_ss), (2, noise2_ss)):
        b = sample_isotropic_laplace(NoiseSpec(p, scales[t - 1], point["epsilon"]), np.random.default_rng(noise_ss))
        perturbed = path[t] + b
        # same test draws for both step counts
        ged = ged_estimate(spec, exact, perturbed, sampler, cfg.n_test, np.random.default_rng(test_ss))
        X0, y0 = sampler(np.random.default_rng(test_ss), 1)
        rec[f"err_t{t}"] = float(np.linalg.norm(path[t] - exact))
        rec[f"ged_t{t}"] = ged.mean
        rec[f"in_sample_t{t}"] = in_sample_error(spec, perturbed, exact, dataset, req.M)
        rec[f"out_sample_t{t}"] = float(loss_gaps(spec, perturbed, exact, X0, y0)[0])
        rec[f"noise_norm_t{t}"] = float(np.linalg.norm(b))
        if cfg.kind == "noise_comparison":
            pairs.extend(_pairs(point, trial, t, spec, exact, perturbed, dataset, req, X0, y0))
    rec["seconds"] = time.perf_counter() - started if cfg.timing else 0.0
    return {k: rec[k] for k in RECORD_COLUMNS}, pairs


def _pairs(point, trial, t, spec, exact, perturbed, dataset, req, X0, y0) -> list[dict]:
    rows = []
    idx = np.asarray(req.M)
    for point_kind, X, y in (("forgotten", dataset.X[idx], dataset.y[idx]), ("heldout", X0, y0)):
        le = np.atleast_1d(loss_value(spec.loss, y, X @ exact))
        lp = np.atleast_1d(loss_value(spec.loss, y, X @ perturbed))
        for a, b in zip(le, lp):
            rows.append({**point, "trial": trial, "steps": t, "point": point_kind, "loss_exact": float(a), "loss_perturbed": float(b)})
    return rows


def _run_task(args):
    cfg, point_index, point, trial = args
    return run_trial(cfg, point_index, point, trial)


# ---------------------------------------------------------------------------
# aggregation


def fit_loglog_slope(points) -> tuple[float, float, float]:
    """Least-squares line through ``(log x, log y)``; returns (slope, intercept, r^2)."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise DomainError("need at least 3 points for a slope")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise DomainError("log-log fit needs positive finite values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise DomainError("x values must not all coincide")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def summarize(records: list[dict], quantities=None) -> list[dict]:
    """Per-grid-point mean, std and count of each quantity, in grid order."""
    quantities = quantities or [c for c in RECORD_COLUMNS if c not in GRID_COLUMNS + ("trial",)]
    groups: dict[tuple, list[dict]] = {}
    for rec in records:
        groups.setdefault(tuple(rec[c] for c in GRID_COLUMNS), []).append(rec)
    out = []
    for key, recs in groups.items():
        row = dict(zip(GRID_COLUMNS, key))
        row["trials"] = len(recs)
        for q in quantities:
            vals = np.array([r[q] for r in recs], dtype=float)
            row[f"{q}_mean"] = float(vals.mean())
            row[f"{q}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(row)
    return out


def scaling_slopes(summary: list[dict], xvar: str, quantities=ERROR_QUANTITIES) -> dict[str, tuple[float, float, float]]:
    xs = [row[xvar] for row in summary]
    if len(set(xs)) < 3:
        raise DomainError(f"grid too small for a slope: need >= 3 distinct {xvar} values")
    slopes = {}
    for q in quantities:
        pts = [(row[xvar], row[f"{q}_mean"]) for row in summary]
        if any(y <= 0 for _, y in pts):
            log.warning("skipping slope of %s: nonpositive mean", q)
            continue
        slopes[q] = fit_loglog_slope(pts)
    return slopes


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[dict]
    summary: list[dict]
    slopes: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    pairs: list[dict] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)

    def ged_comparison(self) -> dict:
        """Mean GED per step count with standard errors across trials."""
        out = {}
        for t in (1, 2):
            vals = np.array([r[f"ged_t{t}"] for r in self.records])
            out[t] = (float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0)
        return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: Path, rows: list[dict], columns) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    points = cfg.grid()
    tasks = [(cfg, i, pt, trial) for i, pt in enumerate(points) for trial in range(cfg.trials)]
    log.info("experiment %s: %d grid points x %d trials, seed %d", cfg.kind, len(points), cfg.trials, cfg.seed)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    records = [r for r, _ in results]
    pairs = [row for _, rows in results for row in rows]
    summary = summarize(records)

    slopes = {}
    if cfg.kind == "p_scaling":
        slopes = scaling_slopes(summary, "p")
    elif cfg.kind == "m_scaling":
        slopes = scaling_slopes(summary, "m")
    result = ExperimentResult(cfg, records, summary, slopes, pairs)
    if write:
        _write_outputs(result)
    return result


def _write_outputs(result: ExperimentResult) -> None:
    cfg = result.config
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg.kind
    files = [write_csv(out / f"{kind}.csv", result.records, RECORD_COLUMNS)]
    summary_cols = list(result.summary[0].keys())
    files.append(write_csv(out / f"{kind}_summary.csv", result.summary, summary_cols))
    if result.slopes:
        rows = [{"quantity": q, "slope": s, "intercept": i, "r2": r2} for q, (s, i, r2) in result.slopes.items()]
        files.append(write_csv(out / f"{kind}_slopes.csv", rows, ("quantity", "slope", "intercept", "r2")))
    if result.pairs:
        files.append(write_csv(out / f"{kind}_pairs.csv", result.pairs, PAIR_COLUMNS))
    if cfg.figures:
        from certunlearn import plotting

        files.extend(plotting.render(result))
    result.files = files
