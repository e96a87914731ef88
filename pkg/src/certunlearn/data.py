"""Synthetic designs, CSV datasets, and model files.

Synthetic designs follow the proportional regime used throughout: rows
``x_i ~ N(0, I_p / n)`` and ``beta* ~ N(0, I_p)``, so the linear predictor
has variance ``p / n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from certunlearn.errors import DataFormatError, DomainError, ModelFormatError
from certunlearn.glm import LossFamily, ModelSpec, Regularizer
from certunlearn.solver import FitResult

MODEL_FORMAT_VERSION = 1


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    beta_star: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DomainError(f"X has shape {self.X.shape} but y has length {self.y.shape[0]}")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DomainError("dataset entries must be finite")
        self.meta.setdefault("n", self.n)
        self.meta.setdefault("p", self.p)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _design(n: int, p: int, rng: np.random.Generator, cov_sqrt=None) -> np.ndarray:
    Z = rng.standard_normal((n, p))
    if cov_sqrt is not None:
        # rows become N(0, S S^T / n) for a p x p factor S
        Z = Z @ np.asarray(cov_sqrt).T
    return Z / math.sqrt(n)


def generate_logistic(n: int, p: int, rng: np.random.Generator, cov_sqrt=None, seed=None) -> Dataset:
    if n < 1 or p < 1:
        raise DomainError("need n, p >= 1")
    beta_star = rng.standard_normal(p)
    X = _design(n, p, rng, cov_sqrt)
    y = (rng.random(n) < expit(X @ beta_star)).astype(float)
    return Dataset(X, y, beta_star, {"n": n, "p": p, "seed": seed, "generator": "logistic"})


def generate_linear(n: int, p: int, sigma: float, rng: np.random.Generator, cov_sqrt=None, seed=None) -> Dataset:
    if n < 1 or p < 1:
        raise DomainError("need n, p >= 1")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    beta_star = rng.standard_normal(p)
    X = _design(n, p, rng, cov_sqrt)
    y = X @ beta_star + sigma * rng.standard_normal(n)
    return Dataset(X, y, beta_star, {"n": n, "p": p, "seed": seed, "generator": f"linear(sigma={sigma!r})"})


def generate(loss: LossFamily, n: int, p: int, rng: np.random.Generator, sigma: float = 1.0, seed=None) -> Dataset:
    if LossFamily(loss) is LossFamily.LOGISTIC:
        return generate_logistic(n, p, rng, seed=seed)
    return generate_linear(n, p, sigma, rng, seed=seed)


def fresh_point_sampler(dataset: Dataset, loss: LossFamily, sigma: float = 1.0) -> Callable:
    """Sampler ``(rng, k) -> (X0, y0)`` of new points from the dataset's generating law."""
    if dataset.beta_star is None:
        raise DomainError("fresh points need the ground-truth beta (synthetic data only)")
    beta_star = dataset.beta_star
    n, p = dataset.n, dataset.p
    loss = LossFamily(loss)

    def sample(rng: np.random.Generator, k: int):
        X0 = rng.standard_normal((k, p)) / math.sqrt(n)
        z = X0 @ beta_star
        if loss is LossFamily.LOGISTIC:
            y0 = (rng.random(k) < expit(z)).astype(float)
        else:
            y0 = z + sigma * rng.standard_normal(k)
        return X0, y0

    return sample


# ---------------------------------------------------------------------------
# CSV: header ``y,x1,...,xp``; values written with 17 significant digits


def save_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + [f"x{j + 1}" for j in range(dataset.p)])
        for yi, row in zip(dataset.y, dataset.X):
            w.writerow([f"{yi:.17g}"] + [f"{v:.17g}" for v in row])


def load_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file (expected header y,x1,...,xp)", line=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "y":
        raise DataFormatError("header must start with 'y' followed by feature columns", line=1)
    width = len(header)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise DataFormatError(f"expected {width} columns, found {len(row)}", line=lineno)
        try:
            parsed = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_float(c))
            raise DataFormatError(f"non-numeric cell {bad!r}", line=lineno) from None
        if not all(math.isfinite(v) for v in parsed):
            raise DataFormatError("non-finite value", line=lineno)
        values.append(parsed)
    arr = np.array(values, dtype=np.float64).reshape(len(values), width)
    return Dataset(arr[:, 1:], arr[:, 0], None, {"source": str(path)})


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# model files: ``key = value`` lines, first line carries the format version


@dataclass
class SavedModel:
    fit: FitResult
    spec: ModelSpec
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.fit.beta.shape[0]

    def check_compatible(self, dataset: Dataset) -> None:
        if dataset.p != self.p:
            raise ModelFormatError(f"model has p={self.p} but dataset has p={dataset.p}")


_FLOAT_KEYS = ("lambda", "nu", "grad_norm")


def save_model(model: SavedModel, path) -> None:
    fr, spec = model.fit, model.spec
    lines = [
        f"format_version = {MODEL_FORMAT_VERSION}",
        f"loss = {spec.loss.value}",
        f"regularizer = {spec.reg.kind}",
        f"lambda = {spec.lam:.17g}",
        f"nu = {spec.nu:.17g}",
        f"p = {fr.beta.shape[0]}",
        f"iterations = {fr.iterations}",
        f"grad_norm = {fr.grad_norm:.17g}",
        f"converged = {str(bool(fr.converged)).lower()}",
    ]
    for key, val in model.meta.items():
        if "\n" in str(val) or "=" in str(key):
            raise ModelFormatError(f"metadata entry {key!r} cannot be serialized")
        lines.append(f"meta.{key} = {val}")
    lines.append("beta = " + " ".join(f"{v:.17g}" for v in fr.beta))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> SavedModel:
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: not a text model file") from exc
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ModelFormatError(f"{path}:{lineno}: expected 'key = value'")
        entries[key.strip()] = val.strip()
    version = entries.get("format_version")
    if version is None:
        raise ModelFormatError(f"{path}: missing format_version line")
    if version != str(MODEL_FORMAT_VERSION):
        raise ModelFormatError(f"{path}: unsupported format_version {version} (expected {MODEL_FORMAT_VERSION})")
    required = ("loss", "lambda", "nu", "p", "iterations", "grad_norm", "converged", "beta")
    missing = [k for k in required if k not in entries]
    if missing:
        raise ModelFormatError(f"{path}: missing keys {', '.join(missing)}")
    try:
        beta = np.array([float(v) for v in entries["beta"].split()], dtype=np.float64)
        spec = ModelSpec(LossFamily(entries["loss"]), Regularizer(float(entries["lambda"]), float(entries["nu"])))
        p = int(entries["p"])
        fr = FitResult(
            beta=beta,
            grad_norm=float(entries["grad_norm"]),
            iterations=int(entries["iterations"]),
            converged=entries["converged"] == "true",
        )
    except ValueError as exc:
        raise ModelFormatError(f"{path}: corrupt model file ({exc})") from exc
    if beta.shape[0] != p or not np.isfinite(beta).all():
        raise ModelFormatError(f"{path}: coefficient vector does not match p={p}")
    meta = {k[5:]: v for k, v in entries.items() if k.startswith("meta.")}
    return SavedModel(fr, spec, meta)
