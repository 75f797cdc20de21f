"""Synthetic sparse additive auto-regressive processes and MSE experiment grids."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import glm
from .errors import NumericalError
from .estimator import FitConfig, NetworkFit, fit_network
from .kernels import basis_values, finite_rank

GRID_COLUMNS = ("family", "d", "T", "r", "trial", "mse", "precision", "recall", "seconds")
DIVERGENCE_LIMIT = 1e6
# the random coefficient vectors always have this many entries; order r uses the first r
COEF_LEN = 3
FAMILY_CODES = {"gaussian": 0, "poisson": 1}


@dataclass(frozen=True)
class SimSpec:
    family: str
    d: int
    T: int
    r: int = 1
    s: int = 3
    seed: int = 0
    burn_in: int = 200

    def __post_init__(self):
        if self.family not in FAMILY_CODES:
            raise ValueError(f"no simulation recipe for family {self.family!r}")
        if self.d < 1 or self.T < 1 or self.r < 1 or self.burn_in < 0:
            raise ValueError("d, T, r must be positive and burn_in nonnegative")
        if not 0 <= self.s < self.d:
            raise ValueError("need 0 <= s < d")


@dataclass
class GroundTruth:
    A_star: np.ndarray
    b: np.ndarray
    r: int

    @property
    def d(self) -> int:
        return self.A_star.shape[0]

    @property
    def true_supports(self) -> list:
        return [tuple(int(k) for k in np.flatnonzero(row)) for row in self.A_star]

    def f_star(self, X) -> np.ndarray:
        """``f*_j(X_t) = sum_k A*_jk sum_i b^i_jk Phi_i(X_tk)`` for every row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Phi = basis_values("poly_factorial", X, self.r)  # (n, d, r)
        return np.einsum("jk,jki,nki->nj", self.A_star, self.b[:, :, : self.r], Phi)

    def to_dict(self) -> dict:
        return {"A_star": self.A_star.tolist(), "b": self.b.tolist(), "r": self.r,
                "true_supports": [list(s) for s in self.true_supports]}


def _rng(spec: SimSpec) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([spec.seed, FAMILY_CODES[spec.family], spec.d, spec.r, spec.s]))


def _unit_vectors(rng, d: int) -> np.ndarray:
    b = rng.standard_normal((d, d, max(COEF_LEN, 1)))
    return b / np.linalg.norm(b, axis=2, keepdims=True)


def gaussian_truth(spec: SimSpec, rng) -> GroundTruth:
    d, s = spec.d, spec.s
    A = np.eye(d)
    for j in range(d):
        others = np.delete(np.arange(d), j)
        cols = rng.choice(others, size=s, replace=False)
        A[j, cols] = rng.uniform(-1.0 / (2 * s), 1.0 / (2 * s), size=s)
    return GroundTruth(A, _unit_vectors(rng, d), spec.r)


def poisson_truth(spec: SimSpec, rng) -> GroundTruth:
    d, s = spec.d, spec.s
    A = np.zeros((d, d))
    for j in range(d):
        A[j, rng.choice(d, size=s, replace=False)] = -2.0
    # nonnegative coefficients keep every f*_jk <= 0 on counts, so rates stay bounded
    return GroundTruth(A, np.abs(_unit_vectors(rng, d)), spec.r)


def _run_chain(spec: SimSpec, truth: GroundTruth, rng, x0, step) -> np.ndarray:
    n = spec.burn_in + spec.T + 1
    X = np.empty((n, spec.d))
    X[0] = x0
    for t in range(n - 1):
        X[t + 1] = step(X[t])
        if not np.all(np.abs(X[t + 1]) <= DIVERGENCE_LIMIT):
            raise NumericalError(
                f"{spec.family} trajectory diverged at step {t + 1} (|X| > {DIVERGENCE_LIMIT:g}); "
                "try a smaller order r, a different seed, or sparser coefficients")
    return X[spec.burn_in:]


def gen_gaussian(spec: SimSpec, truth: GroundTruth | None = None):
    """``X_{t+1} = f*(X_t) + w`` with ``w ~ U[-0.4, 0.4]``; returns ``(values, truth)``."""
    rng = _rng(spec)
    if truth is None:
        truth = gaussian_truth(spec, rng)
    x0 = rng.uniform(0.0, 1.0, size=spec.d)
    noise = rng.uniform(-0.4, 0.4, size=(spec.burn_in + spec.T, spec.d))
    it = iter(noise)
    X = _run_chain(spec, truth, rng, x0, lambda x: truth.f_star(x)[0] + next(it))
    return X, truth


def gen_poisson(spec: SimSpec, truth: GroundTruth | None = None):
    """``X_{t+1,j} ~ Poisson(exp(f*_j(X_t)))``; returns ``(values, truth)``."""
    rng = _rng(spec)
    if truth is None:
        truth = poisson_truth(spec, rng)
    x0 = rng.poisson(1.0, size=spec.d).astype(float)

    def step(x):
        rate = np.exp(np.minimum(truth.f_star(x)[0], 50.0))
        return rng.poisson(rate).astype(float)

    return _run_chain(spec, truth, rng, x0, step), truth


def generate(spec: SimSpec, truth: GroundTruth | None = None):
    return (gen_gaussian if spec.family == "gaussian" else gen_poisson)(spec, truth)


def mse(fit: NetworkFit, truth: GroundTruth, data) -> float:
    """Mean over nodes of ``(1/T) sum_t (eta_hat_j(X_t) - f*_j(X_t))^2``.

    The fitted predictor includes the offset and any intercept, so the
    comparison is between full linear predictors.
    """
    X = np.asarray(getattr(data, "values", data), dtype=float)[:-1]
    diff = fit.linear_predictor(X) - truth.f_star(X)
    return float(np.mean(diff ** 2))


def replication_lambda(family: str, d: int, T: int, r: int) -> float:
    """``lambda_T`` schedule of the replication grid."""
    if family == "gaussian":
        return 3.0 * math.sqrt(math.log(d * r) / T)
    return 1.3 * math.log(d) * math.log(T) * math.sqrt(r) / math.sqrt(T)


def replication_config(family: str, d: int, T: int, r: int, **overrides) -> FitConfig:
    """Replication setting: empirical-norm penalty only, free intercept."""
    kw = dict(lambda_T=replication_lambda(family, d, T, r), lambda_H=0.0, intercept_column=True)
    kw.update(overrides)
    return FitConfig(**kw)


def support_scores(fit: NetworkFit, truth: GroundTruth) -> tuple[float, float]:
    est = fit.adjacency().astype(bool)
    true = truth.A_star != 0
    tp = int(np.sum(est & true))
    precision = tp / int(np.sum(est)) if np.any(est) else 1.0
    recall = tp / int(np.sum(true)) if np.any(true) else 1.0
    return precision, recall


def run_cell(family: str, d: int, T: int, r: int, trial: int, seed0: int = 0,
             s: int = 3, burn_in: int = 200, lambda_scale: float = 1.0,
             **cfg_overrides) -> dict:
    """One simulated dataset and fit; ``lambda_scale`` multiplies the schedule."""
    row = {"family": family, "d": d, "T": T, "r": r, "trial": trial}
    start = time.perf_counter()
    try:
        spec = SimSpec(family, d, T, r, s=s, seed=seed0 + trial, burn_in=burn_in)
        X, truth = generate(spec)
        cfg = replication_config(family, d, T, r, **cfg_overrides)
        cfg.lambda_T *= lambda_scale
        fit = fit_network(X, finite_rank(r), glm.family(family), cfg)
        row["mse"] = mse(fit, truth, X)
        row["precision"], row["recall"] = support_scores(fit, truth)
        row["error"] = ""
    except Exception as exc:  # one failed cell must not stop the grid
        row.update(mse=math.nan, precision=math.nan, recall=math.nan,
                   error=f"{type(exc).__name__}: {exc}")
    row["seconds"] = time.perf_counter() - start
    return row


def run_grid(families, d_list, T_list, r_list, trials: int, seed0: int = 0,
             **kwargs) -> list[dict]:
    """One row per (family, d, T, r, trial); trial ``i`` uses seed ``seed0 + i``."""
    for name, lst in (("families", families), ("d_list", d_list), ("T_list", T_list),
                      ("r_list", r_list)):
        if not len(lst):
            raise ValueError(f"{name} is empty")
    if trials < 1:
        raise ValueError("trials must be positive")
    rows = []
    for family in families:
        for d in d_list:
            for r in r_list:
                for T in T_list:
                    for trial in range(trials):
                        rows.append(run_cell(family, d, T, r, trial, seed0, **kwargs))
    return rows


def median_mse(rows, **match) -> float:
    vals = [row["mse"] for row in rows
            if all(row[k] == v for k, v in match.items()) and math.isfinite(row["mse"])]
    return float(np.median(vals)) if vals else math.nan


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def trend_slopes(rows) -> list[dict]:
    """Log-log slope of median MSE against T for every (family, d, r)."""
    keys = sorted({(r["family"], r["d"], r["r"]) for r in rows})
    out = []
    for family, d, r in keys:
        Ts = sorted({row["T"] for row in rows if (row["family"], row["d"], row["r"]) == (family, d, r)})
        meds = [median_mse(rows, family=family, d=d, r=r, T=T) for T in Ts]
        ok = [(T, m) for T, m in zip(Ts, meds) if math.isfinite(m) and m > 0]
        slope = loglog_slope(*zip(*ok)) if len(ok) >= 2 else math.nan
        out.append({"family": family, "d": d, "r": r, "slope": slope, "n_T": len(ok)})
    return out


def write_grid_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GRID_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in GRID_COLUMNS])


def write_grid_jsonl(rows, path) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps({c: row.get(c) for c in GRID_COLUMNS + ("error",)}) + "\n")


def _fmt(v):
    return repr(v) if isinstance(v, float) else v
