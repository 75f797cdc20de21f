"""Time-series CSV files and the sectioned run configuration."""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .estimator import FitConfig
from .kernels import KernelSpec, eigen_decay, finite_rank
from .rates import MixingSpec

FAMILIES = ("gaussian", "poisson", "bernoulli")


@dataclass
class TimeSeries:
    values: np.ndarray
    column_names: list
    family: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 2:
            raise DataError("a time series needs at least two rows")
        if len(self.column_names) != self.values.shape[1]:
            raise DataError("one name per column is required")
        bad = np.argwhere(~np.isfinite(self.values))
        if len(bad):
            t, k = bad[0]
            raise DataError(f"non-finite value at row {t}, column {self.column_names[k]!r}")
        if self.family == "poisson":
            v = self.values
            if np.any(v < 0) or np.any(v != np.round(v)):
                raise DataError("poisson series must hold nonnegative integers")
        elif self.family == "bernoulli":
            if np.any((self.values != 0) & (self.values != 1)):
                raise DataError("bernoulli series must hold 0/1 values")

    @property
    def T(self) -> int:
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]


def load_csv(path, family: str | None = None) -> TimeSeries:
    """Read a header row of names followed by one numeric row per time point.

    Data-file line numbers in error messages count the header as line 1.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        names = [h.strip() for h in header]
        if not names or any(not n for n in names):
            raise DataError(f"{path}: header has empty column names")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(f"{path}: line {line_no} has {len(row)} cells, expected {len(names)}")
            vals = []
            for name, cell in zip(names, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}, column {name!r}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: line {line_no}, column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two time points, found {len(rows)}")
    return TimeSeries(np.array(rows), names, family)


def save_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(series.column_names)
        for row in series.values:
            w.writerow([format(float(v), ".17g") for v in row])


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- config

def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


def _words(s):
    return tuple(x for x in s.replace(",", " ").split())


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("", "none") else float(s)


def _opt_int(s):
    return None if s.strip().lower() in ("", "none") else int(s)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {"family": (str, "gaussian"), "seed": (int, 0), "out": (str, "out")},
    "kernel": {"kind": (str, "finite_rank"), "rank": (int, 1), "alpha": (_opt_float, None),
               "M": (_opt_int, None), "basis": (str, "")},
    "mixing": {"kind": (str, "phi"), "r": (float, 2.0), "c0": (_opt_float, None)},
    "lambda": {"mode": (str, "theory"), "lambda_T": (float, 0.0), "lambda_H": (float, 0.0),
               "c1": (float, 1.0), "s": (float, 1.0)},
    "fit": {"max_outer": (int, 500), "max_inner": (int, 200), "tol_rel_obj": (float, 1e-6),
            "admm_rho": (float, 1.0), "center": (_bool, True), "intercept_column": (_bool, False),
            "support_eps": (float, 1e-6)},
    "simulate": {"d": (int, 8), "T": (int, 240), "r": (int, 1), "s": (int, 3),
                 "burn_in": (int, 200)},
    "experiment": {"families": (_words, ("gaussian",)), "d_list": (_ints, (8,)),
                   "T_list": (_ints, (80, 160, 240)), "r_list": (_ints, (1,)),
                   "trials": (int, 20), "lambda_scale": (float, 1.0)},
    "cv": {"lambda_T_grid": (_floats, ()), "lambda_H_grid": (_floats, (0.0,)),
           "horizon": (int, 60), "train_len": (_opt_int, None)},
    "cluster": {"k": (int, 2), "lambda_cov": (float, 0.0), "kmeans_restarts": (int, 10),
                "threshold": (float, 0.0), "fit": (str, ""), "coords": (str, "")},
    "predict": {"fit": (str, "")},
}


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    source_text: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["run"]["seed"]

    @property
    def family(self) -> str:
        return self.sections["run"]["family"]

    def digest(self) -> str:
        canon = json.dumps(self.sections, sort_keys=True, default=list)
        return hashlib.sha256(canon.encode()).hexdigest()

    def kernel(self) -> KernelSpec:
        k = self["kernel"]
        try:
            if k["kind"] == "finite_rank":
                kw = {"basis": k["basis"]} if k["basis"] else {}
                return finite_rank(k["rank"], **kw)
            if k["kind"] == "eigen_decay":
                if k["alpha"] is None:
                    raise ConfigError("[kernel] eigen_decay needs alpha")
                kw = {"basis": k["basis"]} if k["basis"] else {}
                return eigen_decay(k["alpha"], M=k["M"], **kw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[kernel] {exc}") from exc
        raise ConfigError(f"[kernel] kind must be finite_rank or eigen_decay, got {k['kind']!r}")

    def mixing(self) -> MixingSpec:
        m = self["mixing"]
        try:
            return MixingSpec(m["kind"], m["r"], m["c0"])
        except ValueError as exc:
            raise ConfigError(f"[mixing] {exc}") from exc

    def fit_config(self, lambda_T: float = 0.0, lambda_H: float = 0.0) -> FitConfig:
        try:
            return FitConfig(lambda_T=lambda_T, lambda_H=lambda_H, **self["fit"])
        except ValueError as exc:
            raise ConfigError(f"[fit] {exc}") from exc

    def cv_grid(self) -> list:
        c = self["cv"]
        return [(a, b) for a in c["lambda_T_grid"] for b in c["lambda_H_grid"]]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (lambda_T, M)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections = {}
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{name}]; known: {', '.join(SCHEMA)}")
    for name, keys in SCHEMA.items():
        given = dict(cp[name]) if cp.has_section(name) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{source}: unknown key {key!r} in [{name}]; "
                                  f"known: {', '.join(keys)}")
        vals = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    vals[key] = conv(given[key])
                except ValueError as exc:
                    raise ConfigError(f"{source}: [{name}] {key} = {given[key]!r}: {exc}") from None
            else:
                vals[key] = default
        sections[name] = vals
    cfg = RunConfig(sections, text)
    _validate(cfg, source)
    return cfg


def _validate(cfg: RunConfig, source: str) -> None:
    if cfg.family not in FAMILIES:
        raise ConfigError(f"{source}: [run] family must be one of {FAMILIES}")
    mode = cfg["lambda"]["mode"]
    if mode not in ("theory", "fixed", "cv"):
        raise ConfigError(f"{source}: [lambda] mode must be theory, fixed or cv")
    if mode == "cv" and not cfg["cv"]["lambda_T_grid"]:
        raise ConfigError(f"{source}: [lambda] mode = cv needs [cv] lambda_T_grid")
    if cfg["lambda"]["lambda_T"] < 0 or cfg["lambda"]["lambda_H"] < 0:
        raise ConfigError(f"{source}: penalties must be nonnegative")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
