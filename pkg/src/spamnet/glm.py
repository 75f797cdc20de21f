"""Canonical exponential-family machinery for the node likelihoods.

All families use the identity sufficient statistic and drop the base
measure, so the per-observation loss is ``Z(eta) - eta * y``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError

# exp() overflows near 709; poisson predictors are held to a much tighter range
OVERFLOW_LIMIT = 700.0
POISSON_ETA_LIMIT = 30.0


@dataclass(frozen=True)
class GlmFamily:
    kind: str

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson", "bernoulli"):
            raise ValueError(f"unknown family {self.kind!r}")

    @property
    def response_domain(self) -> str:
        return {"gaussian": "reals", "poisson": "nonneg_integers",
                "bernoulli": "binary"}[self.kind]

    @property
    def eta_limit(self) -> float:
        if self.kind == "gaussian":
            return math.inf
        if self.kind == "poisson":
            return POISSON_ETA_LIMIT
        return OVERFLOW_LIMIT

    def Z(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return 0.5 * x * x
        if self.kind == "poisson":
            return np.exp(x)
        return np.logaddexp(0.0, x)

    def dZ(self, x):
        """Mean function ``Z'``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return x.copy()
        if self.kind == "poisson":
            return np.exp(x)
        return expit(x)

    def d2Z(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(x)
        if self.kind == "poisson":
            return np.exp(x)
        p = expit(x)
        return p * (1.0 - p)

    def phi(self, y):
        return np.asarray(y, dtype=float)

    def check_eta(self, eta, limit: float | None = None):
        eta = np.asarray(eta, dtype=float)
        limit = self.eta_limit if limit is None else limit
        bad = ~np.isfinite(eta) | (np.abs(eta) > limit)
        if np.any(bad):
            idx = np.flatnonzero(np.atleast_1d(bad))
            raise DomainError(
                f"{self.kind} linear predictor outside |eta| <= {limit} at indices "
                f"{idx[:10].tolist()}")
        return eta

    def check_response(self, y):
        y = np.asarray(y, dtype=float)
        bad = ~np.isfinite(y)
        if self.kind == "poisson":
            bad |= (y < 0) | (y != np.round(y))
        elif self.kind == "bernoulli":
            bad |= (y != 0) & (y != 1)
        if np.any(bad):
            idx = np.flatnonzero(np.atleast_1d(bad))
            raise DomainError(
                f"responses outside the {self.response_domain} domain at indices "
                f"{idx[:10].tolist()}")
        return y

    def mean_in_range(self, mean) -> bool:
        mean = np.asarray(mean)
        if self.kind == "poisson":
            return bool(np.all(mean > 0))
        if self.kind == "bernoulli":
            return bool(np.all((mean > 0) & (mean < 1)))
        return bool(np.all(np.isfinite(mean)))


GAUSSIAN = GlmFamily("gaussian")
POISSON = GlmFamily("poisson")
BERNOULLI = GlmFamily("bernoulli")


def family(name) -> GlmFamily:
    if isinstance(name, GlmFamily):
        return name
    return GlmFamily(str(name).lower())


def bregman(fam: GlmFamily, x: float, y: float) -> float:
    """``Z(x) - Z(y) - Z'(y) (x - y)``."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError("bregman arguments must be finite")
    if fam.kind != "gaussian" and max(abs(x), abs(y)) > OVERFLOW_LIMIT:
        raise DomainError(f"|x| or |y| > {OVERFLOW_LIMIT} overflows the {fam.kind} partition")
    if fam.kind == "gaussian":
        return 0.5 * (x - y) ** 2
    if fam.kind == "poisson":
        # e^y (e^(x-y) - 1 - (x-y)) keeps precision when x ~ y
        h = x - y
        return float(math.exp(y) * (math.expm1(h) - h))
    val = float(fam.Z(x) - fam.Z(y) - fam.dZ(y) * (x - y))
    return max(val, 0.0)


def strong_convexity(fam: GlmFamily, v_min: float, v_max: float, s_max: int,
                     trace_mu: float) -> float:
    """Strong-convexity constant of ``Z`` on the range reachable by the predictors."""
    if v_min > v_max:
        raise ValueError("v_min must not exceed v_max")
    spread = (16.0 * math.sqrt(trace_mu) + 1.0) * s_max
    if fam.kind == "gaussian":
        return 1.0
    if fam.kind == "bernoulli":
        return 1.0 / (math.exp(max(v_max, -v_min) + spread) + 3.0)
    return math.exp(v_min - spread)


def negloglik(fam: GlmFamily, eta, y) -> float:
    """``(1/(2n)) sum_t (Z(eta_t) - eta_t y_t)``."""
    eta = fam.check_eta(np.atleast_1d(np.asarray(eta, dtype=float)))
    y = fam.check_response(np.atleast_1d(y))
    if eta.shape != y.shape:
        raise ValueError(f"eta has shape {eta.shape}, y has {y.shape}")
    n = eta.size
    return float(np.sum(fam.Z(eta) - eta * fam.phi(y)) / (2.0 * n))


def negloglik_grad(fam: GlmFamily, eta, y) -> np.ndarray:
    eta = fam.check_eta(np.atleast_1d(np.asarray(eta, dtype=float)))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return (fam.dZ(eta) - fam.phi(y)) / (2.0 * eta.size)
