"""Critical rates, mixing block counts and theory-driven tuning parameters.

All constants that the theory only pins down up to "sufficiently large"
(``c1``, ``c4``, ``C``) default to 1, so every reported number is meaningful
up to constants only.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import zeta

from .kernels import KernelSpec

PHI_MIN_R = 0.781
M0_GRID_FLOOR = 4096


@dataclass(frozen=True)
class MixingSpec:
    kind: str
    r: float
    c0: float | None = None

    def __post_init__(self):
        if self.kind not in ("beta", "phi"):
            raise ValueError(f"unknown mixing kind {self.kind!r}")
        if not self.r > 0:
            raise ValueError("mixing exponent r must be positive")
        if self.c0 is not None and not 0.0 < self.c0 <= 1.0:
            raise ValueError("c0 must lie in (0, 1]")
        if self.kind == "beta":
            if self.c0 is None:
                raise ValueError("beta mixing needs c0")
            if self.r * self.c0 < 1.0:
                raise ValueError(
                    f"beta mixing needs r >= 1/c0, got r={self.r} < 1/c0={1.0 / self.c0}")
        elif self.r < PHI_MIN_R:
            raise ValueError(f"phi mixing needs r >= {PHI_MIN_R}, got r={self.r}")


@dataclass
class RatesReport:
    T: int
    d: int
    m: int
    epsilon_m: float
    epsilon_tilde_m: float
    M0: int
    gamma_m: float
    gamma_tilde_m: float
    lambda_T: float
    lambda_H: float
    delta_mj: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    growth_ratio: float = math.nan
    constants: dict = field(default_factory=dict)

    def as_flat(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, dict):
                out.update({f"{key}.{k}": v for k, v in val.items()})
            elif isinstance(val, list):
                out.update({f"{key}[{i}]": v for i, v in enumerate(val)})
            else:
                out[key] = val
        return out


# ---------------------------------------------------------------- spectra

def _finite_spectrum(spec: KernelSpec) -> np.ndarray | None:
    """Eigenvalues as an explicit array, or None for the infinite decay family."""
    return None if spec.kind == "eigen_decay" else spec.mu


def _n_saturated(alpha: float, s2: float) -> int:
    """Number of ``l >= 1`` with ``l**(-2 alpha) >= s2``."""
    if s2 <= 0:
        return 2 ** 62
    n = int(math.floor(s2 ** (-1.0 / (2.0 * alpha))))
    # guard the float floor on both sides
    while n >= 1 and n ** (-2.0 * alpha) < s2:
        n -= 1
    while (n + 1) ** (-2.0 * alpha) >= s2:
        n += 1
    return max(n, 0)


def _zeta_tail(alpha: float, start: int) -> float:
    """Exact ``sum_{l >= start} l**(-2 alpha)``."""
    return float(zeta(2.0 * alpha, start))


def sum_min(spec: KernelSpec, s2: float) -> float:
    """``sum_i min(mu_i, s2)`` over the full (possibly infinite) spectrum."""
    mu = _finite_spectrum(spec)
    if mu is not None:
        return float(np.sum(np.minimum(mu, s2)))
    a = spec.alpha
    if a <= 0.5:
        return math.inf
    n = _n_saturated(a, s2)
    return n * s2 + _zeta_tail(a, n + 1)


def _head_tail(spec: KernelSpec, s2: float, M0: int) -> tuple[float, float]:
    """Head sum over ``i <= M0`` (exact) and tail sum over ``i > M0``.

    The decay-family tail uses the integral bound past the saturated range.
    """
    mu = _finite_spectrum(spec)
    if mu is not None:
        mins = np.minimum(mu, s2)
        return float(np.sum(mins[:M0])), float(np.sum(mins[M0:]))
    a = spec.alpha
    n = _n_saturated(a, s2)
    if n >= M0:
        head = M0 * s2
    else:
        head = n * s2 + _zeta_tail(a, n + 1) - _zeta_tail(a, M0 + 1)
    L = max(M0, n)
    tail = (L - M0) * s2 + L ** (1.0 - 2.0 * a) / (2.0 * a - 1.0)
    return head, tail


# ---------------------------------------------------------------- bisection

def _bisect_min_sigma(ok, rel_tol: float) -> float:
    """Smallest sigma with ok(sigma) for a predicate monotone in sigma."""
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e150:
            raise ArithmeticError("no sigma satisfies the rate inequality")
    lo = hi / 2.0
    while ok(lo):
        hi, lo = lo, lo / 2.0
        if lo < 1e-150:
            return 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def epsilon_condition(spec: KernelSpec, m: int, sigma: float) -> float:
    """Left side over right side of the critical-rate inequality."""
    return math.sqrt(sum_min(spec, sigma * sigma)) / (math.sqrt(m) * sigma * sigma)


def epsilon_m(spec: KernelSpec, m: int, rel_tol: float = 1e-8) -> float:
    """Critical univariate rate: minimal sigma with
    ``sqrt(sum_i min(mu_i, sigma^2)) / sqrt(m) <= sigma^2``."""
    if m < 1:
        raise ValueError("m must be a positive integer")
    return _bisect_min_sigma(lambda s: epsilon_condition(spec, m, s) <= 1.0, rel_tol)


def m0_grid(spec: KernelSpec) -> list[int]:
    xi = spec.M if spec.kind != "eigen_decay" else 0
    cap = max(M0_GRID_FLOOR, 2 * xi)
    grid, g = [], 1
    while g <= cap:
        grid.append(g)
        g *= 2
    if xi and xi not in grid:
        grid.append(xi)
    return sorted(grid)


def modified_lhs(spec: KernelSpec, m: int, T: int, d: int, sigma: float, M0: int) -> float:
    head, tail = _head_tail(spec, sigma * sigma, M0)
    ldt = math.log(d * T)
    return ldt * (3.0 * math.log(M0 * d * T) / math.sqrt(m) * math.sqrt(head)
                  + math.sqrt(T / m) * math.sqrt(tail))


def _best_m0(spec, m, T, d, sigma, grid):
    vals = [modified_lhs(spec, m, T, d, sigma, M0) for M0 in grid]
    i = int(np.argmin(vals))
    return vals[i], grid[i]


def epsilon_tilde_m(spec: KernelSpec, m: int, T: int, d: int,
                    rel_tol: float = 1e-6) -> tuple[float, int]:
    """Rate for the modified complexity; returns ``(sigma, M0)``.

    ``M0`` is searched on the grid from :func:`m0_grid`.
    """
    if m < 1 or T < 1 or d < 1:
        raise ValueError("m, T and d must be positive integers")
    if m > T:
        raise ValueError(f"block count m={m} exceeds T={T}")
    if d * T < 3:
        raise ValueError("d*T must be at least 3 for the log factors to be positive")
    grid = m0_grid(spec)

    def ok(sigma):
        return _best_m0(spec, m, T, d, sigma, grid)[0] <= sigma * sigma

    sigma = _bisect_min_sigma(ok, rel_tol)
    return sigma, _best_m0(spec, m, T, d, sigma, grid)[1]


# ---------------------------------------------------------------- mixing

def _floor_power(T: int, exponent: float) -> int:
    x = T ** exponent
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(x, 1.0):
        x = nearest
    return int(min(max(math.floor(x), 1), T))


def block_exponent(mix: MixingSpec) -> float:
    if mix.kind == "phi" and mix.r <= 2.0:
        return mix.r / (mix.r + 2.0)
    if mix.kind == "phi" and mix.c0 is None:
        raise ValueError("phi mixing with r > 2 uses the beta block count and needs c0")
    if mix.c0 * mix.r < 1.0:
        raise ValueError(f"need r >= 1/c0, got r*c0={mix.r * mix.c0}")
    if math.isinf(mix.r):
        return 1.0
    return (mix.c0 * mix.r - 1.0) / (mix.c0 * mix.r)


def block_count(mix: MixingSpec, T: int) -> int:
    if T < 1:
        raise ValueError("T must be positive")
    return _floor_power(T, block_exponent(mix))


# ---------------------------------------------------------------- tuning

def delta_mj(s_j: float, d: int, m: int, eps_m: float, c4: float = 1.0) -> float:
    return math.sqrt(c4 * (s_j * math.log(d) / m + s_j * eps_m ** 2))


def error_bound(s_j: float, theta: float, d: int, m: int, T: int, eps_tilde: float,
                C: float = 1.0) -> float:
    if not 1 <= m <= T:
        raise ValueError("need 1 <= m <= T")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    return C * s_j / theta ** 2 * (math.log(d * T) / math.sqrt(m * T)
                                   + math.sqrt(m / T) * eps_tilde ** 2)


def tuning(spec: KernelSpec, mix: MixingSpec, T: int, d: int, c1: float = 1.0,
           s=1, theta: float = 1.0, c4: float = 1.0, C: float = 1.0) -> RatesReport:
    """Block count, critical rates and the smallest admissible ``(lambda_T, lambda_H)``.

    ``s`` is the in-degree of every node (scalar) or per node (length ``d``).
    """
    m = block_count(mix, T)
    eps = epsilon_m(spec, m)
    eps_t, M0 = epsilon_tilde_m(spec, m, T, d)
    gamma = c1 * max(eps, math.sqrt(math.log(d * T) / m))
    gamma_t = max(gamma, eps_t)
    scale = 8.0 * math.sqrt(2.0) * math.sqrt(m / T)
    s_list = [s] * d if np.isscalar(s) else list(s)
    if len(s_list) != d:
        raise ValueError("need one in-degree per node")
    deltas = [delta_mj(sj, d, m, eps, c4) for sj in s_list]
    bounds = [error_bound(sj, theta, d, m, T, eps_t, C) for sj in s_list]
    growth = m * gamma ** 2 / -math.log(gamma) if gamma < 1 else math.inf
    return RatesReport(
        T=T, d=d, m=m, epsilon_m=eps, epsilon_tilde_m=eps_t, M0=M0,
        gamma_m=gamma, gamma_tilde_m=gamma_t,
        lambda_T=scale * gamma_t, lambda_H=scale * gamma_t ** 2,
        delta_mj=deltas, bound=bounds, growth_ratio=growth,
        constants={"c1": c1, "c4": c4, "C": C, "theta": theta},
    )
