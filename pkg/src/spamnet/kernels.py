"""Univariate RKHSs given by truncated Mercer eigen-systems.

A kernel is stored as its retained eigenvalues ``mu`` and a basis family.
Each block of a fit uses the feature map ``x -> sqrt(mu_i) * Phi_i(x)`` so
that ``f(x) = sum_i beta_i sqrt(mu_i) Phi_i(x)`` has ``||f||_H = ||beta||_2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError

BASES = ("poly_factorial", "cosine")
KINDS = ("finite_rank", "eigen_decay", "custom")

DEFAULT_TRUNCATION_CAP = 256
DEFAULT_TAIL_TOL = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    eigenvalues: tuple
    basis: str = "poly_factorial"
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        mu = np.asarray(self.eigenvalues, dtype=float)
        if mu.ndim != 1 or mu.size == 0:
            raise ValueError("need at least one eigenvalue")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ValueError("eigenvalues must be finite and positive")
        if np.any(np.diff(mu) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        if self.kind == "eigen_decay":
            if self.alpha is None or self.alpha < 0.5:
                raise ValueError("eigen_decay needs alpha >= 1/2")
        object.__setattr__(self, "eigenvalues", tuple(float(m) for m in mu))

    @property
    def M(self) -> int:
        return len(self.eigenvalues)

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.eigenvalues)

    @property
    def trace(self) -> float:
        """Trace of the retained expansion."""
        return float(np.sum(self.mu))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "eigenvalues": list(self.eigenvalues),
                "basis": self.basis, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], tuple(d["eigenvalues"]), d.get("basis", "poly_factorial"),
                   d.get("alpha"))


def finite_rank(rank: int, eigenvalues=None, basis: str = "poly_factorial") -> KernelSpec:
    if rank < 1:
        raise ValueError("rank must be positive")
    mu = np.ones(rank) if eigenvalues is None else np.asarray(eigenvalues, float)
    if mu.size != rank:
        raise ValueError("need exactly `rank` eigenvalues")
    return KernelSpec("finite_rank", tuple(mu), basis)


def eigen_decay(alpha: float, M: int | None = None, basis: str = "cosine",
                tail_tol: float = DEFAULT_TAIL_TOL,
                cap: int = DEFAULT_TRUNCATION_CAP) -> KernelSpec:
    """Kernel with ``mu_l = l**(-2 alpha)``, truncated at ``M`` terms.

    Without an explicit ``M`` the truncation is the smallest one whose
    integral tail bound is below ``tail_tol`` times the retained trace,
    capped at ``cap``.
    """
    if M is None:
        M = choose_truncation(alpha, tail_tol=tail_tol, cap=cap)
    ell = np.arange(1, M + 1, dtype=float)
    return KernelSpec("eigen_decay", tuple(ell ** (-2.0 * alpha)), basis, float(alpha))


def custom(eigenvalues, basis: str = "poly_factorial") -> KernelSpec:
    return KernelSpec("custom", tuple(eigenvalues), basis)


def decay_tail_bound(alpha: float, M: int) -> float:
    """Upper bound on ``sum_{i>M} i**(-2 alpha)``."""
    if alpha <= 0.5:
        return math.inf
    return M ** (1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0)


def choose_truncation(alpha: float, tail_tol: float = DEFAULT_TAIL_TOL,
                      cap: int = DEFAULT_TRUNCATION_CAP) -> int:
    if alpha <= 0.5:
        return cap
    M = 1
    while M < cap:
        head = float(np.sum(np.arange(1, M + 1, dtype=float) ** (-2.0 * alpha)))
        if decay_tail_bound(alpha, M) <= tail_tol * head:
            return M
        M += 1
    return cap


def basis_values(basis: str, x, M: int) -> np.ndarray:
    """Matrix of ``Phi_i(x)`` for i = 1..M, shape ``x.shape + (M,)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input to kernel basis")
    i = np.arange(1, M + 1, dtype=float)
    if basis == "poly_factorial":
        # x**i / i! via logs is unstable for x <= 0, so build by recursion
        out = np.empty(x.shape + (M,))
        cur = np.ones_like(x)
        for k in range(M):
            cur = cur * x / (k + 1)
            out[..., k] = cur
        return out
    if basis == "cosine":
        return np.cos(np.pi * x[..., None] * i)
    raise ValueError(f"unknown basis {basis!r}")


def features(spec: KernelSpec, x) -> np.ndarray:
    """``sqrt(mu_i) Phi_i(x)`` for every entry of ``x``."""
    return basis_values(spec.basis, x, spec.M) * np.sqrt(spec.mu)


def mercer_eval(spec: KernelSpec, x: float, y: float) -> float:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError("kernel arguments must be finite")
    px = basis_values(spec.basis, np.array([x, y]), spec.M)
    # mu * (a * b) rather than (mu * a) * b keeps K(x, y) == K(y, x) bit for bit
    return float(np.sum(spec.mu * (px[0] * px[1])))


@dataclass(frozen=True)
class DesignBlock:
    """Per-column design with ``||Psi b||_2 / sqrt(T) == ||R b||_2``."""

    Psi: np.ndarray
    centering_means: np.ndarray
    R: np.ndarray
    rank_deficient: bool = False

    @property
    def T(self) -> int:
        return self.Psi.shape[0]

    def norm_T(self, beta) -> float:
        return float(np.linalg.norm(self.R @ beta))


def design_block(spec: KernelSpec, column, center: bool = True) -> DesignBlock:
    column = np.asarray(column, dtype=float).ravel()
    if column.size == 0:
        raise DataError("empty column")
    if not np.all(np.isfinite(column)):
        raise DataError("column has non-finite entries")
    T, M = column.size, spec.M
    Psi = features(spec, column)
    means = Psi.mean(axis=0) if center else np.zeros(M)
    if center:
        Psi = Psi - means
    if T < M:
        warnings.warn(f"T={T} < M={M}: block factor is rank deficient", stacklevel=2)
    r = np.linalg.qr(Psi / math.sqrt(T), mode="r")
    R = np.zeros((M, M))
    R[: r.shape[0], :] = r
    sign = np.where(np.diag(R) < 0, -1.0, 1.0)
    R = sign[:, None] * R
    sv = np.linalg.svd(R, compute_uv=False)
    deficient = T < M or sv[-1] <= 1e-12 * max(sv[0], 1e-300)
    Psi.setflags(write=False)
    R.setflags(write=False)
    means.setflags(write=False)
    return DesignBlock(Psi, means, R, bool(deficient))


def empirical_kernel_matrix(spec: KernelSpec, column) -> np.ndarray:
    column = np.asarray(column, dtype=float).ravel()
    if column.size == 0:
        raise DataError("empty column")
    F = features(spec, column)
    K = F @ F.T
    return 0.5 * (K + K.T)
