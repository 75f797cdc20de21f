"""Penalized GLM estimation of sparse additive auto-regressive networks.

For node ``j`` the fit minimizes, over one coefficient block per predictor
series,

    (1/(2T)) sum_t [Z(eta_t) - eta_t y_t]
        + lambda_T sum_k ||R_k beta_k||_2 + lambda_H sum_k ||beta_k||_2,

with ``eta_t = v_j + sum_k Psi_k[t] beta_k`` and ``y_t = X[t+1, j]``.
``||R_k beta_k||`` is the empirical norm of the block function and
``||beta_k||`` its RKHS norm in the Mercer basis.

Blocks are visited cyclically. A block whose zero value is optimal is set
to exactly zero; otherwise the block problem is solved by ADMM on the
splitting ``u = R beta, w = beta`` (closed form in the Gaussian case when
``lambda_H == 0``).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import brentq

from . import glm
from .errors import DataError, DomainError, NumericalError
from .kernels import DesignBlock, KernelSpec, design_block, features


@dataclass
class FitConfig:
    lambda_T: float = 0.0
    lambda_H: float = 0.0
    max_outer: int = 500
    max_inner: int = 200
    tol_rel_obj: float = 1e-6
    admm_rho: float = 1.0
    center: bool = True
    offsets: tuple | None = None
    intercept_column: bool = False
    support_eps: float = 1e-6
    inner_tol: float = 1e-8

    def __post_init__(self):
        if self.lambda_T < 0 or self.lambda_H < 0:
            raise ValueError("penalties must be nonnegative")
        if self.tol_rel_obj <= 0 or self.inner_tol <= 0 or self.admm_rho <= 0:
            raise ValueError("tolerances and rho must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be positive")
        if self.offsets is not None:
            self.offsets = tuple(float(v) for v in self.offsets)

    def offset(self, j: int, d: int) -> float:
        if self.offsets is None:
            return 0.0
        if len(self.offsets) != d:
            raise ValueError(f"need {d} offsets, got {len(self.offsets)}")
        return self.offsets[j]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NodeFit:
    j: int
    beta: np.ndarray
    norms_T: np.ndarray
    norms_H: np.ndarray
    objective_trace: list
    converged: bool
    support: tuple
    intercept: float = 0.0
    offset: float = 0.0

    def to_dict(self) -> dict:
        return {"j": self.j, "beta": self.beta.tolist(), "norms_T": self.norms_T.tolist(),
                "norms_H": self.norms_H.tolist(), "objective_trace": list(self.objective_trace),
                "converged": self.converged, "support": list(self.support),
                "intercept": self.intercept, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "NodeFit":
        return cls(d["j"], np.asarray(d["beta"], float), np.asarray(d["norms_T"], float),
                   np.asarray(d["norms_H"], float), list(d["objective_trace"]),
                   bool(d["converged"]), tuple(d["support"]), float(d["intercept"]),
                   float(d["offset"]))


@dataclass
class NetworkFit:
    node_fits: list
    kernel: KernelSpec
    family: glm.GlmFamily
    config: FitConfig
    centering_means: np.ndarray

    @property
    def d(self) -> int:
        return len(self.node_fits)

    @property
    def beta(self) -> np.ndarray:
        """Coefficients with shape ``(d, d, M)``: response node, predictor, basis."""
        return np.stack([nf.beta for nf in self.node_fits])

    @property
    def norms_T(self) -> np.ndarray:
        return np.stack([nf.norms_T for nf in self.node_fits])

    @property
    def norms_H(self) -> np.ndarray:
        return np.stack([nf.norms_H for nf in self.node_fits])

    def adjacency(self, threshold: float | None = None) -> np.ndarray:
        """``A[j, k] = 1`` iff predictor ``k`` is in the support of node ``j``."""
        if threshold is None:
            A = np.zeros((self.d, self.d), dtype=int)
            for nf in self.node_fits:
                A[nf.j, list(nf.support)] = 1
            return A
        return (np.maximum(self.norms_T, self.norms_H) > threshold).astype(int)

    def linear_predictor(self, X) -> np.ndarray:
        """``eta`` for each row of ``X`` (shape ``(n, d)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} columns, got {X.shape[1]}")
        F = features(self.kernel, X) - self.centering_means  # (n, d, M)
        eta = np.einsum("nkm,jkm->nj", F, self.beta)
        eta += np.array([nf.offset + nf.intercept for nf in self.node_fits])
        return eta

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.to_dict(), "family": self.family.kind,
                "config": self.config.to_dict(),
                "centering_means": self.centering_means.tolist(),
                "node_fits": [nf.to_dict() for nf in self.node_fits]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkFit":
        cfg = dict(d["config"])
        return cls([NodeFit.from_dict(n) for n in d["node_fits"]],
                   KernelSpec.from_dict(d["kernel"]), glm.family(d["family"]),
                   FitConfig(**cfg), np.asarray(d["centering_means"], float))


def _as_array(data) -> np.ndarray:
    values = getattr(data, "values", data)
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("need a (T+1) x d array with T >= 1")
    if not np.all(np.isfinite(X)):
        raise DataError("data contains non-finite values")
    return X


def build_blocks(X, kernel: KernelSpec, center: bool = True) -> list[DesignBlock]:
    """Design blocks for the predictor rows ``X[0..T-1]`` of every series."""
    X = _as_array(X)
    return [design_block(kernel, X[:-1, k], center=center) for k in range(X.shape[1])]


def group_prox(v: np.ndarray, t: float) -> np.ndarray:
    """Prox of ``t * ||.||_2``: block soft-thresholding."""
    n = np.linalg.norm(v)
    if n <= t:
        return np.zeros_like(v)
    return (1.0 - t / n) * v


def zero_is_optimal(grad: np.ndarray, R: np.ndarray, lam_T: float, lam_H: float,
                    rtol: float = 1e-10) -> bool:
    """Whether ``0`` lies in ``grad + lam_T R^T B + lam_H B`` (``B`` the unit ball).

    Computes ``min_{||a||<=1} ||grad + lam_T R^T a||`` exactly through the SVD
    of ``R`` and compares it with ``lam_H``.
    """
    slack = rtol * (lam_H + lam_T * np.linalg.norm(R, 2)) + 1e-300
    if lam_T == 0.0:
        return np.linalg.norm(grad) <= lam_H + slack
    U, s, Vt = np.linalg.svd(lam_T * R.T)
    c = U.T @ grad
    pos = s > 1e-14 * max(s[0], 1e-300)
    a_free = np.zeros_like(c)
    a_free[pos] = -c[pos] / s[pos]
    if np.sum(a_free ** 2) <= 1.0:
        resid = math.sqrt(np.sum(c[~pos] ** 2))
    else:
        sp, cp = s[pos], c[pos]

        def excess(nu):
            return np.sum((sp * cp / (sp * sp + nu)) ** 2) - 1.0

        hi = max(float(np.max(sp * np.abs(cp))), 1e-300)
        while excess(hi) > 0:
            hi *= 2.0
        nu = brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-14, maxiter=500)
        resid = math.sqrt(np.sum((nu * cp / (sp * sp + nu)) ** 2) + np.sum(c[~pos] ** 2))
    return resid <= lam_H + slack


class _NodeProblem:
    """Mutable solver state for one response node."""

    def __init__(self, blocks, y, fam: glm.GlmFamily, cfg: FitConfig, offset: float):
        self.blocks = blocks
        self.y = y
        self.fam = fam
        self.cfg = cfg
        self.offset = offset
        self.T = y.size
        self.d = len(blocks)
        self.M = blocks[0].Psi.shape[1]
        self.beta = np.zeros((self.d, self.M))
        self.intercept = 0.0
        self.eta = np.full(self.T, offset)
        self._admm = [None] * self.d
        self._chol = {}

    # -- objective pieces
    def nll(self, eta) -> float:
        return glm.negloglik(self.fam, eta, self.y)

    def penalty(self, k, b) -> float:
        R = self.blocks[k].R
        return self.cfg.lambda_T * np.linalg.norm(R @ b) + self.cfg.lambda_H * np.linalg.norm(b)

    def objective(self) -> float:
        pen = sum(self.penalty(k, self.beta[k]) for k in range(self.d))
        return self.nll(self.eta) + pen

    def block_objective(self, k, o, b) -> float:
        eta = o + self.blocks[k].Psi @ b
        try:
            return self.nll(eta) + self.penalty(k, b)
        except DomainError:
            return math.inf

    # -- block updates
    def _gaussian_exact(self, k, o) -> np.ndarray:
        # in gamma = R beta the block problem is 1/4 ||gamma - z||^2 + lam_T ||gamma||
        blk = self.blocks[k]
        z = solve_triangular(blk.R, blk.Psi.T @ (self.y - o), trans="T") / self.T
        gamma = group_prox(z, 2.0 * self.cfg.lambda_T)
        return solve_triangular(blk.R, gamma)

    def _beta_step(self, k, o, a, b, beta):
        blk, rho, T = self.blocks[k], self.cfg.admm_rho, self.T
        R, Psi = blk.R, blk.Psi
        if self.fam.kind == "gaussian":
            if k not in self._chol:
                RtR = R.T @ R
                H = 0.5 * RtR + rho * (RtR + np.eye(self.M))
                self._chol[k] = cho_factor(H)
            rhs = Psi.T @ (self.y - o) / (2.0 * T) + rho * (R.T @ a + b)
            return cho_solve(self._chol[k], rhs)

        def phi(bb):
            eta = o + Psi @ bb
            if np.any(np.abs(eta) > self.fam.eta_limit):
                return math.inf, eta
            val = (np.sum(self.fam.Z(eta) - eta * self.y) / (2.0 * T)
                   + 0.5 * rho * np.sum((R @ bb - a) ** 2) + 0.5 * rho * np.sum((bb - b) ** 2))
            return val, eta

        f, eta = phi(beta)
        if not math.isfinite(f):
            beta = np.zeros_like(beta)
            f, eta = phi(beta)
        RtR = R.T @ R
        for _ in range(5):
            g = (Psi.T @ (self.fam.dZ(eta) - self.y) / (2.0 * T)
                 + rho * (R.T @ (R @ beta - a)) + rho * (beta - b))
            H = (Psi.T * self.fam.d2Z(eta)) @ Psi / (2.0 * T) + rho * (RtR + np.eye(self.M))
            step = np.linalg.solve(H, g)
            dec = float(g @ step)
            if dec < 1e-3 * self.cfg.inner_tol ** 2:
                break
            t = 1.0
            while t > 1e-10:
                cand = beta - t * step
                fc, ec = phi(cand)
                if fc <= f - 0.25 * t * dec:
                    break
                t *= 0.5
            else:
                break
            beta, f, eta = cand, fc, ec
        return beta

    def _admm_block(self, k, o, beta0) -> np.ndarray:
        blk, cfg = self.blocks[k], self.cfg
        R, rho = blk.R, cfg.admm_rho
        state = self._admm[k]
        if state is None:
            u, w = R @ beta0, beta0.copy()
            p, q = np.zeros(self.M), np.zeros(self.M)
        else:
            u, w, p, q = state
        beta = beta0
        for _ in range(cfg.max_inner):
            beta = self._beta_step(k, o, u - p, w - q, beta)
            Rb = R @ beta
            u_old, w_old = u, w
            u = group_prox(Rb + p, cfg.lambda_T / rho)
            w = group_prox(beta + q, cfg.lambda_H / rho)
            p = p + Rb - u
            q = q + beta - w
            r_norm = math.sqrt(np.sum((Rb - u) ** 2) + np.sum((beta - w) ** 2))
            s_norm = rho * math.sqrt(np.sum((R.T @ (u - u_old)) ** 2) + np.sum((w - w_old) ** 2))
            if r_norm < cfg.inner_tol and s_norm < cfg.inner_tol:
                break
        self._admm[k] = (u, w, p, q)
        candidates = [beta, w]
        if not blk.rank_deficient:
            candidates.append(solve_triangular(R, u))
        vals = [self.block_objective(k, o, c) for c in candidates]
        return candidates[int(np.argmin(vals))]

    def update_block(self, k):
        blk, cfg = self.blocks[k], self.cfg
        old = self.beta[k]
        o = self.eta - blk.Psi @ old
        grad0 = blk.Psi.T @ (self.fam.dZ(o) - self.y) / (2.0 * self.T)
        if zero_is_optimal(grad0, blk.R, cfg.lambda_T, cfg.lambda_H):
            new = np.zeros(self.M)
            self._admm[k] = None
        elif (self.fam.kind == "gaussian" and cfg.lambda_H == 0.0
              and not blk.rank_deficient):
            new = self._gaussian_exact(k, o)
        else:
            new = self._admm_block(k, o, old)
            if self.block_objective(k, o, new) > self.block_objective(k, o, old):
                new = old
        self.beta[k] = new
        self.eta = o + blk.Psi @ new

    def update_intercept(self):
        rest = self.eta - self.intercept
        fam = self.fam
        if fam.kind == "gaussian":
            c = float(np.mean(self.y - rest))
        elif fam.kind == "poisson":
            total = float(np.sum(self.y))
            lo = -fam.eta_limit + 1.0 - float(np.min(rest))
            c = math.log(total) - float(np.log(np.sum(np.exp(rest)))) if total > 0 else lo
            c = min(max(c, lo), fam.eta_limit - 1.0 - float(np.max(rest)))
        else:
            c = self.intercept
            for _ in range(50):
                p = fam.dZ(rest + c)
                g = float(np.sum(p - self.y))
                h = float(np.sum(p * (1 - p))) + 1e-12
                step = max(min(g / h, 5.0), -5.0)
                c -= step
                if abs(step) < 1e-12:
                    break
        self.intercept = c
        self.eta = rest + c


def _resolve(kernel, fam, cfg):
    return kernel, glm.family(fam), cfg if cfg is not None else FitConfig()


def fit_node(j: int, data, kernel: KernelSpec, fam, cfg: FitConfig | None = None,
             blocks: list | None = None) -> NodeFit:
    kernel, fam, cfg = _resolve(kernel, fam, cfg)
    X = _as_array(data)
    d = X.shape[1]
    if not 0 <= j < d:
        raise IndexError(f"node index {j} out of range for d={d}")
    if blocks is None:
        blocks = build_blocks(X, kernel, cfg.center)
    y = fam.check_response(X[1:, j])
    prob = _NodeProblem(blocks, y, fam, cfg, cfg.offset(j, d))
    if cfg.intercept_column:
        prob.update_intercept()
    trace = [prob.objective()]
    converged = False
    for it in range(cfg.max_outer):
        for k in range(d):
            prob.update_block(k)
        if cfg.intercept_column:
            prob.update_intercept()
        F = prob.objective()
        if not math.isfinite(F):
            raise NumericalError(
                f"node {j}: non-finite objective at outer iteration {it}; "
                f"block norms {np.linalg.norm(prob.beta, axis=1).tolist()}")
        prev = trace[-1]
        trace.append(F)
        if abs(prev - F) <= cfg.tol_rel_obj * max(abs(prev), abs(F), 1e-12):
            converged = True
            break
    beta = prob.beta.copy()
    norms_H = np.linalg.norm(beta, axis=1)
    norms_T = np.array([np.linalg.norm(blocks[k].R @ beta[k]) for k in range(d)])
    top = max(float(np.max(np.maximum(norms_T, norms_H))), 0.0)
    eps = cfg.support_eps * top
    support = tuple(int(k) for k in np.flatnonzero(np.maximum(norms_T, norms_H) > eps))
    return NodeFit(j, beta, norms_T, norms_H, trace, converged, support,
                   float(prob.intercept), float(prob.offset))


def fit_network(data, kernel: KernelSpec, fam, cfg: FitConfig | None = None,
                nodes=None) -> NetworkFit:
    """Fit every node (or the listed ``nodes``, in the given order)."""
    kernel, fam, cfg = _resolve(kernel, fam, cfg)
    X = _as_array(data)
    d = X.shape[1]
    blocks = build_blocks(X, kernel, cfg.center)
    order = range(d) if nodes is None else nodes
    fits = {}
    for j in order:
        try:
            fits[j] = fit_node(j, X, kernel, fam, cfg, blocks=blocks)
        except (DomainError, NumericalError) as exc:
            raise type(exc)(f"fit failed at node {j}: {exc}") from exc
    means = np.stack([b.centering_means for b in blocks])
    return NetworkFit([fits[j] for j in sorted(fits)], kernel, fam, cfg, means)


def predict(fit: NetworkFit, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (fit.d,) or not np.all(np.isfinite(x)):
        raise DataError(f"need a finite vector of length {fit.d}")
    eta = fit.linear_predictor(x[None, :])[0]
    fit.family.check_eta(eta)
    return eta, fit.family.dZ(eta)


def objective(fit: NetworkFit, data, j: int, lambda_T: float | None = None,
              lambda_H: float | None = None) -> float:
    """Penalized objective of node ``j`` evaluated at the fitted coefficients."""
    X = _as_array(data)
    cfg = fit.config
    blocks = build_blocks(X, fit.kernel, cfg.center)
    nf = fit.node_fits[j]
    return objective_at(blocks, X[1:, j], fit.family, nf.beta,
                        nf.offset + nf.intercept,
                        cfg.lambda_T if lambda_T is None else lambda_T,
                        cfg.lambda_H if lambda_H is None else lambda_H)


def objective_at(blocks, y, fam, beta, shift: float, lambda_T: float, lambda_H: float) -> float:
    """Objective for explicit coefficients ``beta`` of shape ``(d, M)``."""
    fam = glm.family(fam)
    eta = shift + sum(b.Psi @ beta[k] for k, b in enumerate(blocks))
    pen = sum(lambda_T * np.linalg.norm(b.R @ beta[k]) + lambda_H * np.linalg.norm(beta[k])
              for k, b in enumerate(blocks))
    return glm.negloglik(fam, eta, y) + pen


def max_zero_gradient(data, kernel: KernelSpec, fam, cfg: FitConfig | None = None) -> float:
    """Largest block-gradient norm of the smooth loss at all-zero coefficients."""
    kernel, fam, cfg = _resolve(kernel, fam, cfg)
    X = _as_array(data)
    d = X.shape[1]
    blocks = build_blocks(X, kernel, cfg.center)
    out = 0.0
    for j in range(d):
        eta = np.full(X.shape[0] - 1, cfg.offset(j, d))
        g = glm.negloglik_grad(fam, eta, X[1:, j])
        out = max(out, max(np.linalg.norm(b.Psi.T @ g) for b in blocks))
    return out


def pearson_chi2(means, observed) -> float:
    """Average of ``(observed - mean)^2 / mean``."""
    means = np.atleast_1d(np.asarray(means, dtype=float))
    observed = np.atleast_1d(np.asarray(observed, dtype=float))
    if means.shape != observed.shape:
        raise ValueError("means and observations differ in shape")
    if np.any(~(means > 0)):
        raise DomainError("predicted means must be positive")
    return float(np.mean((observed - means) ** 2 / means))


@dataclass
class CVResult:
    best: tuple
    table: list = field(default_factory=list)
    folds: list = field(default_factory=list)


def _fold_loss(fit: NetworkFit, X_test_pairs) -> float:
    X_in, X_out = X_test_pairs
    eta = fit.linear_predictor(X_in)
    fit.family.check_eta(eta)
    mean = fit.family.dZ(eta)
    if fit.family.kind == "poisson":
        return float(np.mean([pearson_chi2(mean[:, j], X_out[:, j]) for j in range(fit.d)]))
    return float(np.mean((X_out - mean) ** 2))


def cv_folds(n_rows: int, horizon: int, train_len: int | None = None, n_folds: int = 3):
    """Row windows ``(train_rows, test_rows)`` for the backward-shifted folds.

    Fold ``f`` (``f = 0, 1, 2``) tests on the ``horizon`` transitions ending
    ``f * horizon`` transitions before the end of the data and trains on the
    ``train_len`` transitions immediately before them.
    """
    n_trans = n_rows - 1
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if train_len is None:
        train_len = n_trans - n_folds * horizon
    need = train_len + n_folds * horizon + 1
    if train_len < 2 or n_rows < need:
        raise DataError(
            f"cross-validation needs at least {max(need, n_folds * horizon + 3)} rows "
            f"(train_len={train_len}, horizon={horizon}, folds={n_folds}); got {n_rows}")
    folds = []
    for f in range(n_folds):
        test_end = n_trans - f * horizon          # exclusive, in transition index
        test_start = test_end - horizon
        train_start = test_start - train_len
        folds.append((slice(train_start, test_start + 1), slice(test_start, test_end + 1)))
    return folds


def cross_validate(data, grid, horizon: int, kernel: KernelSpec, fam,
                   cfg: FitConfig | None = None, train_len: int | None = None) -> CVResult:
    """Choose ``(lambda_T, lambda_H)`` by three backward-shifted validation folds.

    Ties go to the larger ``lambda_T``, then the larger ``lambda_H``.
    """
    kernel, fam, cfg = _resolve(kernel, fam, cfg)
    X = _as_array(data)
    pairs = sorted({(float(a), float(b)) for a, b in grid})
    if not pairs:
        raise ValueError("empty lambda grid")
    folds = cv_folds(X.shape[0], horizon, train_len)
    table = []
    for lam_T, lam_H in pairs:
        c = replace(cfg, lambda_T=lam_T, lambda_H=lam_H)
        losses = []
        for train, test in folds:
            fit = fit_network(X[train], kernel, fam, c)
            Xt = X[test]
            losses.append(_fold_loss(fit, (Xt[:-1], Xt[1:])))
        table.append({"lambda_T": lam_T, "lambda_H": lam_H,
                      "fold_losses": losses, "mean_loss": float(np.mean(losses))})
    best = min(table, key=lambda r: (r["mean_loss"], -r["lambda_T"], -r["lambda_H"]))
    return CVResult((best["lambda_T"], best["lambda_H"]), table,
                    [(f[0].start, f[0].stop, f[1].start, f[1].stop) for f in folds])
