import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_pearson, primal_dual_reference, representer_reference
from spamnet import glm
from spamnet.errors import DataError, DomainError, NumericalError
from spamnet.estimator import (FitConfig, NetworkFit, build_blocks, cross_validate, cv_folds,
                               fit_network, fit_node, max_zero_gradient, objective,
                               objective_at, pearson_chi2, predict, zero_is_optimal)
from spamnet.kernels import eigen_decay, features, finite_rank


def signal_data(seed, fam="gaussian", T=60, d=3):
    """Node 0 is driven by nodes 1 and 2; the rest is U[0, 1] noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (T + 1, d))
    drive = np.r_[0.0, 0.8 * X[:-1, 1] - 0.6 * X[:-1, 2] ** 2]
    if fam == "gaussian":
        X[:, 0] += drive
    elif fam == "poisson":
        X[:, 0] = rng.poisson(np.exp(0.5 + drive))
    else:
        X[:, 0] = rng.uniform(size=T + 1) < 1 / (1 + np.exp(-3 * (drive - 0.1)))
    return X


def node_objective(data, nf, kernel, fam, cfg):
    blocks = build_blocks(data, kernel, cfg.center)
    return objective_at(blocks, np.asarray(data)[1:, nf.j], fam, nf.beta,
                        nf.offset + nf.intercept, cfg.lambda_T, cfg.lambda_H)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


# ---------------------------------------------------------------- config


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(lambda_T=-1)
    with pytest.raises(ValueError):
        FitConfig(admm_rho=0)
    with pytest.raises(ValueError):
        FitConfig(offsets=(0.0,)).offset(0, 2)
    assert FitConfig(offsets=[1, 2]).offset(1, 2) == 2.0


# ---------------------------------------------------------------- small exact cases


def test_unpenalized_one_block_is_least_squares():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((41, 1))
    kernel = finite_rank(1)
    nf = fit_node(0, X, kernel, "gaussian", FitConfig(center=False, tol_rel_obj=1e-12))
    psi, y = X[:-1, 0], X[1:, 0]
    assert nf.beta[0, 0] == pytest.approx(psi @ y / (psi @ psi), rel=1e-8)


def test_zero_data_objectives():
    X = np.abs(np.random.default_rng(1).standard_normal((20, 2))).round()
    kernel = finite_rank(1)
    zero = np.zeros((2, 1))
    blocks = build_blocks(X, kernel)
    assert objective_at(blocks, np.zeros(19), "gaussian", zero, 0.0, 1.0, 1.0) == 0.0
    assert objective_at(blocks, X[1:, 0], "poisson", zero, 0.0, 1.0, 1.0) == pytest.approx(0.5)


def test_lambda_h_term_is_additive():
    X = signal_data(4)
    kernel = finite_rank(2)
    nf = fit_node(0, X, kernel, "gaussian", FitConfig(lambda_T=0.02))
    blocks = build_blocks(X, kernel)
    base = objective_at(blocks, X[1:, 0], "gaussian", nf.beta, 0.0, 0.02, 0.0)
    extra = objective_at(blocks, X[1:, 0], "gaussian", nf.beta, 0.0, 0.02, 0.3)
    assert extra - base == pytest.approx(0.3 * np.linalg.norm(nf.beta, axis=1).sum(), rel=1e-12)


def test_zero_is_optimal_matches_convex_program():
    import cvxpy as cp

    rng = np.random.default_rng(5)
    for _ in range(40):
        M = 3
        R = np.triu(rng.standard_normal((M, M)))
        g = rng.standard_normal(M)
        lam_T, lam_H = rng.uniform(0, 2, 2)
        # distance from 0 to g + lam_T R^T B + lam_H B over the unit balls
        a, b = cp.Variable(M), cp.Variable(M)
        prob = cp.Problem(cp.Minimize(cp.norm(g + lam_T * R.T @ a + lam_H * b)),
                          [cp.norm(a) <= 1, cp.norm(b) <= 1])
        prob.solve(solver=cp.CLARABEL)
        if zero_is_optimal(g, R, lam_T, lam_H):
            assert prob.value < 1e-6
        else:
            assert prob.value > -1e-9


# ---------------------------------------------------------------- oracle agreement


@pytest.mark.parametrize("fam,lam_T,lam_H", [
    ("gaussian", 0.02, 0.0), ("gaussian", 0.02, 0.01),
    ("poisson", 0.03, 0.02), ("bernoulli", 0.01, 0.005)])
def test_matches_primal_dual_reference(fam, lam_T, lam_H):
    X = signal_data(3, fam)
    kernel = finite_rank(2)
    cfg = FitConfig(lambda_T=lam_T, lambda_H=lam_H, tol_rel_obj=1e-10)
    nf = fit_node(0, X, kernel, fam, cfg)
    blocks = build_blocks(X, kernel)
    y = X[1:, 0]
    lip = None
    if fam == "poisson":
        Psi = np.hstack([b.Psi for b in blocks])
        lip = math.exp((Psi @ nf.beta.ravel()).max() + 1) * np.linalg.eigvalsh(Psi.T @ Psi)[-1] / (2 * len(y))
    ref = primal_dual_reference(blocks, y, fam, lam_T, lam_H, n_iter=200_000, lipschitz=lip)
    ours = node_objective(X, nf, kernel, fam, cfg)
    assert rel(ours, objective_at(blocks, y, fam, ref, 0.0, lam_T, lam_H)) < 1e-6
    assert nf.support  # the instance must exercise the nonzero path


def test_matches_representer_parametrization():
    X = signal_data(7, T=30)
    kernel = finite_rank(2)
    cfg = FitConfig(lambda_T=0.03, lambda_H=0.01, center=False, tol_rel_obj=1e-12)
    nf = fit_node(0, X, kernel, "gaussian", cfg)
    ref = representer_reference(kernel, X, 0, "gaussian", 0.03, 0.01)
    assert rel(node_objective(X, nf, kernel, "gaussian", cfg), ref) < 1e-5


# ---------------------------------------------------------------- invariants


def test_null_model_for_large_penalty():
    X = signal_data(2)
    kernel = finite_rank(2)
    g = max_zero_gradient(X, kernel, "gaussian")
    fit = fit_network(X, kernel, "gaussian", FitConfig(lambda_T=10 * g, lambda_H=10 * g))
    assert not fit.beta.any() and fit.adjacency().sum() == 0


def test_node_fit_invariants():
    X = signal_data(8, "poisson")
    kernel = finite_rank(2)
    nf = fit_node(0, X, kernel, "poisson", FitConfig(lambda_T=0.02, lambda_H=0.01))
    blocks = build_blocks(X, kernel)
    assert nf.norms_H == pytest.approx(np.linalg.norm(nf.beta, axis=1), abs=1e-10)
    assert nf.norms_T == pytest.approx([b.norm_T(nf.beta[k]) for k, b in enumerate(blocks)], abs=1e-10)
    tr = nf.objective_trace
    assert np.all(np.isfinite(tr)) and tr[-1] <= tr[0]
    assert all(b - a <= 1e-8 for a, b in zip(tr, tr[1:]))


def test_norm_consistency_with_direct_evaluation():
    X = signal_data(9)
    kernel = eigen_decay(1.0, M=4)
    fit = fit_network(X, kernel, "gaussian", FitConfig(lambda_T=0.01))
    F = features(kernel, X[:-1]) - fit.centering_means
    for j in range(fit.d):
        for k in range(fit.d):
            f = F[:, k, :] @ fit.node_fits[j].beta[k]
            assert fit.norms_T[j, k] ** 2 == pytest.approx(np.mean(f ** 2), abs=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from(["gaussian", "poisson", "bernoulli"]))
def test_convexity_along_segments(seed, fam):
    X = signal_data(seed, fam, T=30)
    blocks = build_blocks(X, finite_rank(2))
    rng = np.random.default_rng(seed)
    b0, b1 = rng.normal(0, 0.5, (2, 3, 2))
    f = lambda b: objective_at(blocks, X[1:, 0], fam, b, 0.0, 0.1, 0.05)
    while True:
        # count features can push eta out of the domain; eta is linear in beta,
        # so valid endpoints keep the whole segment valid
        try:
            f0, f1 = f(b0), f(b1)
            break
        except DomainError:
            b0, b1 = b0 / 2, b1 / 2
    for t in np.linspace(0, 1, 7)[1:-1]:
        assert f((1 - t) * b0 + t * b1) <= (1 - t) * f0 + t * f1 + 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_larger_penalty_never_grows_support(seed):
    X = signal_data(seed, T=80, d=4)
    kernel = finite_rank(2)
    cfg = FitConfig(lambda_T=0.005, lambda_H=0.002)
    small = fit_network(X, kernel, "gaussian", cfg)
    big = fit_network(X, kernel, "gaussian", replace(cfg, lambda_T=0.05, lambda_H=0.02))
    for a, b in zip(small.node_fits, big.node_fits):
        assert set(b.support) <= set(a.support)


def test_network_is_order_independent():
    X = signal_data(10, d=4)
    kernel = finite_rank(2)
    cfg = FitConfig(lambda_T=0.01)
    full = fit_network(X, kernel, "gaussian", cfg)
    backwards = fit_network(X, kernel, "gaussian", cfg, nodes=[3, 2, 1, 0])
    for a, b in zip(full.node_fits, backwards.node_fits):
        assert np.array_equal(a.beta, b.beta)
    single = fit_node(2, X, kernel, "gaussian", cfg)
    assert np.array_equal(single.beta, full.node_fits[2].beta)


def test_one_node_network_equals_fit_node():
    X = signal_data(11)[:, :1]
    fit = fit_network(X, finite_rank(1), "gaussian", FitConfig(lambda_T=0.001))
    nf = fit_node(0, X, finite_rank(1), "gaussian", FitConfig(lambda_T=0.001))
    assert np.array_equal(fit.node_fits[0].beta, nf.beta)


def test_intercept_column_is_unpenalized():
    X = signal_data(12, "poisson")
    X[:, 0] += 3
    kernel = finite_rank(1)
    cfg = FitConfig(lambda_T=1e3, intercept_column=True)
    nf = fit_node(0, X, kernel, "poisson", cfg)
    assert not nf.beta.any()
    assert nf.intercept == pytest.approx(math.log(X[1:, 0].mean()), rel=1e-6)


# ---------------------------------------------------------------- prediction and io


def test_predict_examples():
    X = signal_data(13)
    kernel = finite_rank(2)
    for fam, mean0 in (("gaussian", 0.0), ("poisson", 1.0)):
        Xf = np.round(np.abs(X)) if fam == "poisson" else X
        fit = fit_network(Xf, kernel, fam, FitConfig(lambda_T=1e6))
        eta, mean = predict(fit, Xf[5])
        assert np.all(eta == 0) and np.all(mean == mean0)
    fit = fit_network(X, kernel, "gaussian", FitConfig(lambda_T=0.01))
    blocks = build_blocks(X, kernel)
    t = 17
    in_sample = sum(b.Psi[t] @ fit.node_fits[0].beta[k] for k, b in enumerate(blocks))
    assert predict(fit, X[t])[0][0] == pytest.approx(in_sample, abs=1e-10)
    with pytest.raises(DataError):
        predict(fit, [np.nan, 0, 0])


def test_predict_rejects_unsafe_eta():
    X = np.random.default_rng(14).poisson(2.0, (40, 3)).astype(float)
    fit = fit_network(X, finite_rank(1), "poisson", FitConfig(lambda_T=0.001))
    assert fit.beta.any()
    with pytest.raises(DomainError):
        predict(fit, np.full(3, 1e6))


def test_fit_roundtrip_through_dict():
    import json
    X = signal_data(15)
    fit = fit_network(X, finite_rank(2), "gaussian", FitConfig(lambda_T=0.01, offsets=(0, 0.5, 0)))
    back = NetworkFit.from_dict(json.loads(json.dumps(fit.to_dict())))
    assert np.array_equal(back.beta, fit.beta)
    assert np.array_equal(back.linear_predictor(X), fit.linear_predictor(X))
    assert back.config == fit.config


def test_objective_helper_uses_fit_penalties():
    X = signal_data(16)
    fit = fit_network(X, finite_rank(2), "gaussian", FitConfig(lambda_T=0.02))
    assert objective(fit, X, 0) == pytest.approx(fit.node_fits[0].objective_trace[-1], rel=1e-12)


def test_nonfinite_objective_is_reported(monkeypatch):
    X = signal_data(17)
    monkeypatch.setattr(glm, "negloglik", lambda *a, **k: math.nan)
    with pytest.raises(NumericalError, match="node"):
        fit_network(X, finite_rank(1), "gaussian", FitConfig(lambda_T=0.01))


# ---------------------------------------------------------------- pearson and cv


def test_pearson_examples():
    assert pearson_chi2([1, 2, 3], [1, 2, 3]) == 0.0
    assert pearson_chi2([1, 1], [0, 2]) == 1.0
    assert pearson_chi2([4], [2]) == 1.0
    with pytest.raises(DomainError):
        pearson_chi2([1, 0], [1, 1])


@given(st.lists(st.tuples(st.floats(0.01, 50), st.integers(0, 60)), min_size=1, max_size=40))
def test_pearson_matches_loop(pairs):
    means, obs = zip(*pairs)
    assert pearson_chi2(means, obs) == pytest.approx(brute_pearson(means, obs), rel=1e-12)


def test_cv_folds_shift_back():
    folds = cv_folds(101, 10)
    tests = [(f[1].start, f[1].stop) for f in folds]
    assert tests == [(90, 101), (80, 91), (70, 81)]
    assert all(f[0].stop - 1 == f[1].start for f in folds)
    with pytest.raises(DataError, match="needs at least"):
        cv_folds(30, 10)


def test_cv_grid_handling():
    X = signal_data(18, T=100)
    kernel = finite_rank(1)
    one = cross_validate(X, [(0.01, 0.0)], 10, kernel, "gaussian")
    assert one.best == (0.01, 0.0)
    grid = [(0.001, 0.0), (0.1, 0.0)]
    a = cross_validate(X, grid, 10, kernel, "gaussian")
    b = cross_validate(X, grid * 3, 10, kernel, "gaussian")
    assert a.best == b.best and len(b.table) == 2


def test_cv_prefers_large_penalty_on_null_model():
    kernel = finite_rank(1)
    wins = 0
    for seed in range(20):
        X = np.random.default_rng(seed).standard_normal((121, 3))
        res = cross_validate(X, [(1e-4, 0.0), (10.0, 0.0)], 20, kernel, "gaussian")
        wins += res.best[0] == 10.0
    assert wins >= 18
