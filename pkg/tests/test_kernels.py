import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spamnet.errors import DataError, DomainError
from spamnet.kernels import (KernelSpec, basis_values, choose_truncation, custom,
                             decay_tail_bound, design_block, eigen_decay,
                             empirical_kernel_matrix, finite_rank, mercer_eval)

finite = st.floats(-3, 3, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)


def specs():
    fr = st.builds(lambda r: finite_rank(r), st.integers(1, 4))
    dec = st.builds(lambda a, M: eigen_decay(a, M=M), st.floats(0.5, 3), st.integers(1, 12))
    return st.one_of(fr, dec)


def test_spec_validation():
    with pytest.raises(ValueError):
        custom([1.0, 2.0])
    with pytest.raises(ValueError):
        custom([1.0, 0.0])
    with pytest.raises(ValueError):
        KernelSpec("eigen_decay", (1.0,), "cosine", alpha=0.3)
    with pytest.raises(ValueError):
        finite_rank(2, basis="legendre")


def test_eigen_decay_values_are_exact_powers():
    spec = eigen_decay(1.5, M=6)
    assert spec.mu.tolist() == [ell ** -3.0 for ell in range(1, 7)]
    assert spec.trace == pytest.approx(sum(ell ** -3.0 for ell in range(1, 7)))


def test_mercer_examples():
    assert mercer_eval(finite_rank(1), 2.0, 3.0) == pytest.approx(6.0)
    assert mercer_eval(finite_rank(3), 0.0, 1.7) == 0.0
    assert mercer_eval(eigen_decay(1.0, M=2), 0.0, 0.0) == pytest.approx(1.25)
    with pytest.raises(DomainError):
        mercer_eval(finite_rank(1), math.nan, 1.0)


def test_poly_factorial_basis():
    vals = basis_values("poly_factorial", np.array([2.0]), 4)[0]
    assert vals == pytest.approx([2.0, 2.0, 8.0 / 6, 16.0 / 24])


def test_design_block_examples():
    blk = design_block(finite_rank(2), np.zeros(5), center=False)
    assert not blk.Psi.any() and not blk.R.any()
    blk = design_block(finite_rank(1), np.ones(4), center=False)
    assert blk.Psi[:, 0] == pytest.approx(np.ones(4))
    assert blk.R == pytest.approx(np.array([[1.0]]))
    with pytest.raises(DataError):
        design_block(finite_rank(1), [])


def test_design_block_is_read_only():
    blk = design_block(finite_rank(2), np.linspace(0, 1, 6))
    with pytest.raises(ValueError):
        blk.Psi[0, 0] = 1.0


def test_short_column_warns_and_flags():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        blk = design_block(eigen_decay(1.0, M=5), np.linspace(0, 1, 3))
    assert any("rank deficient" in str(w.message) for w in rec)
    assert blk.rank_deficient and blk.R.shape == (5, 5)


def test_kernel_matrix_examples():
    K = empirical_kernel_matrix(finite_rank(1), [1.0, 2.0])
    assert K == pytest.approx(np.array([[1.0, 2.0], [2.0, 4.0]]))
    assert not empirical_kernel_matrix(finite_rank(3), np.zeros(4)).any()


@given(specs(), unit, unit)
def test_mercer_symmetry(spec, x, y):
    assert mercer_eval(spec, x, y) == mercer_eval(spec, y, x)


@given(specs(), arrays(float, st.integers(1, 30), elements=unit))
def test_gram_psd_and_factorization(spec, col):
    K = empirical_kernel_matrix(spec, col)
    tr = max(np.trace(K), 1e-300)
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * tr
    Psi = design_block(spec, col, center=False).Psi if col.size >= spec.M else None
    if Psi is not None:
        diff = np.linalg.norm(K - Psi @ Psi.T)
        assert diff <= 1e-10 * max(np.linalg.norm(K), 1e-300)


@given(specs(), arrays(float, st.integers(12, 40), elements=finite), st.booleans(),
       st.integers(0, 2 ** 32 - 1))
def test_norm_agreement(spec, col, center, seed):
    blk = design_block(spec, col, center=center)
    beta = np.random.default_rng(seed).standard_normal(spec.M)
    direct = math.sqrt(beta @ blk.Psi.T @ blk.Psi @ beta / blk.T)
    assert blk.norm_T(beta) == pytest.approx(direct, rel=1e-10, abs=1e-12)
    assert np.all(np.diag(blk.R) >= 0)
    if center:
        assert np.all(np.abs(blk.Psi.sum(axis=0)) <= 1e-10 * blk.T * (1 + np.abs(blk.centering_means)))


@given(st.floats(0.55, 4), st.integers(1, 200))
def test_decay_tail_bound(alpha, M):
    exact = sum(i ** (-2 * alpha) for i in range(M + 1, M + 200_000))
    assert exact <= decay_tail_bound(alpha, M)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 3.5])
def test_truncation_chooser(alpha):
    tol = 1e-4
    M = choose_truncation(alpha, tail_tol=tol, cap=10_000)
    assert M < 10_000
    head = float(np.sum(np.arange(1, M + 1) ** (-2.0 * alpha)))
    assert decay_tail_bound(alpha, M) <= tol * head


def test_truncation_chooser_hits_cap():
    assert choose_truncation(0.75, tail_tol=1e-8, cap=50) == 50
