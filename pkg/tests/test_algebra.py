import io

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from effmaster import algebra as alg
from effmaster.errors import DimensionError
from effmaster.hilbert import mode_space, spin_space, tensor


def test_ladder_commutator_away_from_cutoff():
    sp = tensor([mode_space(6)], ["a"])
    a = alg.annihilation(sp, "a")
    c = alg.commutator(a, alg.creation(sp, "a"))
    np.testing.assert_allclose(np.diag(c)[:-1], 1.0)
    # the truncation shows up only on the last level
    assert np.diag(c)[-1] == pytest.approx(-5.0)
    np.testing.assert_allclose(alg.number(sp, "a"), alg.dag(a) @ a)


@pytest.mark.parametrize("atoms", [1, 2, 3, 4])
def test_spin_relations(atoms):
    sp = tensor([spin_space(atoms)], ["s"])
    Sp, Sm, S3 = alg.spin_ops(sp, "s")
    np.testing.assert_allclose(alg.commutator(Sp, Sm), 2 * S3, atol=1e-13)
    np.testing.assert_allclose(alg.commutator(S3, Sp), Sp, atol=1e-13)
    j = atoms / 2
    cas = S3 @ S3 + 0.5 * (Sp @ Sm + Sm @ Sp)
    np.testing.assert_allclose(cas, j * (j + 1) * np.eye(atoms + 1), atol=1e-13)


def test_shape_checks():
    with pytest.raises(DimensionError):
        alg.commutator(np.eye(2), np.eye(3))
    with pytest.raises(DimensionError):
        alg.matrix_exp(np.ones((2, 3)))
    with pytest.raises(ValueError):
        alg.matrix_exp(np.array([[np.nan, 0], [0, 1]]))


@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_matrix_exp_agrees_with_pade(d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    for A in (X - X.conj().T, X + X.conj().T, X):
        np.testing.assert_allclose(alg.matrix_exp(0.3 * A), scipy.linalg.expm(0.3 * A), atol=1e-10)


def test_skew_exp_is_unitary(rng):
    X = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    U = alg.matrix_exp(X - X.conj().T)
    assert np.max(np.abs(U.conj().T @ U - np.eye(8))) < 1e-13


def test_adjoint_series_converges(rng):
    X = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    A = 0.1 * (X - X.conj().T)
    B = rng.normal(size=(5, 5))
    exact = scipy.linalg.expm(A) @ B @ scipy.linalg.expm(-A)
    errs = [np.linalg.norm(alg.adjoint_series(A, B, k) - exact) for k in range(5)]
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
    terms = alg.nested_commutators(A, B, 4)
    np.testing.assert_allclose(sum(terms), alg.adjoint_series(A, B, 4))
    with pytest.raises(ValueError):
        alg.adjoint_series(A, B, -1)


def test_dump_load_roundtrip(rng, tmp_path):
    op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    buf = io.StringIO()
    alg.dump_operator(op, buf, ["hello"])
    text = buf.getvalue()
    assert text.startswith("# hello\n# shape 4 4\n")
    back = alg.load_operator(io.StringIO(text))
    np.testing.assert_array_equal(back, op)
    alg.dump_operator(op, tmp_path / "op.txt")
    np.testing.assert_array_equal(alg.load_operator(tmp_path / "op.txt"), op)
