import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density
from effmaster import algebra as alg_ops
from effmaster.effective import (CROSS, LINDBLAD, conjugate_exact, derive_effective_system,
                                 effective_hamiltonian_order2, expand_terms, reduce_operator, rwa_filter,
                                 rwa_filter_superop, small_rotation, transform_dissipator, transform_state,
                                 vacuum_matrix_elements)
from effmaster.errors import DimensionError, ExtractionError, InvariantViolation, NonUnitaryError
from effmaster.deformed_su2 import make_algebra
from effmaster.hilbert import mode_space, tensor
from effmaster.lindblad import DensityState, lindblad_superop
from effmaster.models import coupled_oscillators, dicke, second_harmonic
from effmaster.oracle import loglog_slope, vec_indices


@pytest.fixture(scope="module")
def coupled():
    return coupled_oscillators(1.0, 2.0, 0.05, 0.01, 5, 5)


@pytest.fixture(scope="module")
def shg():
    return second_harmonic(1.0, 3.0, 0.05, 0.01, 6, 4)


@pytest.fixture(scope="module")
def dk():
    return dicke(1.0, 2.0, 0.05, 0.01, atoms=2, cutoff=6)


def closed_norm(op, alg):
    idx = alg.closed_subspace()
    return np.linalg.norm(op[np.ix_(idx, idx)])


# -- rotation --------------------------------------------------------------------

def test_zero_rotation_is_identity(coupled):
    _, alg = coupled
    np.testing.assert_array_equal(small_rotation(alg, 0.0), np.eye(25))


def test_rotation_guards(coupled):
    _, alg = coupled
    for bad in (np.nan, np.inf, 1.0, -1.5):
        with pytest.raises(ValueError):
            small_rotation(alg, bad)
    with pytest.warns(UserWarning):
        small_rotation(alg, 0.5)


def test_single_excitation_block_is_plane_rotation(coupled):
    _, alg = coupled
    eps = 0.13
    U = small_rotation(alg, eps)
    # |1_a 0_b> at index 5, |0_a 1_b> at index 1; X+ = b^dag a takes the first to the second
    idx = [5, 1]
    c, s = np.cos(eps), np.sin(eps)
    np.testing.assert_allclose(U[np.ix_(idx, idx)], [[c, -s], [s, c]], atol=1e-14)


def test_rotation_unitary(dk):
    _, alg = dk
    U = small_rotation(alg, 0.2)
    assert np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))) < 1e-10


def test_rotation_second_order_remainder(shg):
    _, alg = shg
    K = alg.generator
    I = np.eye(K.shape[0])
    eps = np.array([0.01, 0.02, 0.04, 0.08])
    r = [np.linalg.norm(small_rotation(alg, e) - (I + e * K + e * e * K @ K / 2)) for e in eps]
    assert loglog_slope(eps, r) >= 2.9


# -- conjugation -----------------------------------------------------------------

def test_conjugate_identity(rng):
    O = rng.normal(size=(4, 4))
    np.testing.assert_array_equal(conjugate_exact(np.eye(4), O), O)


def test_conjugate_preserves_spectrum_and_trace(dk, rng):
    model, alg = dk
    U = small_rotation(alg, 0.1)
    O = model.Hint
    np.testing.assert_allclose(np.linalg.eigvalsh(conjugate_exact(U, O)), np.linalg.eigvalsh(O), atol=1e-10)
    X = rng.normal(size=O.shape) + 1j * rng.normal(size=O.shape)
    assert abs(np.trace(conjugate_exact(U, X)) - np.trace(X)) < 1e-12 * np.linalg.norm(X)


def test_conjugate_rejects_non_unitary():
    with pytest.raises(NonUnitaryError):
        conjugate_exact(np.diag([1.0, 1.0 + 1e-6]), np.eye(2))
    with pytest.raises(DimensionError):
        conjugate_exact(np.eye(2), np.eye(3))


# -- effective Hamiltonian -------------------------------------------------------

@pytest.mark.parametrize("name", ["coupled", "shg", "dk"])
def test_heff_hermitian_and_diagonal(name, request):
    model, alg = request.getfixturevalue(name)
    H = effective_hamiltonian_order2(model.Delta, model.g, alg)
    n = np.linalg.norm(H)
    assert np.linalg.norm(H - H.conj().T) <= 1e-12 * n
    assert np.linalg.norm(H - np.diag(np.diag(H))) <= 1e-10 * n
    np.testing.assert_allclose(effective_hamiltonian_order2(model.Delta, model.g, alg, order=1),
                               model.Delta * alg.X3)


def test_heff_errors(coupled):
    model, alg = coupled
    with pytest.raises(ZeroDivisionError):
        effective_hamiltonian_order2(0.0, 0.1, alg)
    raw = make_algebra(alg.Xp, alg.Xm, alg.X3, alg.N, alg.space)
    with pytest.raises(ExtractionError):
        effective_hamiltonian_order2(1.0, 0.1, raw)


# -- dissipator expansion ---------------------------------------------------------

def test_first_order_jump_coupled(coupled):
    model, alg = coupled
    b, a = model.named_ops["b"], model.named_ops["a"]
    terms = transform_dissipator(None, alg, b, 1, epsilon=0.05)
    assert [t for _, t in terms] == [0, 1]
    assert closed_norm(terms[1][0] + 0.05 * a, alg) < 1e-14


def test_first_order_jump_shg(shg):
    model, alg = shg
    terms = transform_dissipator(None, alg, model.named_ops["b"], 2, epsilon=0.05)
    assert closed_norm(terms[1][0] + 0.05 * model.named_ops["a^2"], alg) < 1e-14


def test_truncated_expansion_tracks_exact(dk):
    model, alg = dk
    C = model.named_ops["a"]
    eps = np.array([0.01, 0.02, 0.04])
    err = []
    for e in eps:
        exact = transform_dissipator(small_rotation(alg, e), alg, C, None)[0][0]
        approx = sum(op for op, _ in transform_dissipator(None, alg, C, 2, epsilon=e))
        err.append(closed_norm(exact - approx, alg))
    assert loglog_slope(eps, err) >= 2.9


def test_transform_dissipator_order_check(coupled):
    model, alg = coupled
    with pytest.raises(ValueError):
        transform_dissipator(None, alg, model.named_ops["b"], 3, epsilon=0.1)


# -- assembled effective systems --------------------------------------------------

def test_coupled_full_space_rates(coupled):
    model, alg = coupled
    eps, gam = model.epsilon, model.gamma
    sysm = derive_effective_system(model, alg)
    rates = sysm.rates()
    assert rates["b"] == pytest.approx(gam / 2 * (1 - eps ** 2), rel=1e-12)
    assert rates["a"] == pytest.approx(gam / 2 * eps ** 2, rel=1e-12)
    assert sysm.term("K(a,b)").kind == CROSS
    assert sysm.term("K(a,b)").order_tag == 1
    assert all(t.rate >= 0 for t in sysm.dissipators)


def test_coupled_rwa_removes_cross_term(coupled):
    model, alg = coupled
    sysm = derive_effective_system(model, alg, apply_rwa=True)
    assert sorted(sysm.rates()) == ["a", "b"]


def test_coupled_vacuum_reduction(coupled):
    model, alg = coupled
    sysm = derive_effective_system(model, alg, vacuum_reduction=True)
    chi = model.g ** 2 / model.Delta
    assert list(sysm.rates()) == ["a"]
    assert sysm.rates()["a"] == pytest.approx(model.gamma / 2 * model.epsilon ** 2, rel=1e-12)
    na = np.diag(np.arange(5.0))
    # compare below the top two Fock levels of a
    np.testing.assert_allclose(sysm.H_eff[:3, :3], -chi * na[:3, :3], atol=1e-14)
    # <0_b|Delta X3|0_b> = -(Delta/2) n_a is a pure frame rotation
    np.testing.assert_allclose(sysm.frame_part, -model.Delta / 2 * na, atol=1e-15)


def test_shg_vacuum_reduction(shg):
    model, alg = shg
    sysm = derive_effective_system(model, alg, vacuum_reduction=True)
    chi = model.g ** 2 / model.Delta
    assert list(sysm.rates()) == ["a^2"]
    assert sysm.rates()["a^2"] == pytest.approx(model.gamma / 2 * model.epsilon ** 2, rel=1e-10)
    n = np.arange(6.0)
    # -chi n^2 plus a term linear in n
    np.testing.assert_allclose(np.diag(sysm.H_eff)[:4].real, (chi * (n - n ** 2))[:4], atol=1e-14)
    np.testing.assert_allclose(np.diag(sysm.frame_part)[:4].real, -model.Delta / 3 * n[:4], atol=1e-14)


def test_dicke_vacuum_reduction(dk):
    model, alg = dk
    sysm = derive_effective_system(model, alg, vacuum_reduction=True)
    assert list(sysm.rates()) == ["S-"]
    assert sysm.rates()["S-"] == pytest.approx(model.gamma / 2 * model.epsilon ** 2, rel=1e-10)
    assert sysm.space.dims == (3,)


def test_dicke_rwa_drops_first_order(dk):
    model, alg = dk
    full = derive_effective_system(model, alg, merge=False)
    assert any(t.order_tag == 1 for t in full.dissipators)
    filt = derive_effective_system(model, alg, apply_rwa=True, merge=False)
    assert not any(t.order_tag == 1 for t in filt.dissipators)
    s_minus = [t for t in filt.dissipators if t.label == "S-"]
    assert len(s_minus) == 1 and s_minus[0].order_tag == 2 and s_minus[0].kind == LINDBLAD


def test_zero_coupling_leaves_system_unchanged():
    model, alg = coupled_oscillators(1.0, 2.0, 0.0, 0.02, 4, 4)
    np.testing.assert_array_equal(small_rotation(alg, model.epsilon), np.eye(16))
    sysm = derive_effective_system(model, alg)
    np.testing.assert_allclose(sysm.H_eff, model.Hint)
    assert sysm.rates() == {"b": pytest.approx(0.01)}


def test_frame_choice(dk):
    model, alg = dk
    s1 = derive_effective_system(model, alg, frame="heff")
    np.testing.assert_allclose(s1.frame_generator, np.diag(np.diag(s1.H_eff)))
    with pytest.raises(ValueError):
        derive_effective_system(model, alg, frame="lab")
    with pytest.raises(ValueError):
        derive_effective_system(model, alg, order=3)


# -- rotating-wave filter -------------------------------------------------------------

def test_rwa_filter_idempotent(dk):
    model, alg = dk
    sysm = derive_effective_system(model, alg)
    Hf = model.Delta * alg.X3
    once = rwa_filter(sysm.dissipators, Hf, 0.1, model.Delta)
    twice = rwa_filter(once, Hf, 0.1, model.Delta)
    assert [t.label for t in once] == [t.label for t in twice]
    for x, y in zip(once, twice):
        np.testing.assert_allclose(x.superop(), y.superop(), atol=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_superop_filter_idempotent(seed):
    rng = np.random.default_rng(seed)
    E = np.diag(rng.integers(-2, 3, size=3).astype(float))
    S = rng.normal(size=(9, 9))
    once = rwa_filter_superop(S, E, 0.1)
    np.testing.assert_array_equal(rwa_filter_superop(once, E, 0.1), once)


def test_rwa_requires_diagonal_frame(coupled):
    model, alg = coupled
    sysm = derive_effective_system(model, alg)
    with pytest.raises(ValueError):
        rwa_filter(sysm.dissipators, model.Hint, 0.1, 1.0)


def test_term_and_superop_filters_agree(dk):
    model, alg = dk
    Hf = model.Delta * alg.X3
    sysm = derive_effective_system(model, alg, merge=False)
    d = alg.X3.shape[0]
    p = vec_indices(alg.closed_subspace(), d)
    total = sum(t.superop() for t in sysm.dissipators)
    kept = sum(t.superop() for t in rwa_filter(sysm.dissipators, Hf, 0.1, model.Delta))
    diff = rwa_filter_superop(total, Hf, 0.1, model.Delta) - kept
    assert np.linalg.norm(diff[np.ix_(p, p)]) < 1e-12


def test_resonant_lindblad_kept(coupled):
    model, alg = coupled
    Hf = model.Delta * alg.X3
    S = lindblad_superop(model.named_ops["b"])
    np.testing.assert_array_equal(rwa_filter_superop(S, Hf, 0.1, model.Delta), S)


# -- states ----------------------------------------------------------------------

def test_transform_state_properties(dk, rng):
    model, alg = dk
    U = small_rotation(alg, 0.1)
    d = U.shape[0]
    low = np.where(~model.space.top_level_mask())[0]
    psi = np.zeros(d, dtype=complex)
    psi[low] = rng.normal(size=low.size) + 1j * rng.normal(size=low.size)
    psi /= np.linalg.norm(psi)
    out = transform_state(U, DensityState(model.space, np.outer(psi, psi.conj())))
    assert abs(np.trace(out.rho) - 1) < 1e-14
    assert np.min(np.linalg.eigvalsh(out.rho)) >= -1e-12
    assert abs(np.real(np.trace(out.rho @ out.rho)) - 1) < 1e-12
    np.testing.assert_array_equal(transform_state(np.eye(d), DensityState(None, out.rho)).rho, out.rho)


def test_transform_state_rejects_invalid(coupled):
    _, alg = coupled
    with pytest.raises(InvariantViolation):
        transform_state(np.eye(25), DensityState(None, np.diag([2.0] + [0.0] * 23 + [-1.0])))


def test_dicke_state_picks_up_first_order_coherence():
    model, alg = dicke(1.0, 2.0, 0.05, 0.0, atoms=2, cutoff=6)
    d = model.space.total_dim
    # field vacuum, both atoms excited: index of |0>_a |m=+1>
    i0 = model.space.flat_index((0, 2))
    i1 = model.space.flat_index((1, 1))
    rho = np.zeros((d, d), dtype=complex)
    rho[i0, i0] = 1
    coh = []
    for e in (0.01, 0.02):
        out = transform_state(small_rotation(alg, e), DensityState(model.space, rho))
        coh.append(abs(out.rho[i1, i0]))
    # <1, m=0| eps(a S+ - a^dag S-) |0, m=+1> = -eps sqrt(2)
    assert coh[0] == pytest.approx(0.01 * np.sqrt(2), rel=1e-3)
    assert coh[1] / coh[0] == pytest.approx(2, rel=1e-3)


# -- vacuum matrix elements ----------------------------------------------------------

def test_vacuum_matrix_elements_product(rng):
    sp = tensor([mode_space(3), mode_space(2)], ["a", "b"])
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(2, 2))
    op = np.kron(A, B)
    els = vacuum_matrix_elements(op, sp, "b")
    for n in range(2):
        np.testing.assert_allclose(els[n], B[n, 0] * A)
    np.testing.assert_allclose(reduce_operator(op, sp, "a"), A[0, 0] * B)


def test_dicke_rwa_same_in_both_frames(dk):
    model, alg = dk
    r1 = derive_effective_system(model, alg, apply_rwa=True, frame="delta_x3").rates()
    r2 = derive_effective_system(model, alg, apply_rwa=True, frame="heff").rates()
    assert r1.keys() == r2.keys()
    for k in r1:
        assert r1[k] == pytest.approx(r2[k], rel=1e-12)
