import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_density
from effmaster import algebra as alg
from effmaster.errors import DimensionError, DimensionGuardError, InvariantViolation, StabilityError
from effmaster.hilbert import mode_space, spin_space, tensor
from effmaster.lindblad import (DensityState, MasterEquation, integrate, lindblad_rhs, liouvillian_matrix,
                                partial_trace, purity, state_diagnostics, trace_distance, unvec, vec)
from effmaster.models import coupled_oscillators, dicke, second_harmonic


def single_mode(cutoff=4):
    sp = tensor([mode_space(cutoff)], ["a"])
    return sp, alg.annihilation(sp, "a")


def test_zero_generator():
    me = MasterEquation(np.zeros((3, 3)))
    rho = np.diag([0.5, 0.3, 0.2])
    assert np.all(lindblad_rhs(me, rho) == 0)


def test_decay_of_one_photon():
    gamma = 0.3
    sp, a = single_mode()
    me = MasterEquation(np.zeros((4, 4)), ((gamma / 2, a),))
    rho = np.diag([0, 1, 0, 0]).astype(complex)
    d = lindblad_rhs(me, rho)
    # 2 a|1><1|a^dag - {n, |1><1|} = 2|0><0| - 2|1><1|
    np.testing.assert_allclose(d, gamma * np.diag([1, -1, 0, 0]))
    assert np.real(np.trace(d @ alg.number(sp, "a"))) == pytest.approx(-gamma)


def test_rhs_shape_mismatch():
    with pytest.raises(DimensionError):
        lindblad_rhs(MasterEquation(np.zeros((3, 3))), np.eye(2))


def test_master_equation_validation():
    with pytest.raises(ValueError):
        MasterEquation(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        MasterEquation(np.zeros((2, 2)), ((-1.0, np.eye(2)),))
    with pytest.raises(DimensionError):
        MasterEquation(np.zeros((2, 2)), ((1.0, np.eye(3)),))


def random_me(d, rng, n_ops=2, cross=True):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = X + X.conj().T
    ops = [rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(n_ops)]
    diss = tuple((float(rng.uniform(0.1, 1)), C) for C in ops)
    crs = ((0.3, ops[0], ops[1]),) if cross and n_ops > 1 else ()
    return MasterEquation(H, diss, crs)


@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_generator_properties(d, seed):
    rng = np.random.default_rng(seed)
    me = random_me(d, rng)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = X + X.conj().T
    out = lindblad_rhs(me, rho)
    scale = np.linalg.norm(rho) * max(1.0, np.linalg.norm(liouvillian_matrix(me), 2))
    assert abs(np.trace(out)) < 1e-12 * scale
    assert np.max(np.abs(out - out.conj().T)) < 1e-12 * scale


def test_liouvillian_matches_rhs(rng):
    me = random_me(5, rng)
    L = liouvillian_matrix(me)
    for _ in range(20):
        rho = random_density(5, rng)
        np.testing.assert_allclose(unvec(L @ vec(rho)), lindblad_rhs(me, rho), atol=1e-12)


def test_two_level_liouvillian_by_hand():
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    L = liouvillian_matrix(MasterEquation(np.zeros((2, 2)), ((1.0, sm),)))
    # column-major order rho00, rho10, rho01, rho11
    expect = np.array([[0, 0, 0, 2], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, -2]])
    np.testing.assert_allclose(L, expect)
    rho = np.diag([0, 1]).astype(complex)
    np.testing.assert_allclose(unvec(L @ vec(rho)), lindblad_rhs(MasterEquation(np.zeros((2, 2)), ((1.0, sm),)), rho))


def test_cross_term_identity(rng):
    d = 4
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Z = np.zeros((d, d))
    lhs = liouvillian_matrix(MasterEquation(Z, ((1.0, A + B),)))
    rhs = liouvillian_matrix(MasterEquation(Z, ((1.0, A), (1.0, B)), ((1.0, A, B),)))
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(liouvillian_matrix(MasterEquation(Z, (), ((0.5, A, A),))),
                               liouvillian_matrix(MasterEquation(Z, ((1.0, A),))), atol=1e-12)


def test_superoperator_guard():
    with pytest.raises(DimensionGuardError):
        liouvillian_matrix(MasterEquation(np.zeros((101, 101))))


@pytest.mark.parametrize("build", [
    lambda: coupled_oscillators(1.0, 2.0, 0.05, 0.1, 4, 4),
    lambda: second_harmonic(1.0, 3.0, 0.05, 0.1, 4, 3),
    lambda: dicke(1.0, 2.0, 0.05, 0.1, atoms=2, cutoff=4),
])
def test_liouvillian_spectrum_presets(build):
    model, _ = build()
    ev = np.linalg.eigvals(liouvillian_matrix(model.master_equation()))
    assert np.min(np.abs(ev)) < 1e-10
    assert np.max(ev.real) <= 1e-10


def test_trace_distance_examples():
    p0, p1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    assert trace_distance(p0, p0) == 0
    assert trace_distance(p0, p1) == pytest.approx(1)
    assert trace_distance(p0, np.eye(2) / 2) == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        trace_distance(p0, np.eye(3))


def test_partial_trace_examples(rng):
    sp = tensor([mode_space(3), spin_space(1)], ["a", "s"])
    ra, rs = random_density(3, rng), random_density(2, rng)
    st_ = DensityState(sp, np.kron(ra, rs))
    np.testing.assert_allclose(partial_trace(st_, "a").rho, ra, atol=1e-14)
    np.testing.assert_allclose(partial_trace(st_, 1).rho, rs, atol=1e-14)
    q = tensor([spin_space(1), spin_space(1)])
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    red = partial_trace(DensityState(q, np.outer(bell, bell)), 0)
    np.testing.assert_allclose(red.rho, np.eye(2) / 2, atol=1e-15)
    with pytest.raises(DimensionError):
        partial_trace(st_, "q")
    with pytest.raises(DimensionError):
        partial_trace(DensityState(None, ra), 0)


def test_diagonal_unitary_keeps_populations():
    H = np.diag([0.0, 1.3, -0.7, 2.1])
    rho = 0.5 * np.full((4, 4), 0.25, dtype=complex) + 0.5 * np.eye(4) / 4
    tr = integrate(MasterEquation(H), rho, 10.0, 0.01, samples=6)
    for s in tr.states:
        np.testing.assert_allclose(np.diag(s.rho).real, 0.25, atol=1e-10)


def test_decay_matches_exponential():
    gamma = 0.2
    sp, a = single_mode(6)
    me = MasterEquation(np.zeros((6, 6)), ((gamma / 2, a),))
    rho0 = DensityState(sp, np.diag([0, 1, 0, 0, 0, 0]).astype(complex))
    tr = integrate(me, rho0, 1 / gamma, 0.01, samples=3)
    n = np.real(np.trace(tr.final.rho @ alg.number(sp, "a")))
    assert n == pytest.approx(np.exp(-1), rel=1e-6)


def test_self_convergence_order(rng):
    me = random_me(4, rng)
    rho0 = random_density(4, rng)
    base = 0.05 / me.norm_bound()
    T = 40 * base
    r = [integrate(me, rho0, T, base / 2 ** k, samples=2).final.rho for k in range(3)]
    order = np.log2(np.linalg.norm(r[0] - r[1]) / np.linalg.norm(r[1] - r[2]))
    assert 3.7 <= order <= 4.3


def test_stability_guard():
    me = MasterEquation(np.diag([0.0, 10.0]))
    with pytest.raises(StabilityError) as exc:
        integrate(me, np.diag([1.0, 0]), 1.0, 0.1)
    assert exc.value.suggested_dt == pytest.approx(0.01)


def test_invariant_violation_has_timestamp():
    bad = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(InvariantViolation) as exc:
        integrate(MasterEquation(np.zeros((2, 2))), bad, 1.0, 0.1)
    assert exc.value.time == 0.0
    assert exc.value.residual == pytest.approx(0.2)


def test_support_guard_in_state_validation():
    sp, _ = single_mode(4)
    st_ = DensityState(sp, np.diag([0.5, 0, 0, 0.5]).astype(complex))
    with pytest.raises(InvariantViolation):
        st_.validate()
    assert state_diagnostics(st_.rho, sp)["support"] == pytest.approx(0.5)
    assert purity(st_.rho) == pytest.approx(0.5)
