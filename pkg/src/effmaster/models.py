"""Preset models: coupled oscillators, second-harmonic generation, Dicke.

Each constructor returns the model in its H0 + H_int splitting together with
the deformed-su(2) triple that recasts H_int as Delta X3 + g (X+ + X-).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import algebra as alg
from .algebra import commutator, dag
from .deformed_su2 import DEFAULT_MAX_DEGREE, DeformedAlgebra, extract_polynomial, make_algebra
from .errors import DegenerateDetuningError, DimensionError
from .hilbert import CompositeSpace, mode_space, spin_space, tensor
from .lindblad import MasterEquation

GUARD_THRESHOLD = 0.1


@dataclass(frozen=True)
class DispersiveGuard:
    """Dispersive-limit condition evaluated on a state, as a ratio against |Delta|."""

    formula: str
    ratio_fn: Callable[[np.ndarray], float]
    threshold: float = GUARD_THRESHOLD

    def ratio(self, rho: np.ndarray) -> float:
        return float(self.ratio_fn(rho))

    def check(self, rho: np.ndarray) -> float:
        r = self.ratio(rho)
        if r >= self.threshold:
            warnings.warn(f"dispersive guard {self.formula} = {r:.3g} is not << 1 "
                          f"(threshold {self.threshold})", stacklevel=2)
        return r


@dataclass(frozen=True)
class ModelSystem:
    name: str
    space: CompositeSpace
    H0: np.ndarray
    Hint: np.ndarray
    dissipators: tuple[tuple[float, np.ndarray, str], ...]
    N: np.ndarray
    Delta: float
    g: float
    guard: DispersiveGuard
    named_ops: dict[str, np.ndarray] = field(default_factory=dict)
    params: dict[str, float] = field(default_factory=dict)
    vacuum_factor: str = "b"

    @property
    def epsilon(self) -> float:
        return self.g / self.Delta

    @property
    def gamma(self) -> float:
        return float(self.params.get("gamma", 0.0))

    def master_equation(self) -> MasterEquation:
        return MasterEquation(self.Hint, tuple((r, C) for r, C, _ in self.dissipators))

    def conservation_residuals(self) -> dict[str, float]:
        scale = max(np.linalg.norm(self.Hint), 1e-300)
        return {
            "H0_Hint": float(np.linalg.norm(commutator(self.H0, self.Hint)) / scale),
            "N_Hint": float(np.linalg.norm(commutator(self.N, self.Hint)) / scale),
        }

    def eigenoperator_frequencies(self) -> list[tuple[str, float, float]]:
        """(label, omega, residual) with [H0, C] = omega C fitted by projection."""
        out = []
        for _, C, label in self.dissipators:
            comm = commutator(self.H0, C)
            omega = np.vdot(C, comm) / np.vdot(C, C)
            res = np.linalg.norm(comm - omega * C) / max(np.linalg.norm(comm), np.linalg.norm(C))
            out.append((label, float(np.real(omega)), float(res)))
        return out


def _mean(rho, op) -> float:
    return float(np.real(np.trace(rho @ op)))


def _require_detuning(delta: float, what: str) -> None:
    if delta == 0 or not np.isfinite(delta):
        raise DegenerateDetuningError(f"{what} = {delta}: the dispersive expansion needs a nonzero detuning")


def _two_mode_space(cutoff_a: int, cutoff_b: int) -> CompositeSpace:
    return tensor([mode_space(cutoff_a), mode_space(cutoff_b)], ["a", "b"])


def coupled_oscillators(omega_a: float, omega_b: float, g: float, gamma: float,
                        cutoff_a: int = 8, cutoff_b: int = 8,
                        max_degree: int = DEFAULT_MAX_DEGREE) -> tuple[ModelSystem, DeformedAlgebra]:
    """Two linearly coupled modes with mode b lossy at rate gamma."""
    delta = omega_b - omega_a
    _require_detuning(delta, "Delta = omega_b - omega_a")
    space = _two_mode_space(cutoff_a, cutoff_b)
    a, b = alg.annihilation(space, "a"), alg.annihilation(space, "b")
    na, nb = alg.number(space, "a"), alg.number(space, "b")
    N = na + nb
    X3 = (nb - na) / 2
    Xp = dag(b) @ a
    H0 = 0.5 * (omega_a + omega_b) * N
    Hint = delta * X3 + g * (dag(a) @ b + dag(b) @ a)
    guard = DispersiveGuard(
        "g*sqrt((n_a+1)(n_b+1))/|Delta|",
        lambda rho: abs(g) * np.sqrt((_mean(rho, na) + 1) * (_mean(rho, nb) + 1)) / abs(delta),
    )
    named = {"a": a, "b": b, "a^dag": dag(a), "b^dag": dag(b), "n_a": na, "n_b": nb}
    model = ModelSystem("coupled_oscillators", space, H0, Hint, ((gamma / 2, b, "b"),), N, delta, g, guard,
                        named, dict(omega_a=omega_a, omega_b=omega_b, g=g, gamma=gamma))
    algebra = extract_polynomial(make_algebra(Xp, dag(Xp), X3, N, space), max_degree)
    return model, algebra


def second_harmonic(omega_a: float, omega_b: float, g: float, gamma: float,
                    cutoff_a: int = 8, cutoff_b: int = 8,
                    max_degree: int = DEFAULT_MAX_DEGREE) -> tuple[ModelSystem, DeformedAlgebra]:
    """Fundamental a and harmonic b coupled by g(a^2 b^dag + h.c.), harmonic lossy."""
    if cutoff_a < 3:
        raise DimensionError("second harmonic generation needs cutoff_a >= 3")
    delta = omega_b - 2 * omega_a
    _require_detuning(delta, "Delta = omega_b - 2 omega_a")
    space = _two_mode_space(cutoff_a, cutoff_b)
    a, b = alg.annihilation(space, "a"), alg.annihilation(space, "b")
    na, nb = alg.number(space, "a"), alg.number(space, "b")
    a2 = a @ a
    N = na + 2 * nb
    X3 = (nb - na) / 3
    Xp = dag(b) @ a2
    H0 = (omega_b + omega_a) * N / 3
    Hint = delta * X3 + g * (a2 @ dag(b) + dag(a2) @ b)
    guard = DispersiveGuard(
        "g*(n_a+1)*sqrt(n_b+1)/|Delta|",
        lambda rho: abs(g) * (_mean(rho, na) + 1) * np.sqrt(_mean(rho, nb) + 1) / abs(delta),
    )
    named = {"a": a, "b": b, "a^2": a2, "n_a": na, "n_b": nb, "n_a^2": na @ na}
    model = ModelSystem("second_harmonic", space, H0, Hint, ((gamma / 2, b, "b"),), N, delta, g, guard,
                        named, dict(omega_a=omega_a, omega_b=omega_b, g=g, gamma=gamma))
    algebra = extract_polynomial(make_algebra(Xp, dag(Xp), X3, N, space), max_degree)
    return model, algebra


def dicke(omega_f: float, omega_0: float, g: float, gamma: float, atoms: int = 2, cutoff: int = 8,
          max_degree: int = DEFAULT_MAX_DEGREE) -> tuple[ModelSystem, DeformedAlgebra]:
    """A two-level atoms collectively coupled to a leaky cavity mode (RWA Dicke model)."""
    delta = omega_0 - omega_f
    _require_detuning(delta, "Delta = omega_0 - omega_f")
    space = tensor([mode_space(cutoff), spin_space(atoms)], ["a", "s"])
    a = alg.annihilation(space, "a")
    sp, sm, s3 = alg.spin_ops(space, "s")
    na = alg.number(space, "a")
    j = atoms / 2
    # shifted by j so that block labels start at zero
    N = na + s3 + j * np.eye(space.total_dim)
    Xp = a @ sp
    H0 = omega_f * (na + s3)
    Hint = delta * s3 + g * (a @ sp + dag(a) @ sm)
    guard = DispersiveGuard(
        "A*g*sqrt(n+1)/|Delta|",
        lambda rho: atoms * abs(g) * np.sqrt(_mean(rho, na) + 1) / abs(delta),
    )
    named = {"a": a, "a^dag": dag(a), "S-": sm, "S+": sp, "S3": s3, "n_a": na,
             "a S3": a @ s3, "a S-": a @ sm, "a^dag S-": dag(a) @ sm}
    model = ModelSystem("dicke", space, H0, Hint, ((gamma / 2, a, "a"),), N, delta, g, guard, named,
                        dict(omega_f=omega_f, omega_0=omega_0, g=g, gamma=gamma, atoms=atoms), "a")
    algebra = extract_polynomial(make_algebra(Xp, dag(Xp), s3, N, space), max_degree)
    return model, algebra


PRESETS = {
    "coupled_oscillators": coupled_oscillators,
    "second_harmonic": second_harmonic,
    "dicke": dicke,
}


def reference_effective_hamiltonian(model: ModelSystem) -> np.ndarray:
    """Reference closed-form order-2 effective Hamiltonian for each preset.

    Coupled oscillators: Delta b^dag b + (g^2/Delta)(b^dag b - a^dag a).
    Second harmonic:     (Delta/3)(n_b - n_a) + (g^2/Delta)(4 n_b n_a - n_a^2).
    Dicke:               Delta S3 + (g^2/Delta)(S3^2 - 2(n_a + 1) S3 - C2).
    """
    D, chi = model.Delta, model.g ** 2 / model.Delta
    ops = model.named_ops
    I = np.eye(model.space.total_dim)
    if model.name == "coupled_oscillators":
        na, nb = ops["n_a"], ops["n_b"]
        return D * nb + chi * (nb - na)
    if model.name == "second_harmonic":
        na, nb = ops["n_a"], ops["n_b"]
        return D / 3 * (nb - na) + chi * (4 * nb @ na - na @ na)
    if model.name == "dicke":
        s3, na = ops["S3"], ops["n_a"]
        c2 = model.space.factors[1].casimir
        return D * s3 + chi * (s3 @ s3 - 2 * (na + I) @ s3 - c2 * I)
    raise KeyError(model.name)
