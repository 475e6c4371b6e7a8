"""Master equations, fixed-step integration and state metrics.

The dissipator convention is L[C] rho = 2 C rho C^dag - {C^dag C, rho}, with
no hidden 1/2: presets carry their gamma/2 factors in the rate fields.
Cross terms between two jump operators A, B are

    K(A, B) rho = 2 A rho B^dag + 2 B rho A^dag - {A^dag B + B^dag A, rho},

so that L[A + B] = L[A] + L[B] + K(A, B) and K(A, A) = 2 L[A].
Vectorization is column-major: vec(A rho B) = (B^T kron A) vec(rho).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .algebra import anticommutator, commutator, dag, is_hermitian
from .errors import DimensionError, DimensionGuardError, InvariantViolation, StabilityError
from .hilbert import CompositeSpace, ModeSpace

log = logging.getLogger(__name__)

TRACE_TOL = 1e-9
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
SUPPORT_TOL = 1e-6
STABILITY_LIMIT = 0.1
SUPEROP_GUARD = 10_000


@dataclass(frozen=True)
class MasterEquation:
    H: np.ndarray
    dissipators: tuple[tuple[float, np.ndarray], ...] = ()
    cross_terms: tuple[tuple[float, np.ndarray, np.ndarray], ...] = ()

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        object.__setattr__(self, "H", H)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionError(f"Hamiltonian must be square, got {H.shape}")
        if not is_hermitian(H, 1e-12):
            raise ValueError("Hamiltonian is not Hermitian")
        diss = tuple((float(r), np.asarray(C, dtype=complex)) for r, C in self.dissipators)
        cross = tuple((float(r), np.asarray(A, dtype=complex), np.asarray(B, dtype=complex))
                      for r, A, B in self.cross_terms)
        for r, C in diss:
            if r < 0:
                raise ValueError(f"negative dissipator rate {r}")
            if C.shape != H.shape:
                raise DimensionError(f"jump operator shape {C.shape} != {H.shape}")
        for _, A, B in cross:
            if A.shape != H.shape or B.shape != H.shape:
                raise DimensionError("cross-term operator shape mismatch")
        object.__setattr__(self, "dissipators", diss)
        object.__setattr__(self, "cross_terms", cross)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def split_form(self):
        """(G, Ls, Rs, w) with rhs = -i(G rho - rho G^dag) + sum w L rho R^dag."""
        K = np.zeros_like(self.H)
        Ls, Rs, w = [], [], []
        for r, C in self.dissipators:
            K += r * (dag(C) @ C)
            Ls.append(C); Rs.append(C); w.append(2 * r)
        for r, A, B in self.cross_terms:
            K += r * (dag(A) @ B + dag(B) @ A)
            Ls += [A, B]; Rs += [B, A]; w += [2 * r, 2 * r]
        d = self.dim
        Ls = np.array(Ls, dtype=complex).reshape(-1, d, d)
        Rs = np.array(Rs, dtype=complex).reshape(-1, d, d)
        return self.H - 1j * K, Ls, Rs, np.array(w, dtype=complex)

    def norm_bound(self) -> float:
        """||H|| + sum of jump strengths, the scale used by the step-size guard."""
        total = np.linalg.norm(self.H, 2)
        for r, C in self.dissipators:
            total += r * np.linalg.norm(C, 2) ** 2
        for r, A, B in self.cross_terms:
            total += 2 * abs(r) * np.linalg.norm(A, 2) * np.linalg.norm(B, 2)
        return float(total)


def lindblad_superop_action(C: np.ndarray, rho: np.ndarray) -> np.ndarray:
    CdC = dag(C) @ C
    return 2 * C @ rho @ dag(C) - anticommutator(CdC, rho)


def cross_action(A: np.ndarray, B: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return 2 * A @ rho @ dag(B) + 2 * B @ rho @ dag(A) - anticommutator(dag(A) @ B + dag(B) @ A, rho)


def lindblad_rhs(me: MasterEquation, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != me.H.shape:
        raise DimensionError(f"state shape {rho.shape} != generator shape {me.H.shape}")
    out = -1j * commutator(me.H, rho)
    for r, C in me.dissipators:
        out += r * lindblad_superop_action(C, rho)
    for r, A, B in me.cross_terms:
        out += r * cross_action(A, B, rho)
    return out


# -- superoperators -----------------------------------------------------------

def spre(A: np.ndarray) -> np.ndarray:
    """rho -> A rho."""
    return np.kron(np.eye(A.shape[0]), A)


def spost(B: np.ndarray) -> np.ndarray:
    """rho -> rho B."""
    return np.kron(B.T, np.eye(B.shape[0]))


def sprepost(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """rho -> A rho B."""
    return np.kron(B.T, A)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    d = d or math.isqrt(v.shape[0])
    return np.asarray(v).reshape(d, d, order="F")


def lindblad_superop(C: np.ndarray) -> np.ndarray:
    CdC = dag(C) @ C
    return 2 * sprepost(C, dag(C)) - spre(CdC) - spost(CdC)


def cross_superop(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    X = dag(A) @ B + dag(B) @ A
    return 2 * sprepost(A, dag(B)) + 2 * sprepost(B, dag(A)) - spre(X) - spost(X)


def hamiltonian_superop(H: np.ndarray) -> np.ndarray:
    return -1j * (spre(H) - spost(H))


def liouvillian_matrix(me: MasterEquation, guard: int = SUPEROP_GUARD) -> np.ndarray:
    d = me.dim
    if d * d > guard:
        raise DimensionGuardError(f"superoperator of size {d * d} exceeds the guard {guard}")
    L = hamiltonian_superop(me.H)
    for r, C in me.dissipators:
        L += r * lindblad_superop(C)
    for r, A, B in me.cross_terms:
        L += r * cross_superop(A, B)
    return L


# -- states -------------------------------------------------------------------

@dataclass
class DensityState:
    space: CompositeSpace | None
    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.space is not None and self.rho.shape != (self.space.total_dim,) * 2:
            raise DimensionError(f"rho shape {self.rho.shape} does not match space dim {self.space.total_dim}")

    def diagnostics(self) -> dict[str, float]:
        return state_diagnostics(self.rho, self.space)

    def validate(self, support_tol: float = SUPPORT_TOL) -> dict[str, float]:
        return check_state(self.rho, self.space, support_tol=support_tol, time=self.time)


def top_level_population(rho: np.ndarray, space: CompositeSpace | None, levels: int = 2) -> float:
    """Largest population any single mode holds in its top ``levels`` Fock states."""
    if space is None:
        return 0.0
    pops = np.real(np.diag(rho))
    worst = 0.0
    for k, f in enumerate(space.factors):
        if isinstance(f, ModeSpace):
            worst = max(worst, float(pops[space.label_grid(k) >= f.cutoff - levels].sum()))
    return worst


def state_diagnostics(rho: np.ndarray, space: CompositeSpace | None = None) -> dict[str, float]:
    herm = 0.5 * (rho + dag(rho))
    eig = np.linalg.eigvalsh(herm)
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity": float(np.max(np.abs(rho - dag(rho)))) if rho.size else 0.0,
        "min_eig": float(eig[0]),
        "purity": float(np.real(np.trace(rho @ rho))),
        "support": top_level_population(rho, space),
    }


def check_state(rho, space=None, support_tol: float = SUPPORT_TOL, time: float | None = None) -> dict[str, float]:
    """Raise InvariantViolation if rho is not a valid density matrix on ``space``."""
    diag = state_diagnostics(rho, space)
    scale = max(np.linalg.norm(rho), 1.0)
    checks = [
        ("trace", diag["trace_error"], TRACE_TOL),
        ("hermiticity", diag["hermiticity"], HERMITIAN_TOL * scale),
        ("positivity", -diag["min_eig"], POSITIVITY_TOL),
        ("support", diag["support"], support_tol),
    ]
    for name, value, tol in checks:
        if value > tol:
            where = "" if time is None else f" at t={time:.6g}"
            raise InvariantViolation(f"{name} invariant violated{where}: {value:.3e} > {tol:.1e}",
                                     time=time, residual=value)
    return diag


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    if np.shape(rho1) != np.shape(rho2):
        raise DimensionError(f"shape mismatch {np.shape(rho1)} vs {np.shape(rho2)}")
    return float(0.5 * np.sum(np.linalg.svd(np.asarray(rho1) - np.asarray(rho2), compute_uv=False)))


def partial_trace(state: DensityState, keep: int | str | Sequence[int | str]) -> DensityState:
    """Trace out every factor not listed in ``keep``."""
    space = state.space
    if space is None:
        raise DimensionError("partial_trace needs a state with a composite space")
    keep_idx = sorted({space.factor_index(k) for k in ([keep] if isinstance(keep, (int, str)) else keep)})
    dims = space.dims
    n = len(dims)
    t = state.rho.reshape(dims + dims)
    row = list(range(n))
    col = [i + n if i in keep_idx else i for i in range(n)]
    out_axes = keep_idx + [i + n for i in keep_idx]
    red = np.einsum(t, row + col, out_axes)
    dk = int(np.prod([dims[i] for i in keep_idx]))
    sub = CompositeSpace(tuple(space.factors[i] for i in keep_idx), tuple(space.names[i] for i in keep_idx))
    return DensityState(sub, red.reshape(dk, dk), state.time)


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.trace(rho @ op))


# -- integration --------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: list[DensityState]
    dt: float
    diagnostics: list[dict[str, float]] = field(default_factory=list)

    @property
    def final(self) -> DensityState:
        return self.states[-1]

    def series(self, key: str) -> np.ndarray:
        return np.array([d[key] for d in self.diagnostics])


def suggest_dt(me: MasterEquation) -> float:
    return STABILITY_LIMIT / max(me.norm_bound(), 1e-300)


def integrate(me: MasterEquation, rho0: DensityState | np.ndarray, t_final: float, dt: float,
              samples: int = 2, support_tol: float = SUPPORT_TOL, use_numba: bool | None = None,
              check: bool = True) -> Trajectory:
    """Classical RK4 with a fixed step, sampled at ``samples`` evenly spaced times.

    The step is shrunk so that it divides each sample interval.  Invariants
    are checked at every sample; a violation aborts with the time stamp.
    """
    if not isinstance(rho0, DensityState):
        rho0 = DensityState(None, rho0)
    if dt <= 0 or t_final < 0:
        raise ValueError("need dt > 0 and t_final >= 0")
    if rho0.rho.shape != me.H.shape:
        raise DimensionError(f"state shape {rho0.rho.shape} != generator shape {me.H.shape}")
    scale = me.norm_bound()
    if dt * scale > STABILITY_LIMIT:
        sug = suggest_dt(me)
        raise StabilityError(
            f"dt={dt:g} too large: dt*(||H|| + sum gamma ||C||^2) = {dt * scale:.3g} > {STABILITY_LIMIT}; "
            f"use dt <= {sug:.6g}", suggested_dt=sug)
    samples = max(int(samples), 2)
    times = np.linspace(0.0, t_final, samples) + rho0.time
    interval = t_final / (samples - 1)
    nsteps = max(1, math.ceil(interval / dt - 1e-9)) if interval > 0 else 0
    h = interval / nsteps if nsteps else 0.0
    parts = _kernels.prepare(*me.split_form())

    rho = rho0.rho.copy()
    states, diags = [], []
    for i, t in enumerate(times):
        if i > 0 and nsteps:
            rho = _kernels.rk4_advance(rho, *parts, h, nsteps, use_numba=use_numba)
        st = DensityState(rho0.space, rho.copy(), float(t))
        d = (check_state(rho, rho0.space, support_tol, time=float(t)) if check
             else state_diagnostics(rho, rho0.space))
        states.append(st)
        diags.append(d)
    return Trajectory(times, states, h if nsteps else dt, diags)
