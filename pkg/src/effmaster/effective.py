"""Small nonlinear rotation of Hamiltonians, dissipators and states.

With K = X+ - X- and U = exp(eps K), eps = g/Delta, the interaction
Hamiltonian Delta X3 + g(X+ + X-) goes to Delta X3 + (g^2/Delta) P(X3) plus
terms of order eps^3, and a jump operator C goes to

    U C U^dag = C + eps C1 + eps^2 C2 + ...,   C1 = [K, C],  C2 = [K, [K, C]]/2.

Expanding L[U C U^dag] order by order gives Lindblad pieces L[C_k] and cross
pieces K(C_k, C_l) (see ``lindblad``).  Every retained piece is either of
Lindblad form with a nonnegative rate or is tagged as a cross term; nothing is
symmetrized behind the caller's back.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import commutator, dag, is_hermitian, matrix_exp
from .deformed_su2 import DeformedAlgebra, cluster_values
from .errors import DimensionError, ExtractionError, NonUnitaryError
from .hilbert import CompositeSpace
from .lindblad import (DensityState, MasterEquation, check_state, cross_superop, lindblad_superop,
                       SUPPORT_TOL)

UNITARY_TOL = 1e-8
IDENTIFY_TOL = 1e-9
DEFAULT_KEEP_TOL = 0.1
LINDBLAD = "lindblad"
CROSS = "non_lindblad_cross_term"


@dataclass(frozen=True)
class DissipatorTerm:
    """rate * L[left] for Lindblad terms, rate * K(left, right) for cross terms.

    Labels name the jump operator for Lindblad terms ("a^2"), the pair for
    cross terms ("K(a,S-)"), and "-L(b)" for a net negative Lindblad piece.
    """

    rate: float
    left: np.ndarray
    right: np.ndarray
    order_tag: int
    label: str
    kind: str = LINDBLAD
    parts: tuple[str, str] = ("", "")  # labels of left and right operators

    @property
    def C(self) -> np.ndarray:
        return self.left

    def superop(self) -> np.ndarray:
        if self.kind == LINDBLAD:
            return self.rate * lindblad_superop(self.left)
        return self.rate * cross_superop(self.left, self.right)


@dataclass(frozen=True)
class EffectiveSystem:
    epsilon: float
    H_eff: np.ndarray
    dissipators: tuple[DissipatorTerm, ...]
    frame: str
    frame_generator: np.ndarray
    truncation_order: int
    rwa: bool = False
    space: CompositeSpace | None = None
    frame_part: np.ndarray | None = None
    constants: dict = field(default_factory=dict)
    vacuum_factor: str | None = None

    def master_equation(self) -> MasterEquation:
        lind = tuple((t.rate, t.left) for t in self.dissipators if t.kind == LINDBLAD)
        cross = tuple((t.rate, t.left, t.right) for t in self.dissipators if t.kind != LINDBLAD)
        return MasterEquation(self.H_eff, lind, cross)

    def rates(self) -> dict[str, float]:
        return {t.label: t.rate for t in self.dissipators}

    def term(self, label: str) -> DissipatorTerm:
        for t in self.dissipators:
            if t.label == label:
                return t
        raise KeyError(label)


# -- rotation and Hamiltonian ------------------------------------------------

def small_rotation(alg: DeformedAlgebra, epsilon: float) -> np.ndarray:
    """U = exp[eps (X+ - X-)]."""
    epsilon = float(epsilon)
    if not np.isfinite(epsilon):
        raise ValueError(f"epsilon must be finite, got {epsilon}")
    if abs(epsilon) >= 1:
        raise ValueError(f"|epsilon| = {abs(epsilon)} is outside the perturbative range (< 1)")
    if abs(epsilon) > 0.3:
        warnings.warn(f"epsilon = {epsilon} is large for a second-order expansion", stacklevel=2)
    return matrix_exp(epsilon * alg.generator)


def unitarity_residual(U: np.ndarray) -> float:
    return float(np.max(np.abs(dag(U) @ U - np.eye(U.shape[0])))) if U.size else 0.0


def conjugate_exact(U: np.ndarray, O: np.ndarray) -> np.ndarray:
    """U O U^dag; U must be unitary to 1e-8."""
    if U.shape != O.shape:
        raise DimensionError(f"shape mismatch {U.shape} vs {O.shape}")
    res = unitarity_residual(U)
    if res > UNITARY_TOL:
        raise NonUnitaryError(f"rotation is not unitary (residual {res:.3e})")
    return U @ O @ dag(U)


def effective_hamiltonian_order2(Delta: float, g: float, alg: DeformedAlgebra, order: int = 2) -> np.ndarray:
    """Delta X3 + (g^2/Delta) P(X3), assembled from the fitted block polynomials.

    ``order=1`` returns Delta X3 alone: the eps^1 terms cancel exactly.
    """
    if Delta == 0:
        raise ZeroDivisionError("effective Hamiltonian needs Delta != 0")
    if not alg.extracted:
        raise ExtractionError("extract the structure polynomial before building H_eff")
    H = Delta * alg.X3
    if order >= 2:
        H = H + (g * g / Delta) * alg.polynomial_operator()
    return H


def hamiltonian_constants(Delta: float, g: float, alg: DeformedAlgebra) -> dict:
    """Scalar parts of (g^2/Delta) P per block; 'scalar' is set when it is block independent."""
    chi = g * g / Delta
    per_block = {b.n_value: chi * float(b.poly_coeffs[0]) for b in alg.blocks if b.poly_coeffs is not None}
    vals = np.array(list(per_block.values()))
    same = vals.size and np.allclose(vals, vals[0], rtol=0, atol=1e-12 * max(1.0, abs(vals[0])))
    return {"scalar": float(vals[0]) if same else float("nan"), "per_block": per_block}


# -- dissipators ---------------------------------------------------------------

def expansion_operators(alg: DeformedAlgebra, C: np.ndarray, order: int) -> list[np.ndarray]:
    """[C, C1, C2, ...] with U C U^dag = sum_k eps^k C_k."""
    if C.shape != alg.Xp.shape:
        raise DimensionError(f"jump operator shape {C.shape} != algebra shape {alg.Xp.shape}")
    K = alg.generator
    ops = [np.asarray(C, dtype=complex)]
    for k in range(1, order + 1):
        ops.append(commutator(K, ops[-1]) / k)
    return ops


def transform_dissipator(U: np.ndarray | None, alg: DeformedAlgebra, C: np.ndarray, order: int | None,
                         epsilon: float | None = None) -> list[tuple[np.ndarray, int]]:
    """Tagged terms of U C U^dag.

    With an integer ``order`` in {0, 1, 2} the result is [(eps^k C_k, k)].
    ``order=None`` returns the exact conjugation [(U C U^dag, -1)].
    """
    if order is None:
        return [(conjugate_exact(U, C), -1)]
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    if epsilon is None:
        raise ValueError("epsilon is required for the truncated expansion")
    return [(epsilon ** k * Ck, k) for k, Ck in enumerate(expansion_operators(alg, C, order))]


@dataclass
class _Term:
    """coef * K(A, B), coef complex sitting on the B slot."""

    coef: complex
    A: np.ndarray
    B: np.ndarray
    la: str
    lb: str
    tag: int


def _identify(op: np.ndarray, named: dict[str, np.ndarray], idx: np.ndarray | None,
              tol: float = IDENTIFY_TOL) -> tuple[str, complex, np.ndarray] | None:
    """Find a named Y with op = c Y on the index window; return (label, c, Y)."""
    sub = op if idx is None else op[np.ix_(idx, idx)]
    n_op = np.linalg.norm(sub)
    if n_op == 0:
        return None
    for label, Y in named.items():
        ys = Y if idx is None else Y[np.ix_(idx, idx)]
        ny = np.vdot(ys, ys).real
        if ny == 0:
            continue
        c = np.vdot(ys, sub) / ny
        if abs(c) > 0 and np.linalg.norm(sub - c * ys) <= tol * n_op:
            return label, complex(c), Y
    return None


def _is_zero(op: np.ndarray, idx: np.ndarray | None, scale: float) -> bool:
    sub = op if idx is None else op[np.ix_(idx, idx)]
    return np.linalg.norm(sub) <= 1e-13 * max(scale, 1e-300)


def expand_terms(alg: DeformedAlgebra, dissipators, epsilon: float, order: int,
                 named: dict[str, np.ndarray] | None = None, idx: np.ndarray | None = None) -> list[_Term]:
    """Raw order-by-order pieces of sum_m rate_m L[U C_m U^dag], operators identified where possible."""
    named = named or {}
    out: list[_Term] = []
    for rate, C, label in dissipators:
        ops = expansion_operators(alg, C, order)
        scale = np.linalg.norm(C)
        ids = []
        for k, Ck in enumerate(ops):
            if _is_zero(Ck, idx, scale):
                ids.append(None)
                continue
            hit = _identify(Ck, named, idx) if k else None
            if k == 0:
                ids.append((label, 1.0 + 0j, Ck))
            elif hit is None:
                ids.append((f"ad{k}[{label}]", 1.0 + 0j, Ck))
            else:
                ids.append(hit)
        for k in range(order + 1):
            for l in range(k, order + 1 - k):
                if ids[k] is None or ids[l] is None:
                    continue
                w = rate * epsilon ** (k + l) * (0.5 if k == l else 1.0)
                if w == 0:
                    continue
                (la, ca, A), (lb, cb, B) = ids[k], ids[l]
                out.append(_Term(w * np.conj(ca) * cb, A, B, la, lb, k + l))
    return out


def merge_terms(terms: list[_Term], across_orders: bool = True) -> list[_Term]:
    """Sum pieces acting on the same labelled pair; K(Y, cX) is folded into K(X, conj(c) Y)."""
    groups: dict[tuple, _Term] = {}
    for t in terms:
        t = _Term(t.coef, t.A, t.B, t.la, t.lb, t.tag)
        if t.lb < t.la:
            t = _Term(np.conj(t.coef), t.B, t.A, t.lb, t.la, t.tag)
        key = (t.la, t.lb) if across_orders else (t.la, t.lb, t.tag)
        if key in groups:
            g = groups[key]
            g.coef += t.coef
            g.tag = min(g.tag, t.tag)
        else:
            groups[key] = t
    return list(groups.values())


def canonical_terms(terms: list[_Term], drop_tol: float = 1e-14) -> tuple[DissipatorTerm, ...]:
    """Turn merged pieces into DissipatorTerms with nonnegative rates."""
    scale = max((abs(t.coef) for t in terms), default=0.0)
    out = []
    for t in terms:
        if t.la == t.lb:
            rate = 2 * float(np.real(t.coef))
            if abs(rate) <= drop_tol * scale:
                continue
            if rate > 0:
                out.append(DissipatorTerm(rate, t.A, t.A, t.tag, t.la, LINDBLAD, (t.la, t.la)))
            else:
                # r L[X] with r < 0 is |r| K(X, -X/2)
                out.append(DissipatorTerm(-rate, t.A, -0.5 * t.A, t.tag, f"-L({t.la})", CROSS, (t.la, t.la)))
        else:
            mag = abs(t.coef)
            if mag <= drop_tol * scale:
                continue
            out.append(DissipatorTerm(float(mag), t.A, (t.coef / mag) * t.B, t.tag,
                                      f"K({t.la},{t.lb})", CROSS, (t.la, t.lb)))
    out.sort(key=lambda d: (d.order_tag, d.kind != LINDBLAD, d.label))
    return tuple(out)


# -- rotating-wave filter ---------------------------------------------------------

def _frame_energies(H0_frame: np.ndarray) -> np.ndarray:
    H0_frame = np.asarray(H0_frame)
    off = H0_frame - np.diag(np.diag(H0_frame))
    if np.linalg.norm(off) > 1e-12 * max(np.linalg.norm(H0_frame), 1.0):
        raise ValueError("rotating-frame generator must be diagonal")
    return np.real(np.diag(H0_frame))


def frequency_components(op: np.ndarray, energies: np.ndarray, tol: float) -> list[tuple[float, np.ndarray]]:
    """Split op into pieces A_w whose elements connect levels with E_i - E_j ~ w."""
    freq = energies[:, None] - energies[None, :]
    nz = np.abs(op) > 0
    if not nz.any():
        return []
    out = []
    for w, _ in cluster_values(freq[nz], tol):
        mask = nz & (np.abs(freq - w) <= tol)
        out.append((w, np.where(mask, op, 0)))
    return out


def _rwa_split(t: _Term, energies: np.ndarray, tol: float) -> list[_Term]:
    freq = energies[:, None] - energies[None, :]
    nz = (np.abs(t.A) > 0) | (np.abs(t.B) > 0)
    if not nz.any():
        return []
    pieces = []
    for w, _ in cluster_values(freq[nz], tol):
        mask = np.abs(freq - w) <= tol
        A, B = np.where(mask, t.A, 0), np.where(mask, t.B, 0)
        if np.abs(A).any() and np.abs(B).any():
            pieces.append((w, A, B))
    if len(pieces) == 1:
        # one resonant component: keep the name, drop whatever did not rotate with it
        _, A, B = pieces[0]
        return [_Term(t.coef, A, B, t.la, t.lb, t.tag)]
    out = []
    for w, A, B in pieces:
        suffix = f"@{w:+.6g}"
        la = t.la + suffix
        lb = la if t.la == t.lb else t.lb + suffix
        out.append(_Term(t.coef, A, B, la, lb, t.tag))
    return out


def rwa_filter(terms, H0_frame: np.ndarray, keep_tol: float = DEFAULT_KEEP_TOL, Delta: float = 1.0):
    """Keep the resonant part of each piece in the frame generated by H0_frame.

    A piece c K(A, B) rotates as sum_{w,w'} e^{-i(w - w')t} K(A_w, B_w'); only
    pairs with |w - w'| <= keep_tol |Delta| survive.  Accepts raw pieces or
    DissipatorTerms and returns the same kind.
    """
    E = _frame_energies(H0_frame)
    tol = keep_tol * abs(Delta)
    if terms and isinstance(terms[0], DissipatorTerm):
        raw = [_from_dissipator(d) for d in terms]
        kept = [p for t in raw for p in _rwa_split(t, E, tol)]
        return canonical_terms(merge_terms(kept, across_orders=False))
    return [p for t in terms for p in _rwa_split(t, E, tol)]


def _from_dissipator(d: DissipatorTerm) -> _Term:
    la, lb = d.parts if d.parts[0] else (d.label + "#L", d.label + "#R")
    if d.kind == LINDBLAD:
        return _Term(0.5 * d.rate, d.left, d.left, la, la, d.order_tag)
    if la == lb:
        # the -L(X) form, stored as |r| K(X, -X/2)
        return _Term(-0.5 * d.rate, d.left, d.left, la, la, d.order_tag)
    return _Term(d.rate, d.left, d.right, la, lb, d.order_tag)


def superop_frequencies(H0_frame: np.ndarray) -> np.ndarray:
    """Frame frequency of each column-major vec(rho) entry, E_i - E_j."""
    E = _frame_energies(H0_frame)
    return (E[:, None] - E[None, :]).reshape(-1, order="F")


def rwa_filter_superop(S: np.ndarray, H0_frame: np.ndarray, keep_tol: float = DEFAULT_KEEP_TOL,
                       Delta: float = 1.0) -> np.ndarray:
    """Zero every superoperator element that changes the frame frequency by more than keep_tol |Delta|."""
    f = superop_frequencies(H0_frame)
    if S.shape != (f.size, f.size):
        raise DimensionError(f"superoperator shape {S.shape} does not match frame of dim {f.size}")
    mask = np.abs(f[:, None] - f[None, :]) <= keep_tol * abs(Delta)
    return np.where(mask, S, 0)


# -- states -------------------------------------------------------------------

def transform_state(U: np.ndarray, state: DensityState, support_tol: float = SUPPORT_TOL) -> DensityState:
    """U rho U^dag; the input is validated first."""
    if not isinstance(state, DensityState):
        state = DensityState(None, state)
    check_state(state.rho, state.space, support_tol, time=state.time)
    return DensityState(state.space, conjugate_exact(U, state.rho), state.time)


# -- vacuum reduction ----------------------------------------------------------------

def vacuum_matrix_elements(op: np.ndarray, space: CompositeSpace, factor: int | str) -> list[np.ndarray]:
    """[<n|op|0>] on the vacuum factor, as operators on the remaining factors."""
    k = space.factor_index(factor)
    dims = space.dims
    t = np.asarray(op).reshape(dims + dims)
    t = np.moveaxis(t, [k, len(dims) + k], [0, len(dims)])
    rest = [d for i, d in enumerate(dims) if i != k]
    dr = int(np.prod(rest))
    return [t[(n,) + (slice(None),) * (len(rest)) + (0,)].reshape(dr, dr) for n in range(dims[k])]


def reduce_operator(op: np.ndarray, space: CompositeSpace, factor: int | str) -> np.ndarray:
    """<0|op|0> on the vacuum factor."""
    return vacuum_matrix_elements(op, space, factor)[0]


def reduce_terms(terms: list[_Term], space: CompositeSpace, factor: int | str,
                 named: dict[str, np.ndarray]) -> list[_Term]:
    """c K(A, B) -> sum_n c K(A_n0, B_n0) with A_n0 = <n|A|0> on the vacuum factor.

    This is the trace over the vacuum factor of the dissipator acting on
    |0><0| (x) rho; for L[A] it gives sum_n L[A_n0].
    """
    out = []
    for t in terms:
        As = vacuum_matrix_elements(t.A, space, factor)
        Bs = vacuum_matrix_elements(t.B, space, factor)
        for n, (A, B) in enumerate(zip(As, Bs)):
            if not np.abs(A).any() or not np.abs(B).any():
                continue
            ia, ib = _identify(A, named, None), _identify(B, named, None)
            la, ca, A2 = ia if ia else (f"<{n}|{t.la}|0>", 1.0, A)
            lb, cb, B2 = ib if ib else (f"<{n}|{t.lb}|0>", 1.0, B)
            out.append(_Term(t.coef * np.conj(ca) * cb, A2, B2, la, lb, t.tag))
    return out


def reduced_named_ops(named: dict[str, np.ndarray], space: CompositeSpace, factor) -> dict[str, np.ndarray]:
    out = {}
    for label, op in named.items():
        r = reduce_operator(op, space, factor)
        if np.abs(r).any() and _identify(r, out, None) is None:
            out[label] = r
    return out


# -- assembly ----------------------------------------------------------------------

def frame_generator(model, H_eff: np.ndarray, alg: DeformedAlgebra, frame: str) -> np.ndarray:
    if frame == "delta_x3":
        return model.Delta * alg.X3
    if frame == "heff":
        return np.diag(np.diag(H_eff))
    raise ValueError(f"unknown frame {frame!r}; use 'delta_x3' or 'heff'")


def derive_effective_system(model, alg: DeformedAlgebra, order: int = 2, apply_rwa: bool = False,
                            vacuum_reduction: bool | str | None = False, frame: str = "delta_x3",
                            keep_tol: float = DEFAULT_KEEP_TOL, merge: bool = True) -> EffectiveSystem:
    """Order-``order`` effective system of a preset.

    Steps: H_eff from the fitted structure polynomial; dissipators expanded,
    identified against the model's named operators on the truncation-safe
    subspace, merged; optional RWA in the chosen frame; optional reduction
    onto the vacuum of one factor.  After reduction the Delta X3 part of the
    reduced Hamiltonian is a pure frame rotation and is moved to
    ``frame_part``.
    """
    if order not in (1, 2):
        raise ValueError(f"truncation order must be 1 or 2, got {order}")
    eps = model.g / model.Delta
    H_eff = effective_hamiltonian_order2(model.Delta, model.g, alg, order)
    if not is_hermitian(H_eff, 1e-12):
        raise ValueError("effective Hamiltonian is not Hermitian")
    constants = hamiltonian_constants(model.Delta, model.g, alg) if order == 2 else {"scalar": 0.0, "per_block": {}}
    idx = alg.closed_subspace()
    idx = idx if idx.size else None
    raw = expand_terms(alg, model.dissipators, eps, order, model.named_ops, idx)
    if merge:
        raw = merge_terms(raw)
    Hf = frame_generator(model, H_eff, alg, frame)
    if apply_rwa:
        raw = rwa_filter(raw, Hf, keep_tol, model.Delta)
        if merge:
            raw = merge_terms(raw)
    space = model.space
    frame_part = None
    vac = None
    if vacuum_reduction:
        vac = model.vacuum_factor if vacuum_reduction is True else vacuum_reduction
        red_named = reduced_named_ops(model.named_ops, space, vac)
        raw = reduce_terms(raw, space, vac, red_named)
        if merge:
            raw = merge_terms(raw)
        frame_part = reduce_operator(model.Delta * alg.X3, space, vac)
        H_eff = reduce_operator(H_eff, space, vac) - frame_part
        Hf = reduce_operator(Hf, space, vac)
        space = space.without(vac)
        constants = {"scalar": float(np.real(H_eff[0, 0])), "per_block": {}}
    return EffectiveSystem(eps, H_eff, canonical_terms(raw), frame, Hf, order, bool(apply_rwa), space,
                           frame_part, constants, vac)


def exact_master_equation(model, alg: DeformedAlgebra) -> tuple[MasterEquation, np.ndarray]:
    """The full master equation in the rotated picture, U H U^dag and L[U C U^dag]; also returns U."""
    U = small_rotation(alg, model.epsilon)
    H = conjugate_exact(U, model.Hint)
    H = 0.5 * (H + dag(H))
    return MasterEquation(H, tuple((r, conjugate_exact(U, C)) for r, C, _ in model.dissipators)), U
