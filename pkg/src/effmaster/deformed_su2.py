"""Polynomial deformations of su(2): recognition and structure-polynomial fits.

A triple (X+, X-, X3) qualifies when [X3, X+-] = +-X+- and [X+, X-] is a
function of X3 alone on every eigenspace of the integral of motion N.  The
function is recovered numerically, block by block, as a polynomial in X3.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .algebra import commutator, dag
from .errors import AlgebraError, CommutationError, DimensionError, ExtractionError
from .hilbert import CompositeSpace

N_CLUSTER_TOL = 1e-8
DEFAULT_MAX_DEGREE = 3


@dataclass(frozen=True)
class Block:
    n_value: float
    indices: np.ndarray
    poly_coeffs: np.ndarray | None = None  # ascending degree
    fit_residual: float = float("nan")
    tainted: bool = False

    def evaluate(self, x3: np.ndarray) -> np.ndarray:
        return np.polynomial.polynomial.polyval(x3, self.poly_coeffs)


@dataclass(frozen=True)
class DeformedAlgebra:
    Xp: np.ndarray
    Xm: np.ndarray
    X3: np.ndarray
    N: np.ndarray
    space: CompositeSpace | None = None
    blocks: tuple[Block, ...] = ()
    tol: float = 1e-10
    fit_tol: float = float("nan")

    @property
    def generator(self) -> np.ndarray:
        """X+ - X-, the skew-Hermitian rotation generator."""
        return self.Xp - self.Xm

    @property
    def structure(self) -> np.ndarray:
        """The raw commutator [X+, X-]."""
        return commutator(self.Xp, self.Xm)

    @property
    def extracted(self) -> bool:
        return bool(self.blocks) and any(b.poly_coeffs is not None for b in self.blocks)

    def untainted_indices(self) -> np.ndarray:
        idx = [b.indices for b in self.blocks if not b.tainted]
        return np.sort(np.concatenate(idx)) if idx else np.array([], dtype=int)

    def closed_subspace(self) -> np.ndarray:
        """Basis indices of untainted blocks whose N lies below every tainted block.

        Ladder operators that lower N map this set into itself, so products
        of truncated operators restricted to it are exact.
        """
        tainted = [b.n_value for b in self.blocks if b.tainted]
        ceiling = min(tainted) if tainted else np.inf
        idx = [b.indices for b in self.blocks if not b.tainted and b.n_value < ceiling]
        return np.sort(np.concatenate(idx)) if idx else np.array([], dtype=int)

    def polynomial_operator(self) -> np.ndarray:
        """P(X3) as a diagonal operator, fitted blocks from their coefficients.

        Tainted blocks carry the raw commutator diagonal, which is what the
        truncated operators give there.
        """
        if not self.extracted:
            raise ExtractionError("structure polynomial has not been extracted")
        x3 = np.real(np.diag(self.X3))
        raw = np.real(np.diag(self.structure))
        out = np.zeros(self.Xp.shape[0])
        for b in self.blocks:
            if b.poly_coeffs is None:
                out[b.indices] = raw[b.indices]
            else:
                out[b.indices] = b.evaluate(x3[b.indices])
        return np.diag(out).astype(complex)


def _offdiag_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def _rel(num: float, den: float) -> float:
    return num / den if den > 0 else num


def verify_algebra(Xp, Xm, X3, N, tol: float = 1e-10) -> tuple[bool, dict[str, float]]:
    """Check the deformed-su(2) relations; return (passed, residuals).

    Residuals are relative: ladder relations against ||X+-||, the diagonal
    structure against ||[X+, X-]||, and the N commutators against ||X+||.
    """
    ops = [np.asarray(o, dtype=complex) for o in (Xp, Xm, X3, N)]
    shape = ops[0].shape
    if any(o.shape != shape for o in ops) or shape[0] != shape[1]:
        raise DimensionError(f"operator shapes differ: {[o.shape for o in ops]}")
    Xp, Xm, X3, N = ops
    np_, nm = np.linalg.norm(Xp), np.linalg.norm(Xm)
    comm = commutator(Xp, Xm)
    res = {
        "adjoint": _rel(np.linalg.norm(Xm - dag(Xp)), np_),
        "x3_raise": _rel(np.linalg.norm(commutator(X3, Xp) - Xp), np_),
        "x3_lower": _rel(np.linalg.norm(commutator(X3, Xm) + Xm), nm),
        "structure_offdiag": _rel(_offdiag_norm(comm), np.linalg.norm(comm)),
        "n_raise": _rel(np.linalg.norm(commutator(N, Xp)), np_),
        "n_lower": _rel(np.linalg.norm(commutator(N, Xm)), nm),
        "n_x3": _rel(np.linalg.norm(commutator(N, X3)), max(np.linalg.norm(X3), 1.0)),
        "x3_diagonal": _rel(_offdiag_norm(X3), max(np.linalg.norm(X3), 1.0)),
        "n_diagonal": _rel(_offdiag_norm(N), max(np.linalg.norm(N), 1.0)),
    }
    res = {k: float(v) for k, v in res.items()}
    return all(v <= tol for v in res.values()), res


def cluster_values(values: np.ndarray, tol: float = N_CLUSTER_TOL) -> list[tuple[float, np.ndarray]]:
    """Group indices of (nearly) equal values, ascending."""
    order = np.argsort(values, kind="stable")
    groups: list[list[int]] = []
    for i in order:
        if groups and abs(values[i] - values[groups[-1][0]]) <= tol:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    return [(float(values[g[0]]), np.sort(np.array(g))) for g in groups]


def block_decompose(N: np.ndarray, O: np.ndarray, tol: float = 1e-10) -> list[tuple[float, np.ndarray]]:
    """Restrict O to each eigenspace of N.

    Returns [(n_value, submatrix)] in ascending n_value.  For diagonal N the
    submatrices are taken in the computational basis, otherwise in the
    eigenbasis returned by ``eigh``.
    """
    N = np.asarray(N, dtype=complex)
    O = np.asarray(O, dtype=complex)
    if N.shape != O.shape:
        raise DimensionError(f"shape mismatch {N.shape} vs {O.shape}")
    cn = float(np.linalg.norm(commutator(N, O)))
    if cn > tol * max(np.linalg.norm(O), 1.0):
        raise CommutationError(f"operator does not commute with N (||[N, O]|| = {cn:.3e})", cn)
    if _offdiag_norm(N) == 0.0:
        return [(v, O[np.ix_(idx, idx)]) for v, idx in cluster_values(np.real(np.diag(N)))]
    w, V = np.linalg.eigh(N)
    out = []
    for v, idx in cluster_values(w):
        Vb = V[:, idx]
        out.append((v, dag(Vb) @ O @ Vb))
    return out


def block_reassemble(N: np.ndarray, blocks: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Inverse of ``block_decompose`` for diagonal N."""
    out = np.zeros(N.shape, dtype=complex)
    groups = cluster_values(np.real(np.diag(N)))
    for (v, idx), (bv, sub) in zip(groups, blocks):
        if abs(v - bv) > N_CLUSTER_TOL:
            raise DimensionError(f"block {bv} does not match eigenvalue {v}")
        out[np.ix_(idx, idx)] = sub
    return out


def make_algebra(Xp, Xm, X3, N, space: CompositeSpace | None = None, tol: float = 1e-10) -> DeformedAlgebra:
    """Verify a triple and wrap it; raises AlgebraError with the residuals on failure."""
    ok, res = verify_algebra(Xp, Xm, X3, N, tol)
    if not ok:
        bad = {k: v for k, v in res.items() if v > tol}
        raise AlgebraError(f"not a polynomial deformation of su(2): {bad}")
    return DeformedAlgebra(
        *(np.asarray(o, dtype=complex) for o in (Xp, Xm, X3, N)), space=space, tol=tol
    )


def extract_polynomial(alg: DeformedAlgebra, max_degree: int = DEFAULT_MAX_DEGREE,
                       taint_levels: int = 2) -> DeformedAlgebra:
    """Fit diag([X+, X-]) as a polynomial in diag(X3) on every N-block.

    The fitted degree on a block is capped by the number of distinct X3
    values it contains, so coefficients are unique.  Blocks holding any basis
    state in the top ``taint_levels`` Fock levels of a mode are marked
    tainted and skipped.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    ok, res = verify_algebra(alg.Xp, alg.Xm, alg.X3, alg.N, alg.tol)
    if not ok:
        raise AlgebraError(f"verify_algebra failed before extraction: {res}")
    comm = alg.structure
    fit_tol = 1e-9 * float(np.linalg.norm(comm))
    y_all = np.real(np.diag(comm))
    x_all = np.real(np.diag(alg.X3))
    taint = (alg.space.top_level_mask(taint_levels) if alg.space is not None
             else np.zeros(len(x_all), dtype=bool))
    blocks = []
    for n_value, idx in cluster_values(np.real(np.diag(alg.N))):
        if taint[idx].any():
            blocks.append(Block(n_value, idx, tainted=True))
            continue
        x, y = x_all[idx], y_all[idx]
        deg = min(max_degree, len(cluster_values(x)) - 1)
        V = np.vander(x, deg + 1, increasing=True)
        coeffs, *_ = np.linalg.lstsq(V, y, rcond=None)
        resid = float(np.linalg.norm(V @ coeffs - y))
        if resid > fit_tol:
            raise ExtractionError(
                f"block N={n_value:g}: residual {resid:.3e} exceeds fit_tol {fit_tol:.3e}",
                n_value=n_value, residual=resid,
            )
        padded = np.zeros(max_degree + 1)
        padded[: deg + 1] = coeffs
        blocks.append(Block(n_value, idx, padded, resid))
    return replace(alg, blocks=tuple(blocks), fit_tol=fit_tol)


def reconstruction_residual(alg: DeformedAlgebra) -> float:
    """||P(X3) - [X+, X-]|| over untainted blocks."""
    idx = alg.untainted_indices()
    diff = alg.polynomial_operator() - alg.structure
    return float(np.linalg.norm(diff[np.ix_(idx, idx)]))
