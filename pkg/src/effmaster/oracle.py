"""Exact-conjugation references for the truncated formulas.

Nothing here uses the commutator expansion: Taylor coefficients in eps are
taken by a discrete Cauchy integral of the exactly conjugated operators over
a circle of complex eps, and rates are read off by least squares against
superoperator bases.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .algebra import dag
from .deformed_su2 import DeformedAlgebra
from .effective import conjugate_exact, effective_hamiltonian_order2, small_rotation
from .hilbert import CompositeSpace
from .lindblad import cross_superop, lindblad_superop, spost, spre, sprepost


def taylor_coefficients(fn, order: int, radius: float = 0.2, points: int = 32) -> list[np.ndarray]:
    """[c_0, ..., c_order] of an analytic matrix function fn(z) = sum c_k z^k.

    Trapezoidal rule on |z| = radius; aliasing error is c_{k+points} radius^points.
    """
    z = radius * np.exp(2j * np.pi * np.arange(points) / points)
    vals = [np.asarray(fn(zi)) for zi in z]
    out = []
    for k in range(order + 1):
        acc = sum(v * zi ** (-k) for v, zi in zip(vals, z))
        out.append(acc / points)
    return out


def rotated_operator(K: np.ndarray, C: np.ndarray, z: complex) -> np.ndarray:
    """e^{zK} C e^{-zK} for complex z, via the general matrix exponential."""
    E = scipy.linalg.expm(z * K)
    Ei = scipy.linalg.expm(-z * K)
    return E @ C @ Ei


def rotated_dissipator_superop(K: np.ndarray, C: np.ndarray, z: complex) -> np.ndarray:
    """L[U C U^dag] continued analytically off the real eps axis.

    For real eps, (U C U^dag)^dag = U C^dag U^dag, so the dagger is replaced
    by rotating C^dag with the same z.
    """
    Cz = rotated_operator(K, C, z)
    Cdz = rotated_operator(K, dag(C), z)
    CdC = Cdz @ Cz
    return 2 * sprepost(Cz, Cdz) - spre(CdC) - spost(CdC)


def dissipator_taylor(alg: DeformedAlgebra, C: np.ndarray, order: int = 2, rate: float = 1.0,
                      radius: float = 0.2, points: int = 32) -> list[np.ndarray]:
    """eps-power components of rate * L[U C U^dag] as superoperators."""
    K = alg.generator
    return [rate * c for c in taylor_coefficients(lambda z: rotated_dissipator_superop(K, C, z),
                                                  order, radius, points)]


def exact_dissipator_superop(U: np.ndarray, C: np.ndarray, rate: float = 1.0) -> np.ndarray:
    return rate * lindblad_superop(conjugate_exact(U, C))


def vec_indices(idx: np.ndarray, d: int) -> np.ndarray:
    """Column-major vec positions of rho_ij with i, j both in idx."""
    idx = np.asarray(idx)
    return (idx[:, None] + d * idx[None, :]).reshape(-1, order="F")


def fit_superop(S: np.ndarray, basis: dict[str, np.ndarray], idx: np.ndarray | None = None):
    """Least-squares coefficients of S in a superoperator basis.

    With ``idx`` only the block acting within span(idx) is used.  Returns
    (coefficients by label, relative residual of the fit).
    """
    d = int(round(np.sqrt(S.shape[0])))
    if idx is not None:
        p = vec_indices(idx, d)
        sel = np.ix_(p, p)
        S = S[sel]
        basis = {k: v[sel] for k, v in basis.items()}
    labels = list(basis)
    M = np.stack([basis[k].ravel() for k in labels], axis=1)
    y = S.ravel()
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    res = np.linalg.norm(M @ coef - y) / max(np.linalg.norm(y), 1e-300)
    return {k: complex(c) for k, c in zip(labels, coef)}, float(res)


def lindblad_basis(named: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"L[{k}]": lindblad_superop(v) for k, v in named.items()}


def cross_basis(pairs: dict[str, tuple[np.ndarray, np.ndarray]]) -> dict[str, np.ndarray]:
    return {k: cross_superop(A, B) for k, (A, B) in pairs.items()}


def reduce_superop(S: np.ndarray, space: CompositeSpace, factor: int | str) -> np.ndarray:
    """Superoperator rho_r -> Tr_v[S(|0><0|_v (x) rho_r)] on the remaining factors."""
    k = space.factor_index(factor)
    dims = space.dims
    n = len(dims)
    d = space.total_dim
    rest = [dims[i] for i in range(n) if i != k]
    dr = int(np.prod(rest))
    # embedding: |0><0| on factor k, identity elsewhere, as a d x dr isometry
    cols = []
    for r in range(dr):
        multi = list(np.unravel_index(r, rest))
        multi.insert(k, 0)
        cols.append(np.ravel_multi_index(tuple(multi), dims))
    V = np.zeros((d, dr))
    V[cols, np.arange(dr)] = 1.0
    embed = np.kron(V, V)  # vec(V r V^T) = (V kron V) vec(r), V real
    trace = np.zeros((dr * dr, d * d))
    for m in range(dims[k]):
        W = np.zeros((d, dr))
        rows = []
        for r in range(dr):
            multi = list(np.unravel_index(r, rest))
            multi.insert(k, m)
            rows.append(np.ravel_multi_index(tuple(multi), dims))
        W[rows, np.arange(dr)] = 1.0
        trace += np.kron(W, W).T
    return trace @ S @ embed


def hamiltonian_residual(model, alg: DeformedAlgebra, epsilon: float | None = None) -> float:
    """||U H_int U^dag - H_eff|| / ||H_int|| on the untainted blocks."""
    if epsilon is not None:
        g = epsilon * model.Delta
        Hint = model.Hint + (g - model.g) * (alg.Xp + alg.Xm)
    else:
        g, Hint = model.g, model.Hint
    U = small_rotation(alg, g / model.Delta)
    idx = alg.untainted_indices()
    sel = np.ix_(idx, idx)
    diff = conjugate_exact(U, Hint) - effective_hamiltonian_order2(model.Delta, g, alg)
    return float(np.linalg.norm(diff[sel]) / np.linalg.norm(Hint[sel]))


def spectral_residual(model, alg: DeformedAlgebra, epsilon: float | None = None) -> float:
    """Largest per-block gap between sorted eigenvalues of H_int and of H_eff, untainted blocks."""
    g = model.g if epsilon is None else epsilon * model.Delta
    Hint = model.Hint + (g - model.g) * (alg.Xp + alg.Xm)
    Heff = effective_hamiltonian_order2(model.Delta, g, alg)
    worst = 0.0
    for b in alg.blocks:
        if b.tainted:
            continue
        sel = np.ix_(b.indices, b.indices)
        e1 = np.linalg.eigvalsh(Hint[sel])
        e2 = np.sort(np.real(np.diag(Heff)[b.indices]))
        worst = max(worst, float(np.max(np.abs(e1 - e2))))
    return worst


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def blockwise_offset(A: np.ndarray, B: np.ndarray, alg: DeformedAlgebra) -> tuple[float, dict[float, float]]:
    """Compare A and B up to one constant per untainted N-block.

    Returns (max entrywise residual after removing the per-block constant,
    {n_value: constant}).
    """
    worst, shifts = 0.0, {}
    for b in alg.blocks:
        if b.tainted:
            continue
        sel = np.ix_(b.indices, b.indices)
        D = A[sel] - B[sel]
        c = complex(np.mean(np.diag(D)))
        shifts[b.n_value] = c.real
        worst = max(worst, float(np.max(np.abs(D - c * np.eye(len(b.indices))))))
    return worst, shifts


def polynomial_in(values: np.ndarray, x: np.ndarray, degree: int):
    """Least-squares polynomial coefficients (ascending) of values against x, and the residual."""
    V = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(V, values, rcond=None)
    return coef, float(np.linalg.norm(V @ coef - values))
