"""Dense operator arithmetic on composite spaces.

Operators are plain complex ``numpy`` arrays of shape (total_dim, total_dim).
"""
from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
import scipy.linalg

from .errors import DimensionError
from .hilbert import CompositeSpace


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def identity(space: CompositeSpace) -> np.ndarray:
    return np.eye(space.total_dim, dtype=complex)


def annihilation(space: CompositeSpace, factor: int | str) -> np.ndarray:
    mode = space.require_mode(factor)
    a = np.diag(np.sqrt(np.arange(1, mode.cutoff, dtype=float)), 1).astype(complex)
    return space.embed(a, factor)


def creation(space: CompositeSpace, factor: int | str) -> np.ndarray:
    return dag(annihilation(space, factor))


def number(space: CompositeSpace, factor: int | str) -> np.ndarray:
    mode = space.require_mode(factor)
    return space.embed(np.diag(np.arange(mode.cutoff, dtype=float)).astype(complex), factor)


def spin_ops(space: CompositeSpace, factor: int | str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (S+, S-, S3) for a spin factor in the m-ascending basis."""
    spin = space.require_spin(factor)
    j, m = spin.j, spin.labels
    sp = np.zeros((spin.dim, spin.dim), dtype=complex)
    # <m+1|S+|m> sits one row below the diagonal because m ascends with the index
    sp[np.arange(1, spin.dim), np.arange(spin.dim - 1)] = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    s3 = np.diag(m).astype(complex)
    return space.embed(sp, factor), space.embed(dag(sp), factor), space.embed(s3, factor)


def _check_pair(A: np.ndarray, B: np.ndarray) -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise DimensionError(f"operators must be square and of equal shape, got {A.shape} and {B.shape}")


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    _check_pair(A, B)
    return A @ B - B @ A


def anticommutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    _check_pair(A, B)
    return A @ B + B @ A


def is_hermitian(A: np.ndarray, rtol: float = 1e-12) -> bool:
    return bool(np.linalg.norm(A - dag(A)) <= rtol * max(np.linalg.norm(A), 1.0))


def is_skew_hermitian(A: np.ndarray, rtol: float = 1e-12) -> bool:
    return bool(np.linalg.norm(A + dag(A)) <= rtol * max(np.linalg.norm(A), 1.0))


def matrix_exp(A: np.ndarray) -> np.ndarray:
    """Matrix exponential.

    Skew-Hermitian and Hermitian inputs go through ``eigh`` so that unitary
    results stay unitary to roundoff; anything else falls back to
    scaling-and-squaring Pade (``scipy.linalg.expm``).
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix_exp needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exp: input has non-finite entries")
    if is_skew_hermitian(A):
        # A = -iH with H = iA Hermitian
        w, V = np.linalg.eigh(1j * A)
        return (V * np.exp(-1j * w)) @ dag(V)
    if is_hermitian(A):
        w, V = np.linalg.eigh(A)
        return (V * np.exp(w)) @ dag(V)
    return scipy.linalg.expm(A)


def adjoint_series(A: np.ndarray, B: np.ndarray, order: int) -> np.ndarray:
    """Truncated sum_{k<=order} ad_A^k(B) / k!, the expansion of e^A B e^-A."""
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    _check_pair(A, B)
    term = np.array(B, dtype=complex)
    total = term.copy()
    for k in range(1, order + 1):
        term = commutator(A, term) / k
        total = total + term
    return total


def nested_commutators(A: np.ndarray, B: np.ndarray, order: int) -> list[np.ndarray]:
    """[ad_A^k(B)/k! for k = 0..order], the Taylor coefficients of e^{eA} B e^{-eA} in e."""
    terms = [np.array(B, dtype=complex)]
    for k in range(1, order + 1):
        terms.append(commutator(A, terms[-1]) / k)
    return terms


# -- plain-text matrix format -------------------------------------------------

def format_complex(z: complex) -> str:
    return f"{z.real:.16e}{z.imag:+.16e}j"


def dump_operator(op: np.ndarray, dest: str | Path | TextIO, header: Iterable[str] = ()) -> None:
    """Write one matrix row per line, entries ``re+imj`` at 17 significant digits."""
    op = np.asarray(op, dtype=complex)
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(f"# shape {op.shape[0]} {op.shape[1]}\n")
    for row in op:
        buf.write(" ".join(format_complex(z) for z in row) + "\n")
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(buf.getvalue())
    else:
        dest.write(buf.getvalue())


def load_operator(src: str | Path | TextIO) -> np.ndarray:
    text = Path(src).read_text() if isinstance(src, (str, Path)) else src.read()
    rows = [
        [complex(tok) for tok in line.split()]
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    return np.array(rows, dtype=complex)

