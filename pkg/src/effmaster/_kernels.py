"""Hot loop of the fixed-step integrator.

The master equation is handled in the split form

    drho/dt = -i (G rho - rho G^dag) + sum_k w_k L_k rho R_k^dag

with G = H - iK, K the Hermitian operator collected from all anticommutator
terms, so one RK4 stage costs two products plus two per jump pair.  The same Python source is
compiled with numba when it is importable; set EFFMASTER_DISABLE_NUMBA=1 to
force the plain numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("EFFMASTER_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def rhs_numpy(rho, G, Gd, Ls, Rds, w):
    out = -1j * (G @ rho - rho @ Gd)
    for k in range(Ls.shape[0]):
        out += w[k] * (Ls[k] @ rho @ Rds[k])
    return out


def rk4_advance_numpy(rho, G, Gd, Ls, Rds, w, h, nsteps):
    for _ in range(nsteps):
        k1 = rhs_numpy(rho, G, Gd, Ls, Rds, w)
        k2 = rhs_numpy(rho + 0.5 * h * k1, G, Gd, Ls, Rds, w)
        k3 = rhs_numpy(rho + 0.5 * h * k2, G, Gd, Ls, Rds, w)
        k4 = rhs_numpy(rho + h * k3, G, Gd, Ls, Rds, w)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


if NUMBA_AVAILABLE:
    rhs_numba = numba.njit(cache=True)(rhs_numpy)

    @numba.njit(cache=True)
    def rk4_advance_numba(rho, G, Gd, Ls, Rds, w, h, nsteps):
        for _ in range(nsteps):
            k1 = rhs_numba(rho, G, Gd, Ls, Rds, w)
            k2 = rhs_numba(rho + 0.5 * h * k1, G, Gd, Ls, Rds, w)
            k3 = rhs_numba(rho + 0.5 * h * k2, G, Gd, Ls, Rds, w)
            k4 = rhs_numba(rho + h * k3, G, Gd, Ls, Rds, w)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return rho
else:  # pragma: no cover
    rhs_numba = None
    rk4_advance_numba = None


def prepare(G, Ls, Rs, w):
    """Cast generator pieces to the contiguous complex layout both paths expect."""
    G = np.ascontiguousarray(G, dtype=np.complex128)
    d = G.shape[0]
    Ls = np.ascontiguousarray(np.reshape(Ls, (-1, d, d)), dtype=np.complex128)
    Rds = np.ascontiguousarray(np.conj(np.transpose(np.reshape(Rs, (-1, d, d)), (0, 2, 1))), dtype=np.complex128)
    return G, np.ascontiguousarray(G.conj().T), Ls, Rds, np.ascontiguousarray(w, dtype=np.complex128)


def rk4_advance(rho, G, Gd, Ls, Rds, w, h, nsteps, use_numba=None):
    if use_numba is None:
        use_numba = USE_NUMBA
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if use_numba:
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba path requested but numba is not installed")
        return rk4_advance_numba(rho, G, Gd, Ls, Rds, w, float(h), int(nsteps))
    return rk4_advance_numpy(rho, G, Gd, Ls, Rds, w, float(h), int(nsteps))
