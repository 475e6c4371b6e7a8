"""Truncated mode spaces, finite spin spaces and their tensor products.

Basis ordering is row-major with the first factor varying slowest, which is
what ``numpy.kron`` produces when operators are embedded left to right.
Spin factors are ordered by ascending S3 eigenvalue, m = -j, ..., +j.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

from .errors import DimensionError, FactorTypeError


@dataclass(frozen=True)
class ModeSpace:
    """Bosonic mode truncated to Fock states |0>, ..., |cutoff - 1>."""

    cutoff: int

    @property
    def dim(self) -> int:
        return self.cutoff

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.cutoff)


@dataclass(frozen=True)
class SpinSpace:
    """Collective spin j = atoms/2 of ``atoms`` two-level systems."""

    atoms: int

    @property
    def dim(self) -> int:
        return self.atoms + 1

    @property
    def j(self) -> float:
        return self.atoms / 2

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.dim) - self.j

    @property
    def casimir(self) -> float:
        return self.j * (self.j + 1)


Factor = Union[ModeSpace, SpinSpace]


def mode_space(cutoff: int) -> ModeSpace:
    if int(cutoff) != cutoff or cutoff < 2:
        raise DimensionError(f"mode cutoff must be an integer >= 2, got {cutoff!r}")
    return ModeSpace(int(cutoff))


def spin_space(atoms: int) -> SpinSpace:
    if int(atoms) != atoms or atoms < 1:
        raise DimensionError(f"number of atoms must be an integer >= 1, got {atoms!r}")
    return SpinSpace(int(atoms))


@dataclass(frozen=True)
class CompositeSpace:
    factors: tuple[Factor, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.factors:
            raise DimensionError("a composite space needs at least one factor")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"f{k}" for k in range(len(self.factors))))
        if len(self.names) != len(self.factors) or len(set(self.names)) != len(self.names):
            raise DimensionError(f"factor names {self.names} do not match the factors")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.dims))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.dims))

    def factor_index(self, key: int | str) -> int:
        if isinstance(key, str):
            try:
                return self.names.index(key)
            except ValueError:
                raise DimensionError(f"no factor named {key!r}; have {self.names}") from None
        if not 0 <= key < len(self.factors):
            raise DimensionError(f"factor index {key} out of range")
        return key

    def embed(self, op: np.ndarray, key: int | str) -> np.ndarray:
        """Lift a single-factor operator to the full space."""
        k = self.factor_index(key)
        op = np.asarray(op, dtype=complex)
        if op.shape != (self.dims[k], self.dims[k]):
            raise DimensionError(f"operator shape {op.shape} does not fit factor {k} of dim {self.dims[k]}")
        mats = [np.eye(d, dtype=complex) for d in self.dims]
        mats[k] = op
        return reduce(np.kron, mats)

    def label_grid(self, key: int | str) -> np.ndarray:
        """Per-basis-state label (photon number or m) of one factor."""
        k = self.factor_index(key)
        idx = np.unravel_index(np.arange(self.total_dim), self.dims)[k]
        return self.factors[k].labels[idx]

    def top_level_mask(self, levels: int = 2) -> np.ndarray:
        """Basis states with any mode in its top ``levels`` Fock levels."""
        mask = np.zeros(self.total_dim, dtype=bool)
        for k, f in enumerate(self.factors):
            if isinstance(f, ModeSpace):
                mask |= self.label_grid(k) >= f.cutoff - levels
        return mask

    def without(self, key: int | str) -> "CompositeSpace":
        k = self.factor_index(key)
        if len(self.factors) == 1:
            raise DimensionError("cannot remove the only factor")
        return CompositeSpace(
            self.factors[:k] + self.factors[k + 1:], self.names[:k] + self.names[k + 1:]
        )

    def require_mode(self, key: int | str) -> ModeSpace:
        f = self.factors[self.factor_index(key)]
        if not isinstance(f, ModeSpace):
            raise FactorTypeError(f"factor {key!r} is a spin, not a bosonic mode")
        return f

    def require_spin(self, key: int | str) -> SpinSpace:
        f = self.factors[self.factor_index(key)]
        if not isinstance(f, SpinSpace):
            raise FactorTypeError(f"factor {key!r} is a bosonic mode, not a spin")
        return f


def tensor(factors: Sequence[Factor], names: Sequence[str] | None = None) -> CompositeSpace:
    factors = tuple(factors)
    if not factors:
        raise DimensionError("tensor() needs a nonempty list of spaces")
    return CompositeSpace(factors, tuple(names) if names else ())
