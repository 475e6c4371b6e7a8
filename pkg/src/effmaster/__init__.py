"""Effective master equations for polynomially deformed su(2) models."""
from .deformed_su2 import DeformedAlgebra, extract_polynomial, make_algebra, verify_algebra
from .effective import (EffectiveSystem, conjugate_exact, derive_effective_system, effective_hamiltonian_order2,
                        rwa_filter, rwa_filter_superop, small_rotation, transform_dissipator, transform_state)
from .hilbert import CompositeSpace, mode_space, spin_space, tensor
from .lindblad import (DensityState, MasterEquation, integrate, lindblad_rhs, liouvillian_matrix, partial_trace,
                       trace_distance)
from .models import coupled_oscillators, dicke, second_harmonic

__version__ = "0.1.0"
