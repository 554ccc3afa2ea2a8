"""latscat: spectral and scattering computations for discrete Schrodinger
operators H = H0 + V on Z^d with finitely supported potentials.

Forward data: free and full resolvents, perturbation determinant,
discrete spectrum, spectral shift function, on-shell scattering matrix.
Inverse: layer-by-layer recovery of the potential from complex-energy
scattering data.
"""

__version__ = "0.1.0"

from .errors import LatscatError, NumericsError, ResourceLimitError, ValidationError
from .lattice import (CENTERED, STANDARD, Potential, apply_h, apply_h0, band,
                      delta, trace_moments)
from .green import (EnergyPoint, KernelTable, green_1d, green_boundary,
                    green_quadrature, green_series, kernel_table, lambda_of_z,
                    z_of_lambda)
from .spectrum import (EigenvalueRecord, SpectrumResult, dressing_matrix,
                       find_discrete_eigenvalues, perturbation_determinant,
                       resolvent_entry, truncated_box_eigenvalues)
from .shift import (MomentReport, closed_form_moments, eigenvalue_bounds_check,
                    moment_identity, ssf, ssf_jump_check, ssf_profile)
from .scattering import (SMatrixPanel, SurfaceGrid, born_amplitude, det_s,
                         full_amplitude, psi0, s_matrix, surface_grid,
                         surface_point)
from .inverse import ForwardModel, reconstruct, zeta
