"""Default numerical tolerances.

All values are absolute and assume unit-scaled inputs.
"""

TAU_COEFF = 1e-9   # jet coefficient equality
TAU_INT = 1e-6     # integrality of resonance values
TAU_MAT = 1e-9     # matrix identities
TAU_EIG = 1e-7     # eigenvalue clustering
ODE_RTOL = 1e-10
ODE_ATOL = 1e-13
ZERO_DUST = 1e-15  # coefficients below this count as exact zeros
