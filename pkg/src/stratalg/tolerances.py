"""Default numeric tolerances, shared across the package.

All comparisons between floating point quantities go through these
constants unless a caller overrides them per call.  Equality of scalars
and vector entries is absolute but scaled by the magnitude of the
operands, so integer-valued data compares exactly.
"""

# Scaled absolute tolerance for equality of floats.
EQ_TOL = 1e-12

# Residual threshold deciding linear independence: a candidate row is
# accepted when its residual norm exceeds RANK_TOL * max(1, row norm).
RANK_TOL = 1e-9

# Allowed deviation of a Gram matrix from the identity.
GRAM_TOL = 1e-9

# Distance tolerance for quadratic (nearest point) subproblems.
QP_TOL = 1e-7

# Principal angle tolerance for span comparisons.
ANGLE_TOL = 1e-8

# Margin below which a strict inequality is considered violated,
# scaled by the magnitude of the operands.
STRICT_TOL = 1e-9

# Activity threshold for max-affine pieces relative to the attained value.
ACTIVE_TOL = 1e-9

# Feasibility slack allowed on linear equality constraints fed to the
# per-scenario LP/QP subproblems.
FEAS_TOL = 1e-9


def eq_scale(*arrays) -> float:
    """Magnitude scale used by the scaled equality comparison."""
    import numpy as np

    m = 1.0
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.size:
            finite = a[np.isfinite(a)]
            if finite.size:
                m = max(m, float(np.max(np.abs(finite))))
    return m
