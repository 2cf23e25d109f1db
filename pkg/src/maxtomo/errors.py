"""Exception classes.

Every error carries a short machine-readable ``code`` that the command line
driver prints on failure (``ERROR <CODE>: message``).
"""


class MaxtomoError(Exception):
    code = "ERROR"


class ConfigError(MaxtomoError, ValueError):
    code = "CONFIG"


class GridError(MaxtomoError, ValueError):
    code = "GRID"


class MediumError(MaxtomoError, ValueError):
    """Refractive index violates positivity or compact-support requirements."""

    code = "MEDIUM"


class SupportViolation(MaxtomoError, ValueError):
    code = "SUPPORT_VIOLATION"


class NearResonance(MaxtomoError, RuntimeError):
    """k^2 is (numerically) an eigenvalue of the discrete curl-curl problem."""

    code = "NEAR_RESONANCE"


class DimensionMismatch(MaxtomoError, ValueError):
    code = "DIMENSION_MISMATCH"


class DegenerateEta(MaxtomoError, ValueError):
    code = "DEGENERATE_ETA"


class OverflowGuard(MaxtomoError, FloatingPointError):
    code = "OVERFLOW_GUARD"


class IllConditioned(MaxtomoError, RuntimeError):
    code = "ILL_CONDITIONED"


class ScanFailed(MaxtomoError, RuntimeError):
    code = "SCAN_FAILED"


class Infeasible(MaxtomoError, RuntimeError):
    code = "INFEASIBLE"


class UnderResolved(MaxtomoError, ValueError):
    code = "UNDER_RESOLVED"


class NoPeaks(MaxtomoError, RuntimeError):
    code = "NO_PEAKS"


class RankDeficient(MaxtomoError, RuntimeError):
    code = "RANK_DEFICIENT"


class QuadratureBreakdown(MaxtomoError, ValueError):
    code = "QUADRATURE"
