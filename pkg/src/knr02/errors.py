"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes 2, 3 and 4.
"""


class Knr02Error(Exception):
    """Base class for all package errors."""


class ConfigError(Knr02Error, ValueError):
    """Invalid argument, unknown config key, or inconsistent setup."""


class PhysicsError(Knr02Error):
    """A physical validity condition failed (resonance, parity condition...)."""


class ResonanceError(PhysicsError):
    """A perturbative denominator is too close to zero."""

    def __init__(self, term: str, denominator: float, limit: float):
        self.term = term
        self.denominator = denominator
        self.limit = limit
        super().__init__(
            f"near-resonant denominator in {term}: |{denominator:.6g}| < {limit:.6g}"
        )


class ParityConditionError(PhysicsError, ConfigError):
    """Delta - E != -K, so the dispersive shift is not a parity measurement.

    Also a :class:`ConfigError`: the offending values come from the setup.
    """


class DegenerateDetuningError(PhysicsError):
    """Delta = -K leaves |0> and |2> degenerate; no Z rotation is possible."""


class ZeroDriveError(PhysicsError):
    """Parametric drive amplitude is zero."""


class NumericalError(Knr02Error):
    """Numerical quality problem: trace drift, positivity, leakage."""


class CalibrationQualityError(NumericalError):
    """Basis-state leakage too large to extract phase corrections."""


class RejectionError(Knr02Error):
    """Postselection kept (numerically) nothing."""
