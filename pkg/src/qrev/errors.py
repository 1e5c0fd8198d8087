"""Exception types shared across the library.

Physics-level failures (impossible conditioning, singular operators, undefined
statistics) are kept distinct from configuration/input errors so the CLI can
map them to different exit codes.
"""


class QrevError(Exception):
    """Base class for all library errors."""


class ConfigError(QrevError):
    """Invalid experiment configuration (bad schema, unknown key, bad value)."""


class PhysicsError(QrevError):
    """A physical invariant was violated at runtime."""


class VariantMismatch(PhysicsError):
    """Readout variant does not match the measurement family."""


class ParameterError(PhysicsError):
    """Measurement-family parameter outside its physical range."""


class RankDeficient(PhysicsError):
    """Operator is numerically singular; the reversal rule needs rank 2."""


class ImpossibleReadout(PhysicsError):
    """Conditioning trace is numerically zero for the given readout."""


class UndefinedArrow(PhysicsError):
    """Both forward and backward probabilities vanish; log-ratio undefined."""


class OrthogonalPostselection(PhysicsError):
    """Pre- and post-selected states are orthogonal; weak value diverges."""


class EmptyEnsemble(PhysicsError):
    """An ensemble average was requested over zero trajectories/branches."""


class WeightMismatch(PhysicsError):
    """Branch weights of a mixed-state ensemble do not sum to one."""
