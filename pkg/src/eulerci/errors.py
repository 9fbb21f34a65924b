"""Typed errors shared across the engine.

The hierarchy mirrors how the CLI maps failures to exit codes: ConfigError
-> 2, PreconditionError (a violated hypothesis of the construction) -> 3,
NumericalError (a solver that did not converge) -> 4.
"""


class EngineError(Exception):
    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class ConfigError(EngineError):
    pass


class FieldError(EngineError):
    pass


class PreconditionError(EngineError):
    pass


class DegenerateFrame(PreconditionError):
    """Anchor velocity too close to the oscillation direction."""


class OutsideBall(PreconditionError):
    """Matrix outside the geometric lemma's admissible ball."""


class SolvabilityViolation(PreconditionError):
    """Anti-divergence source pairs nontrivially with the kernel."""


class UnresolvableScale(PreconditionError):
    """Requested cutoff/lattice scale below grid resolution."""


class GeometryDrift(PreconditionError):
    """Angle bound lost in the middle of a step (Lemma 7.2 analogue)."""


class NumericalError(EngineError):
    pass


class ContractionFailure(NumericalError):
    """Fixed-point map not a contraction (measured kappa >= 1/2)."""


class IterationLimit(NumericalError):
    pass


class IntegrationFailure(NumericalError):
    pass
