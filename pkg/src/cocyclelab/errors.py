"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 1 (bad input), ``CertificationError``
to exit code 2 (the method honestly reports a numerical-certification
failure, which may be a scientific result rather than a bug).
"""


class CocycleLabError(Exception):
    pass


class ConfigError(CocycleLabError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class WindowError(CocycleLabError):
    """A path was asked for an index outside its populated window."""

    def __init__(self, index: int, lo: int, hi: int):
        self.index = index
        self.required_extension = max(lo - index, index - hi)
        super().__init__(
            f"index {index} outside populated window [{lo}, {hi}]; "
            f"extend the window by {self.required_extension}"
        )


class CertificationError(CocycleLabError):
    """A numerical certificate could not be produced at the requested size."""


class NonConvergenceError(CertificationError):
    pass


class CoveringFailureError(CertificationError):
    pass


class TailNotCertifiedError(CertificationError):
    pass


class PieceBudgetError(CertificationError):
    pass


class StabilizationError(CertificationError):
    pass
