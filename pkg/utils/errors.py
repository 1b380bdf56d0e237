from __future__ import annotations


class ConfigValidationError(ValueError):
    """Experiment config failed validation. ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class EnumerationLimitError(ValueError):
    pass


class NonReversibleError(ValueError):
    pass


class NumericalAbort(RuntimeError):
    pass


class SingularInverseError(NumericalAbort):
    pass


class KernelSpectrumError(NumericalAbort):
    pass


class PSDLossError(NumericalAbort):
    pass


class NearSingularIntensityError(NumericalAbort):
    pass
