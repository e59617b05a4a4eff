from typing import Optional


class ConfigError(ValueError):
    """Invalid experiment configuration. The runner exits with code 2."""

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class NumericFailure(RuntimeError):
    """Numeric breakdown. The runner exits with code 3 and prints the failing time."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (t={time:.6g})"
        super().__init__(message)


class BlowUpError(NumericFailure):
    pass


class FitError(NumericFailure):
    pass


class SingularSystemError(NumericFailure):
    pass


class EigenError(NumericFailure):
    pass


class FitQualityError(NumericFailure):
    pass


class CheckFailure(AssertionError):
    """An acceptance check did not pass. The runner exits with code 4."""


class MonotonicityError(NumericFailure):
    """Virial ledger violated beyond tolerance."""
