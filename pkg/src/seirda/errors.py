"""Exception hierarchy shared across the package."""


class SeirdaError(Exception):
    """Base class for all package errors."""


class ModelDomainError(SeirdaError, ValueError):
    """A formula was evaluated outside its domain (zero denominator, bad rate)."""


class StateCollapseError(SeirdaError):
    """An integrated state left the admissible region (S <= 0, a compartment > N)."""

    def __init__(self, reason, member=None, date=None):
        super().__init__(reason)
        self.reason = reason
        self.member = member
        self.date = date

    def __str__(self):
        parts = [self.reason]
        if self.member is not None:
            parts.append(f"member {self.member}")
        if self.date is not None:
            parts.append(f"date {self.date}")
        return "; ".join(parts)


class FilterError(SeirdaError):
    """The ensemble-space analysis system could not be solved."""


class AssimilationError(SeirdaError):
    """A step of the daily cycle failed; ``date`` names the day."""

    def __init__(self, date, cause):
        super().__init__(f"{date}: {cause}")
        self.date = date
        self.cause = cause


class InitializationError(SeirdaError):
    """Spin-up could not produce a usable initial ensemble."""


class DataError(SeirdaError, ValueError):
    """Observation data is malformed or unusable."""


class ObservationFormatError(DataError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ConfigError(SeirdaError, ValueError):
    """Invalid or unknown configuration entry."""
