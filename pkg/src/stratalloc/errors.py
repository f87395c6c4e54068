"""Exception types raised across the package.

Everything derives from :class:`AllocationError`.  Input problems (bad
tables, bad parameters, size caps) derive from :class:`ValidationError`
so callers can map them to a single "invalid input" outcome.
"""

from __future__ import annotations


class AllocationError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(AllocationError):
    """Base class for malformed or out-of-domain inputs."""


class EmptyFrame(ValidationError):
    def __init__(self) -> None:
        super().__init__("a strata table must contain at least one stratum")


class DuplicateLabel(ValidationError):
    def __init__(self, label: str) -> None:
        self.label = label
        super().__init__(f"stratum label {label!r} appears more than once")


class NonPositiveParameter(ValidationError):
    def __init__(self, label: str, field: str, value: float) -> None:
        self.label = label
        self.field = field
        self.value = value
        super().__init__(
            f"stratum {label!r}: {field} must be positive, got {value!r}"
        )


class NegativeParameter(ValidationError):
    """A field that may be zero but not negative (unit variances)."""

    def __init__(self, label: str, field: str, value: float) -> None:
        self.label = label
        self.field = field
        self.value = value
        super().__init__(
            f"stratum {label!r}: {field} must be nonnegative, got {value!r}"
        )


class UpperBoundExceedsSize(ValidationError):
    def __init__(self, label: str) -> None:
        self.label = label
        super().__init__(f"stratum {label!r}: upper bound M exceeds population size N")


class MissingBound(ValidationError):
    def __init__(self, label: str, field: str) -> None:
        self.label = label
        self.field = field
        super().__init__(f"stratum {label!r}: required column {field!r} is missing")


class UnknownLabel(ValidationError):
    def __init__(self, label: str) -> None:
        self.label = label
        super().__init__(f"label {label!r} does not name a stratum of this problem")


class NonPositiveAllocation(ValidationError):
    def __init__(self, label: str, value: float) -> None:
        self.label = label
        self.value = value
        super().__init__(
            f"allocation for stratum {label!r} must be positive, got {value!r}"
        )


class ZeroA(ValidationError):
    def __init__(self, label: str) -> None:
        self.label = label
        super().__init__(
            f"stratum {label!r} has N*S == 0; drop it before building a problem"
        )


class NonPositiveInput(ValidationError):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)


class FullTakeSet(AllocationError):
    """The s statistic is undefined when every stratum sits in the take set."""

    def __init__(self) -> None:
        super().__init__("s is undefined for the full take set")


class Infeasible(AllocationError):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)


class TooLarge(ValidationError):
    def __init__(self, size: int, cap: int) -> None:
        self.size = size
        self.cap = cap
        super().__init__(
            f"exhaustive check supports at most {cap} strata, got {size}"
        )


class UnsupportedDimension(ValidationError):
    def __init__(self, size: int) -> None:
        self.size = size
        super().__init__(f"grid search supports 2 or 3 strata, got {size}")


class InvalidPair(ValidationError):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)


class NegativeMultiplier(AllocationError):
    def __init__(self, label: str, value: float) -> None:
        self.label = label
        self.value = value
        super().__init__(
            f"multiplier for stratum {label!r} is negative ({value!r}); "
            "the point does not certify"
        )


class ParseError(ValidationError):
    def __init__(self, detail: str) -> None:
        super().__init__(detail)
