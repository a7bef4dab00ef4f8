"""Exception types shared across the codec."""


class NtcError(Exception):
    """Base class for codec errors."""


class DataFormatError(NtcError):
    """Malformed, truncated, or mismatched file content."""


class NumericError(NtcError):
    """Non-finite value produced during optimization or transform evaluation."""
