"""Exception hierarchy shared by all ecgkit modules."""


class EcgKitError(Exception):
    """Base class for all errors raised by this package."""


# --- ingest ---------------------------------------------------------------

class ParseError(EcgKitError):
    """Malformed text input. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFormat(EcgKitError):
    """WFDB signal format other than 212."""


class TruncatedData(EcgKitError):
    """Binary input ends before the declared content does."""


class IntegrityError(EcgKitError):
    """Decoded data contradicts its own metadata (e.g. first-value check)."""


class EmptyInput(EcgKitError):
    """Input contains no samples."""


# --- dsp / features -------------------------------------------------------

class InvalidLevel(EcgKitError):
    """Wavelet decomposition level out of range for the signal length."""


class SignalTooShort(EcgKitError):
    """Signal shorter than the operation requires."""


class DegenerateSignal(EcgKitError):
    """Near-constant signal where variance-based normalization is undefined."""


class InsufficientPeaks(EcgKitError):
    """Fewer than two R peaks; interval features are undefined."""


# --- dataset --------------------------------------------------------------

class UnknownClass(EcgKitError):
    """Beat symbol outside the five modeled classes."""


class EmptyClass(EcgKitError):
    """A class has no members where at least one is required."""


class ClassTooSmall(EcgKitError):
    """A class has too few members for the requested split."""


class InvalidSplit(EcgKitError):
    """Split parameters would leave one side empty."""


# --- nn / eval ------------------------------------------------------------

class ShapeError(EcgKitError):
    """Array shapes inconsistent with the operation's contract."""


class BatchTooSmall(EcgKitError):
    """Batch statistics undefined for fewer than two values."""


class InvalidRate(EcgKitError):
    """Dropout rate outside [0, 1)."""


class FormatError(EcgKitError):
    """Model file version or architecture mismatch."""


class CorruptModel(EcgKitError):
    """Model file checksum failure."""


class EmptyMatrix(EcgKitError):
    """Confusion matrix with no counted items."""
