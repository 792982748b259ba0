"""Exception types shared across the toolkit."""


class GatedSerError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GatedSerError):
    """Invalid experiment or CLI configuration."""


class CorpusError(GatedSerError):
    """Problem with corpus files or their metadata."""


class FormatError(CorpusError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(FormatError):
    """Well-formed WAV that uses an encoding we do not read."""


class LabelDecodeError(CorpusError):
    """Filename does not decode to a known emotion label."""


class EmptyCorpusError(CorpusError):
    """Corpus directory contains no usable files."""


class StratificationError(CorpusError):
    """Split requested on a manifest with an empty class."""


class ShapeError(GatedSerError, ValueError):
    """Dimension or size mismatch between numeric operands."""


class TooShortError(GatedSerError, ValueError):
    """Signal shorter than the operation's minimum length."""


class FilterbankError(GatedSerError):
    """Filterbank construction produced an empty filter."""


class NoiseLengthError(GatedSerError):
    """Noise recording shorter than the clean utterance."""


class SnrUndefinedError(GatedSerError):
    """Target-SNR mixing requested against a silent signal."""


class DivergenceError(GatedSerError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


class PairingError(GatedSerError):
    """Runtime comparison is missing one model of a pair."""
