"""Exception hierarchy shared across the engine, model container, and harness."""


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible or an output dim is not a positive integer."""


class ShapeMismatch(DimensionMismatch):
    """Declared and actual tensor shapes disagree (model file or mid-graph)."""


class DomainError(ValueError):
    """Input values fall outside the operation's documented domain."""


class ModelFormatError(Exception):
    """Base for errors raised while reading a serialized model."""


class BadMagic(ModelFormatError):
    pass


class UnsupportedVersion(ModelFormatError):
    pass


class CorruptHeader(ModelFormatError):
    pass


class CyclicGraph(ModelFormatError):
    pass


class NoValidCells(ValueError):
    """Every cell of a consistency matrix was gated empty."""


class DatasetError(Exception):
    """Base for dataset indexing and decoding failures."""


class MissingFile(DatasetError):
    pass


class BadLabel(DatasetError):
    pass


class DecodeError(DatasetError):
    pass


class SweepAborted(RuntimeError):
    """More than the failure budget of images failed; partial results discarded."""
