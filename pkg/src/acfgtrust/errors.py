class FileFormatError(ValueError):
    """Base class for problems reading a model or dataset file."""


class CorruptFileError(FileFormatError):
    pass


class UnsupportedVersionError(FileFormatError):
    pass


class ShapeMismatchError(FileFormatError):
    pass


class DegenerateEmbedding(ArithmeticError):
    """An embedding norm fell below the degeneracy threshold; similarity is undefined."""

    similarity = 0.0
