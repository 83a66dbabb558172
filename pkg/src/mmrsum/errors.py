class MmrsumError(Exception):
    """Base class for package errors."""


class DataError(MmrsumError):
    """Malformed or missing input data (files, schemas, empty corpora)."""


class NumericalError(MmrsumError):
    """Non-finite values or failed numerical procedures."""
