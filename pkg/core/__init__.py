"""Core module for molcap"""

from .foundation import (
    MolcapException,
    DimensionError,
    ConfigurationError,
    ContractViolationError,
    NumericalError,
    EncodingError,
    OutOfVocabularyError,
    VocabularyError,
    SequenceLengthError,
    ManifestError,
    ImageReadError,
    CheckpointError,
    DatasetValidationError,
    CacheInvariantError,
    EngineMismatchError,
    CostLawViolationError,
)

__all__ = [
    "MolcapException",
    "DimensionError",
    "ConfigurationError",
    "ContractViolationError",
    "NumericalError",
    "EncodingError",
    "OutOfVocabularyError",
    "VocabularyError",
    "SequenceLengthError",
    "ManifestError",
    "ImageReadError",
    "CheckpointError",
    "DatasetValidationError",
    "CacheInvariantError",
    "EngineMismatchError",
    "CostLawViolationError",
]
