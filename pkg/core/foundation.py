"""Consolidated core foundation for molcap"""
from typing import Any, Dict, Optional, Sequence


# ============================================================================
# EXCEPTIONS
# ============================================================================

class MolcapException(Exception):
    """Base exception for molcap.

    ``exit_code`` is what the CLI returns when the error escapes a subcommand:
    2 for usage/IO/config problems, 1 for internal or assertion failures.
    """

    exit_code = 2

    def __init__(self, message: str, error_code: str = "MOLCAP_ERROR", details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)


class DimensionError(MolcapException):
    """Raised when tensor shapes do not line up"""

    def __init__(self, operation: str, shapes: Sequence[Sequence[int]], message: str = "shape mismatch"):
        rendered = " vs ".join(str(tuple(shape)) for shape in shapes)
        super().__init__(
            message=f"{operation}: {message} {rendered}",
            error_code="DIMENSION_ERROR",
            details={"operation": operation, "shapes": [list(shape) for shape in shapes]},
        )


class ConfigurationError(MolcapException):
    """Raised when configuration is invalid"""

    def __init__(self, setting: str, message: str):
        super().__init__(
            message=f"Configuration error for '{setting}': {message}",
            error_code="CONFIGURATION_ERROR",
            details={"setting": setting},
        )


class ContractViolationError(MolcapException):
    """Raised when an operation's precondition does not hold"""

    exit_code = 1

    def __init__(self, operation: str, message: str):
        super().__init__(
            message=f"Contract violation in '{operation}': {message}",
            error_code="CONTRACT_VIOLATION",
            details={"operation": operation},
        )


class NumericalError(MolcapException):
    """Raised in debug mode when a forward op produces NaN or Inf"""

    exit_code = 1

    def __init__(self, operation: str):
        super().__init__(
            message=f"Non-finite values produced by '{operation}'",
            error_code="NUMERICAL_ERROR",
            details={"operation": operation},
        )


class EncodingError(MolcapException):
    """Raised when a label is not plain ASCII"""

    def __init__(self, offset: int, char: str):
        super().__init__(
            message=f"Non-ASCII character {char!r} at offset {offset}",
            error_code="ENCODING_ERROR",
            details={"offset": offset, "char": char},
        )


class OutOfVocabularyError(MolcapException):
    """Raised when a token is missing from the vocabulary"""

    def __init__(self, token: str, offset: int):
        super().__init__(
            message=f"Token {token!r} at offset {offset} is not in the vocabulary",
            error_code="OUT_OF_VOCABULARY",
            details={"token": token, "offset": offset},
        )


class VocabularyError(MolcapException):
    """Raised when a vocabulary cannot be built or loaded"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(
            message=message,
            error_code="VOCABULARY_ERROR",
            details={"path": path} if path else {},
        )


class SequenceLengthError(MolcapException):
    """Raised when a token sequence exceeds the decoder's max_len"""

    def __init__(self, length: int, max_len: int):
        super().__init__(
            message=f"Sequence length {length} exceeds max_len {max_len}",
            error_code="SEQUENCE_TOO_LONG",
            details={"length": length, "max_len": max_len},
        )


class ManifestError(MolcapException):
    """Raised when a sample manifest cannot be loaded"""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(
            message=f"Manifest {where}: {message}",
            error_code="MANIFEST_ERROR",
            details={"path": path, "line": line},
        )


class ImageReadError(MolcapException):
    """Raised when an image file cannot be decoded"""

    def __init__(self, path: str, message: str):
        super().__init__(
            message=f"Cannot read image {path}: {message}",
            error_code="IMAGE_READ_ERROR",
            details={"path": path},
        )


class CheckpointError(MolcapException):
    """Raised when a checkpoint is missing, truncated or malformed"""

    def __init__(self, path: str, message: str):
        super().__init__(
            message=f"Checkpoint {path}: {message}",
            error_code="CHECKPOINT_ERROR",
            details={"path": path},
        )


class DatasetValidationError(MolcapException):
    """Raised when training data fails validation; lists every bad sample"""

    def __init__(self, problems: Sequence[str]):
        shown = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        super().__init__(
            message=f"{len(problems)} invalid sample(s): {shown}{more}",
            error_code="DATASET_INVALID",
            details={"problems": list(problems)},
        )


class CacheInvariantError(MolcapException):
    """Raised when a decode cache loses step alignment"""

    exit_code = 1

    def __init__(self, message: str, row_counts: Optional[Sequence[int]] = None):
        super().__init__(
            message=f"Decode cache invariant broken: {message}",
            error_code="CACHE_INVARIANT",
            details={"row_counts": list(row_counts or [])},
        )


class EngineMismatchError(MolcapException):
    """Raised when two decoding engines emit different tokens"""

    exit_code = 1

    def __init__(self, steps: int, left: Sequence[int], right: Sequence[int]):
        super().__init__(
            message=f"Engines disagree after {steps} steps",
            error_code="ENGINE_MISMATCH",
            details={"steps": steps, "left": list(left), "right": list(right)},
        )


class CostLawViolationError(MolcapException):
    """Raised when a measured attention count differs from its closed form"""

    exit_code = 1

    def __init__(self, engine: str, steps: int, measured: int, predicted: int):
        super().__init__(
            message=f"{engine} engine at N={steps}: measured {measured} qk-pairs, predicted {predicted}",
            error_code="COST_LAW_VIOLATION",
            details={"engine": engine, "steps": steps, "measured": measured, "predicted": predicted},
        )
