"""Exception hierarchy.

Every error carries a ``where`` tag ("module.operation") so CLI output can
name the failing stage without a traceback.
"""

from __future__ import annotations


class BlunderShieldError(Exception):
    """Base class for all package errors."""

    where = "blundershield"

    def __init__(self, message: str, *, where: str | None = None):
        super().__init__(message)
        if where is not None:
            self.where = where


class FenError(BlunderShieldError):
    """FEN text rejected; ``field`` names the offending FEN field."""

    where = "board.parse_fen"

    def __init__(self, message: str, *, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IllegalMoveError(BlunderShieldError):
    where = "board.apply_move"


class PgnError(BlunderShieldError):
    where = "pgn.parse_pgn"


class DatasetError(BlunderShieldError):
    where = "dataset"


class EmptyDatasetError(DatasetError):
    where = "dataset.build_policy_dataset"


class OracleError(BlunderShieldError):
    where = "uci"


class OracleTimeoutError(OracleError):
    where = "uci.session"


class TrainingError(BlunderShieldError):
    where = "models.train"


class TrainingDivergedError(TrainingError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message: str, *, batch_index: int, grad_norm: float):
        super().__init__(message)
        self.batch_index = batch_index
        self.grad_norm = grad_norm


class CheckpointError(BlunderShieldError):
    where = "checkpoint"


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointArchitectureError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class SelectionError(BlunderShieldError):
    where = "selection"


class HarnessError(BlunderShieldError):
    where = "metrics"


class ConfigError(BlunderShieldError):
    where = "config"
