"""
Exception hierarchy. Every contract violation is a `MajorantError`; the CLI
turns it into exit status 1, the experiment pipeline wraps it with the stage
that failed.
"""

import constants as C


class MajorantError(Exception):
    """Base class for every contract violation raised by this project."""


class DimensionMismatchError(MajorantError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(C.ERR_MSG_DIMENSION.format(expected=expected, got=got))


class DegenerateRectangleError(MajorantError):
    pass


class DomainError(MajorantError):
    """Input outside the domain where the operation (or the guarantee) holds."""


class DatasetError(MajorantError):
    pass


class MonotonicityViolationError(DatasetError):
    def __init__(self, i: int, j: int, vi: float, vj: float):
        self.pair = (i, j)
        super().__init__(C.ERR_MSG_MONOTONICITY.format(i=i, j=j, vi=vi, vj=vj))


class CellBudgetExceededError(MajorantError):
    def __init__(self, cells: int, budget: int):
        self.cells = cells
        self.budget = budget
        super().__init__(C.ERR_MSG_CELL_BUDGET.format(cells=cells, budget=budget))


class NoFiniteMajoringPointsError(MajorantError):
    pass


class UncoveredPointError(MajorantError):
    pass


class TrainingDivergedError(MajorantError):
    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        super().__init__(C.ERR_MSG_DIVERGED.format(epoch=epoch, value=value))


class VerificationFailedError(MajorantError):
    """Grow-and-retrain loop ran out of attempts; carries the best attempt."""

    def __init__(self, net, report, attempts: int):
        self.net = net
        self.report = report
        self.attempts = attempts
        super().__init__(
            C.ERR_MSG_RETRIES_EXHAUSTED.format(
                attempts=attempts, margin=report.min_margin
            )
        )


class ModelFormatError(MajorantError):
    pass


class ExperimentSpecError(MajorantError):
    pass


class ExperimentStageError(MajorantError):
    def __init__(self, stage: str, error: Exception):
        self.stage = stage
        self.cause = error
        super().__init__(C.ERR_MSG_STAGE.format(stage=stage, error=error))
