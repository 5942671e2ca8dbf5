"""
Errors: exception hierarchy shared by every pipeline stage

All domain errors derive from TissueGraphError so the CLI can tell
pipeline failures apart from programming errors.
"""

from typing import Optional


class TissueGraphError(Exception):
    """Base class for all tissue-graph errors"""


class InvalidArgumentError(TissueGraphError, ValueError):
    """Bad parameter, dimension mismatch or empty input"""


class DegenerateInputError(InvalidArgumentError):
    """Input is valid in shape but carries no usable variation"""


class NoTissueFoundError(TissueGraphError):
    """Tissue mask is empty after morphological cleanup"""


class CorruptTraceError(TissueGraphError):
    """Merge trace references a region that does not exist"""


class UndefinedMetricError(TissueGraphError):
    """Metric cannot be computed for the given inputs"""


class FileFormatError(TissueGraphError):
    """Malformed graph, embedding, nuclei or checkpoint file"""


class ConfigError(TissueGraphError):
    """Unknown configuration key, illegal value or unreadable manifest"""


class TrainingDivergedError(TissueGraphError):
    """Loss became non-finite during training"""

    def __init__(self, message: str, epoch: int, batch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
