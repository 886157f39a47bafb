"""Exception types raised across the toolkit."""


class SegRobustError(Exception):
    """Base class for all toolkit errors."""


class DecodeError(SegRobustError):
    """File exists but could not be decoded as PNG."""


class UnsupportedFormatError(SegRobustError):
    """Decodable file in a format the toolkit refuses (grayscale image, 16-bit, ...)."""


class EmptyDatasetError(SegRobustError):
    """Dataset root contains no usable samples."""


class UnpairedSampleError(SegRobustError):
    """Image without matching label or vice versa."""


class IdOutOfRangeError(SegRobustError):
    """Class or instance ID outside the declared valid range."""


class DimensionMismatchError(SegRobustError):
    """Two rasters that must share dimensions do not."""


class InconsistentInstanceMapError(SegRobustError):
    """An instance ID spans more than one class in the paired label map."""


class MissingClassStatsError(SegRobustError):
    """Color statistics requested for a class that has none."""


class EmptyBatchError(SegRobustError):
    """Batch operation invoked on an empty batch."""


class SeverityOutOfRangeError(SegRobustError):
    """Corruption severity outside [0, 5]."""


class NoEvaluableClassesError(SegRobustError):
    """Mean requested over a confusion matrix with no present class."""


class MissingResultsError(SegRobustError):
    """Benchmark aggregation is missing a declared (kind, severity) cell."""


class AllPixelsIgnoredError(SegRobustError):
    """Loss requested on a label map whose pixels are all ignored."""


class DivergedLossError(SegRobustError):
    """Training loss became non-finite."""
