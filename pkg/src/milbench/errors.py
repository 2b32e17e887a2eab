"""Exception hierarchy shared across the package."""


class MilbenchError(Exception):
    """Base class for all package errors."""


class InvalidInput(MilbenchError):
    pass


class DegenerateHistogram(MilbenchError):
    """Otsu thresholding needs at least two occupied gray levels."""


class UnsupportedResolution(MilbenchError):
    """Requested target resolution would require upsampling."""


class StorageError(MilbenchError):
    pass


class FormatError(MilbenchError):
    """Feature file has a wrong magic or version."""


class CorruptFile(MilbenchError):
    """Feature file payload is shorter than the header promises."""


class InvalidData(MilbenchError):
    """Non-finite values where finite ones are required."""


class ShapeError(MilbenchError):
    pass


class NumericalError(MilbenchError):
    """Training produced a non-finite gradient; the run must abort."""


class UndefinedMetric(MilbenchError):
    """Metric is undefined on the given labels (e.g. a single class)."""


class InfeasibleTask(MilbenchError):
    """Task cannot be split/trained (e.g. a class with <2 slides)."""


class InfeasibleSplit(MilbenchError):
    """A split lost a class entirely and cannot be rebalanced."""


class MissingFeatures(MilbenchError):
    def __init__(self, slide_id: str):
        super().__init__(f"no feature file for slide {slide_id!r}")
        self.slide_id = slide_id


class DegeneratePair(MilbenchError):
    """All paired differences are zero; the signed-rank test is undefined."""
