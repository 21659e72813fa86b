"""Exception hierarchy shared by every module."""


class RowTrackerError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDepth(RowTrackerError, ValueError):
    pass


class DimensionMismatch(RowTrackerError, ValueError):
    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


class EmptyMask(RowTrackerError, ValueError):
    pass


class OutOfOrderFrame(RowTrackerError):
    pass


class InvalidSpec(RowTrackerError, ValueError):
    pass


class MissingCalibration(RowTrackerError):
    pass


class ZeroGroundTruth(RowTrackerError, ValueError):
    pass


class EmptyInput(RowTrackerError, ValueError):
    pass


class DegenerateInput(RowTrackerError, ValueError):
    pass


class CorruptManifest(RowTrackerError):
    def __init__(self, message, frame=None):
        super().__init__(message if frame is None else f"frame {frame}: {message}")
        self.frame = frame


class MissingFile(RowTrackerError, FileNotFoundError):
    def __init__(self, frame, path=None):
        what = "missing file" if frame is None else f"missing file for frame {frame}"
        msg = what + (f": {path}" if path else "")
        super().__init__(msg)
        self.frame = frame
        self.path = path


class IoFailure(RowTrackerError, OSError):
    pass


class UsageError(RowTrackerError):
    pass
