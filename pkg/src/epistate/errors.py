"""Exception types shared across the pipeline.

Two broad families: InputError for bad data or configuration (CLI exit
code 2) and NumericError for failures during fitting or evaluation
(CLI exit code 3).
"""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class InputError(PipelineError):
    """Invalid input data or configuration."""


class NumericError(PipelineError):
    """Numeric failure while fitting or evaluating."""


class EmptyFile(InputError):
    pass


class EmptyInput(InputError):
    pass


class MissingChannel(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing channel {name!r}")


class MalformedRow(InputError):
    def __init__(self, line, reason=""):
        self.line = line
        msg = f"malformed row at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class OutOfRange(InputError):
    def __init__(self, frame, value):
        self.frame = frame
        self.value = value
        super().__init__(f"rating {value!r} at frame {frame} outside [-1, +1]")


class IncompatibleRates(InputError):
    def __init__(self, fps_a, fps_b):
        self.fps_a = fps_a
        self.fps_b = fps_b
        super().__init__(f"cannot resample between rates {fps_a} and {fps_b}")


class InvalidPlan(InputError):
    pass


class MissingLandmark(InputError):
    def __init__(self, line, got, want):
        self.line = line
        super().__init__(
            f"MissingLandmark: row at line {line} has {got} values, expected {want}"
        )


class DegenerateShape(InputError):
    def __init__(self, frame=None, detail=""):
        self.frame = frame
        where = "" if frame is None else f" at frame {frame}"
        super().__init__(f"degenerate landmark shape{where}: {detail}")


class LengthMismatch(InputError):
    def __init__(self, n_a, n_b):
        super().__init__(f"length mismatch: {n_a} vs {n_b}")


class ZeroVariance(InputError):
    pass


class TooFewPoints(InputError):
    def __init__(self, n, need):
        super().__init__(f"need at least {need} points, got {n}")


class WindowTooLarge(InputError):
    def __init__(self, window, n):
        super().__init__(f"window {window} exceeds series length {n}")


class EmptyKinds(InputError):
    pass


class MissingWeight(InputError):
    def __init__(self, channel, state):
        self.channel = channel
        super().__init__(f"no MIC weight for channel {channel!r}, state {state!r}")


class TooShort(InputError):
    pass


class SingleClass(InputError):
    pass


class TooFewRows(InputError):
    def __init__(self, n, need):
        super().__init__(f"need at least {need} rows, got {n}")


class ArityMismatch(InputError):
    def __init__(self, got, want):
        super().__init__(f"row arity {got} does not match model arity {want}")


class MissingClass(InputError):
    def __init__(self, label):
        super().__init__(f"class {label!r} absent from the provided labels")


class MissingRegion(InputError):
    def __init__(self, region):
        self.region = region
        super().__init__(f"no training rows for region {region!r}")


class TooFewSessions(InputError):
    pass


class BadFormat(InputError):
    """Unrecognised or corrupted serialized artifact."""


class ConvergenceError(NumericError):
    """Optimizer hit its iteration cap before meeting tolerance."""
