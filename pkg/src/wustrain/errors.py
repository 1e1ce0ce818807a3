"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested kernel."""

    def __init__(self, message, *shapes):
        super().__init__(message)
        self.shapes = tuple(tuple(int(d) for d in s) for s in shapes)


class BuildError(ValueError):
    """A layer stack does not chain into a valid network."""


class ContractError(RuntimeError):
    """A call violated an API precondition (mismatched tape, plan, or state)."""


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


class DataFormatError(ValueError):
    """Dataset bytes do not match the expected on-disk format."""

    def __init__(self, message, path=None, offset=None):
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.offset = offset


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
