class HrsError(RuntimeError):
    """Base class for every error raised by this package."""


class ShapeError(HrsError, ValueError):
    pass


class GraphError(HrsError):
    pass


class DataError(HrsError, ValueError):
    pass


class ConfigError(HrsError, ValueError):
    pass


class DivergenceError(HrsError):
    pass
