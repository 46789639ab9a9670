class BesovkitError(Exception):
    """Base class for every error raised by besovkit."""


class NonFiniteError(BesovkitError, ValueError):
    pass


class GridMismatchError(BesovkitError, ValueError):
    pass


class ResolutionError(BesovkitError, ValueError):
    pass


class WeightError(BesovkitError, ValueError):
    pass


class SectorError(BesovkitError, ValueError):
    pass


class ContractionError(BesovkitError, RuntimeError):
    pass


class ConfigError(BesovkitError, ValueError):
    pass
