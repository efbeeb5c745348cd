"""Exception hierarchy."""


class FbmLabError(Exception):
    """Base class for all library errors."""


class DomainError(FbmLabError, ValueError):
    """A parameter lies outside its mathematical domain (e.g. H not in (0, 1))."""


class InputError(FbmLabError, ValueError):
    """Malformed or non-finite input data."""


class CirculantError(FbmLabError):
    """Circulant embedding stayed indefinite after the allowed padding."""


class WindowError(FbmLabError, ValueError):
    """A requested time lies outside the sampled noise window."""


class ExtrapolationError(FbmLabError, ValueError):
    """Evaluation point too close to the edge of a sampled drift box."""


class UnsupportedRegularityError(FbmLabError, ValueError):
    """Regularity index above 1 is not supported."""


class CapError(FbmLabError, ValueError):
    """Problem size exceeds a hard cap."""


class ConfigError(FbmLabError, ValueError):
    """Invalid run configuration."""


class DivergenceError(FbmLabError):
    """The numerical state became non-finite.

    ``index`` is the first grid index with a non-finite value.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"non-finite state at grid index {self.index}")
