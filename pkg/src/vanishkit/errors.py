class VanishKitError(Exception):
    """Base class for all library errors."""


class DegenerateError(VanishKitError, ValueError):
    """Input geometry does not determine the requested quantity."""


class InsufficientLinesError(VanishKitError, ValueError):
    """Fewer lines than a vanishing point needs."""


class WeightCollapseError(VanishKitError, RuntimeError):
    pass


class NoVanishingPointError(VanishKitError, RuntimeError):
    pass


class FormatError(VanishKitError, ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        elif lineno is not None:
            where = f"line {lineno}: "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno
