"""Exception hierarchy shared by every module."""

from __future__ import annotations


class AsquantError(Exception):
    """Base class for all errors raised by the package."""


class DataError(AsquantError):
    """Input data is malformed or geometrically unusable (CLI exit code 1)."""


class ConfigError(AsquantError):
    """Invalid configuration or command-line usage (CLI exit code 2)."""


class ManifestError(ConfigError):
    pass


class MalformedHeader(DataError):
    pass


class IllegalClassCode(DataError):
    def __init__(self, value: int, offset: int):
        super().__init__(f"illegal class code {value} at byte offset {offset}")
        self.value = value
        self.offset = offset


class DimensionTooSmall(DataError):
    pass


class IoFailure(DataError):
    pass


class MissingSide(DataError):
    def __init__(self, scan: int, side: str | None = None):
        msg = f"scan {scan} is missing a spur side"
        if side:
            msg += f" ({side})"
        super().__init__(msg)
        self.scan = scan
        self.side = side


class NonFiniteCoordinate(DataError):
    pass


class LeftRightSwapped(DataError):
    pass


class EmptyInterface(DataError):
    def __init__(self, name: str = "interface"):
        super().__init__(f"empty interface: {name}")
        self.name = name


class PastEnd(DataError):
    pass


class DegenerateTangent(DataError):
    pass


class NoIntersection(DataError):
    def __init__(self, surface: str = "polyline"):
        super().__init__(f"no intersection with {surface}")
        self.surface = surface


class TooCloseToBorder(DataError):
    pass


class NoFocusRegion(DataError):
    pass


class SpurOffTissue(DataError):
    def __init__(self, side: str):
        super().__init__(f"{side} spur is not on the corneo-scleral wall")
        self.side = side


class NoLensSurface(DataError):
    pass


class DegeneratePolygon(DataError):
    pass


class DegenerateIris(DataError):
    pass


class DegenerateVariance(DataError):
    pass


class InconsistentSpec(DataError):
    pass


class DuplicateScanIndex(DataError):
    def __init__(self, index: int):
        super().__init__(f"duplicate scan index {index}")
        self.index = index
