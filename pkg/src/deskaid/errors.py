"""Exception hierarchy.

Everything raised on purpose derives from :class:`DeskaidError`.  The two
branches matter to the command line front end: :class:`ConfigError` maps to
exit code 2 and :class:`DataError` to exit code 3.
"""

from __future__ import annotations


class DeskaidError(Exception):
    pass


class ConfigError(DeskaidError):
    """Invalid configuration, missing input path, or bad enumeration value."""


class DataError(DeskaidError):
    pass


# geometry
class DegenerateGeometry(DataError):
    pass


# parsing
class ParseError(DataError):
    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None,
                 row: int | None = None):
        self.offset = offset
        self.line = line
        self.row = row
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if row is not None:
            where.append(f"row {row}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class GeometryKindMismatch(DataError):
    def __init__(self, index: int, found: str, expected: str):
        self.index = index
        super().__init__(f"feature {index}: geometry {found!r} does not match expected {expected!r}")


class EmptyLayer(DataError):
    pass


class HeaderMissing(DataError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(key)


class CountMismatch(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)


# indexing / sampling
class KTooLarge(DataError):
    pass


class SamplingExhausted(DataError):
    pass


class InsufficientNegatives(DataError):
    def __init__(self, strategy: str, needed: int, available: int):
        self.strategy = strategy
        super().__init__(f"{strategy}: need {needed}, have {available}")


# features
class GridTooSmall(DataError):
    pass


class OutOfExtent(DataError):
    pass


class NoDataCell(DataError):
    pass


class MissingLayer(DataError):
    def __init__(self, role: str):
        self.role = role
        super().__init__(f"layer role {role!r} is not bound")


class FeaturizationFailed(DataError):
    def __init__(self, ids, reasons=None):
        self.ids = list(ids)
        self.reasons = reasons or {}
        shown = ", ".join(str(i) for i in self.ids[:10])
        more = "" if len(self.ids) <= 10 else f" (+{len(self.ids) - 10} more)"
        super().__init__(f"featurization failed for ids {shown}{more}")


# graph / models
class TooFewNodes(DataError):
    pass


class SingleClassData(DataError):
    pass


class NonFinite(DataError):
    pass


class Diverged(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class UnsupportedModelKind(DataError):
    pass


# evaluation / maps
class LengthMismatch(DataError):
    pass


class TooFewRows(DataError):
    pass


class ConstantColumn(DataError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)


class EmptyMap(DataError):
    pass


class OutOfRange(DataError):
    pass
