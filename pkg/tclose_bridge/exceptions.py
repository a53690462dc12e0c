"""Error hierarchy shared by every tclose_bridge module.

All errors derive from ``ValueError``; the CLI maps them to exit status 2 and
the MCP tools turn them into short error strings.
"""

from __future__ import annotations


class TCloseError(ValueError):
    """Base class for all library errors."""


class ConfigError(TCloseError):
    """Settings, schema sidecar or sweep configuration could not be parsed."""


# ---- model ----------------------------------------------------------------

class SchemaMismatch(TCloseError):
    """CSV header or column count does not match the declared schema."""


class CellViolation(TCloseError):
    def __init__(self, row: int, column: str, value: object, reason: str):
        self.row = row
        self.column = column
        self.value = value
        self.reason = reason
        super().__init__(f"row {row}, column '{column}': {value!r} {reason}")


class EmptyDataset(TCloseError):
    """The file holds a header but no data rows."""


# ---- distance -------------------------------------------------------------

class UnknownLabel(TCloseError):
    pass


class EmptyInput(TCloseError):
    pass


class AlphabetMismatch(TCloseError):
    pass


class AlphabetTooLarge(TCloseError):
    pass


class GridMismatch(TCloseError):
    pass


class NotNormalized(TCloseError):
    pass


# ---- closeness ------------------------------------------------------------

class BadThreshold(TCloseError):
    pass


class NoConfidential(TCloseError):
    pass


class NonNumericColumn(TCloseError):
    pass


# ---- construct ------------------------------------------------------------

class TooSmall(TCloseError):
    pass


class NonIntegerT(TCloseError):
    pass


class BadL(TCloseError):
    pass


class Infeasible(TCloseError):
    def __init__(self, class_id: int, bucket: int, reason: str):
        self.class_id = class_id
        self.bucket = bucket
        super().__init__(f"class {class_id}, bucket {bucket}: {reason}")


class UnknownStrategy(TCloseError):
    pass


class KTooLarge(TCloseError):
    pass


# ---- dpbridge -------------------------------------------------------------

class SizesMismatch(TCloseError):
    pass


class BadT(TCloseError):
    pass


class MissingBounds(TCloseError):
    pass


class NotTClose(TCloseError):
    def __init__(self, class_id: int, distance: object, t: float):
        self.class_id = class_id
        self.distance = distance
        self.t = t
        super().__init__(f"class {class_id} is at distance {distance} > t={t}")


# ---- oracle ---------------------------------------------------------------

class BadSpec(TCloseError):
    pass
