"""Exception hierarchy shared across the engine."""


class OneBMError(Exception):
    """Base class for all engine errors."""


class SchemaError(OneBMError):
    pass


class MissingTable(SchemaError):
    pass


class NoMainTable(SchemaError):
    """The main table is absent or has no primary key."""


class DuplicateKeyValue(SchemaError):
    def __init__(self, table: str, column: str, value):
        super().__init__(f"duplicate primary key value {value!r} in {table}.{column}")
        self.table = table
        self.column = column
        self.value = value


class TypeMismatch(SchemaError):
    pass


class ParseError(OneBMError):
    def __init__(self, file, line: int, column: str, cell: str, expected: str):
        super().__init__(f"{file}:{line}: column {column!r}: cannot parse {cell!r} as {expected}")
        self.file = file
        self.line = line
        self.column = column
        self.cell = cell


class AmbiguousCutoff(SchemaError):
    pass


class EmptyColumn(UserWarning):
    """Issued when type inference sees no non-empty value."""


class DepthOutOfRange(OneBMError):
    pass


class UnknownType(OneBMError):
    pass


class DuplicateRegistration(OneBMError):
    pass


class NameCollision(OneBMError):
    pass


class DegenerateTable(OneBMError):
    """Contingency table with fewer than two bins on an axis."""
