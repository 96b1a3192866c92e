from __future__ import annotations

import csv
import enum
import io
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from typing_extensions import override

from mediq.abc import MediqError

Cell = t.Union[str, float]
Row = tuple[Cell, ...]


class DatastoreError(MediqError):
    pass


class HeaderMismatch(DatastoreError):
    pass


class ParseError(DatastoreError):
    def __init__(self, row: int, column: str, value: str) -> None:
        super().__init__(row, column, value)
        self.row = row
        self.column = column
        self.value = value

    @override
    def __str__(self) -> str:
        return f"can't parse cell at row={self.row}; column={self.column}; value={self.value!r}"


class UnknownColumn(DatastoreError):
    pass


class SchemaMismatch(DatastoreError):
    pass


class QueryError(DatastoreError):
    pass


class ColumnKind(str, enum.Enum):
    IDENTIFIER = "identifier"
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        names = [col.name for col in self.columns]
        if len(set(names)) != len(names):
            msg = "column names must be unique"
            raise SchemaMismatch(msg, names)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(col.name for col in self.columns)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownColumn(name, self.names) from None

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def select(self, names: t.Sequence[str]) -> Schema:
        return Schema(tuple(self.column(name) for name in names))

    def drop(self, names: t.Collection[str]) -> Schema:
        return Schema(tuple(col for col in self.columns if col.name not in names))


HOSPITAL_SCHEMA = Schema(
    (
        Column("sno", ColumnKind.IDENTIFIER),
        Column("personid", ColumnKind.IDENTIFIER),
        Column("zipcode", ColumnKind.NUMERIC),
        Column("diseasename", ColumnKind.CATEGORICAL),
        Column("age", ColumnKind.NUMERIC),
        Column("medicine", ColumnKind.CATEGORICAL),
    )
)


@dataclass(frozen=True)
class Table:
    schema: Schema
    rows: tuple[Row, ...] = field(default=())

    def __post_init__(self) -> None:
        width = len(self.schema.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                msg = f"row {i} has {len(row)} cells, schema has {width} columns"
                raise SchemaMismatch(msg)

            for col, cell in zip(self.schema.columns, row):
                if (col.kind is ColumnKind.NUMERIC) is not isinstance(cell, float):
                    msg = f"row {i} cell {col.name} has type {type(cell).__name__}"
                    raise SchemaMismatch(msg)

    def __len__(self) -> int:
        return len(self.rows)

    def values(self, name: str) -> tuple[Cell, ...]:
        idx = self.schema.index(name)
        return tuple(row[idx] for row in self.rows)

    def numeric(self, name: str) -> np.ndarray:
        if self.schema.column(name).kind is not ColumnKind.NUMERIC:
            msg = "column is not numeric"
            raise SchemaMismatch(msg, name)

        return np.array(self.values(name), dtype=np.float64)

    def project(self, names: t.Sequence[str]) -> Table:
        indices = [self.schema.index(name) for name in names]
        return Table(self.schema.select(names), tuple(tuple(row[i] for i in indices) for row in self.rows))

    def drop(self, names: t.Collection[str]) -> Table:
        return self.project([name for name in self.schema.names if name not in names])

    def replace_column(self, name: str, values: t.Sequence[Cell]) -> Table:
        idx = self.schema.index(name)
        if len(values) != len(self.rows):
            msg = "column length doesn't match the table"
            raise SchemaMismatch(msg, name)

        return Table(
            self.schema,
            tuple(row[:idx] + (value,) + row[idx + 1 :] for row, value in zip(self.rows, values)),
        )


def parse_cell(column: Column, raw: str, row: int) -> Cell:
    if column.kind is not ColumnKind.NUMERIC:
        return raw

    try:
        return float(raw)
    except ValueError:
        raise ParseError(row, column.name, raw) from None


def format_cell(cell: Cell) -> str:
    if isinstance(cell, str):
        return cell

    # integral reals are written without the trailing `.0`, others with full repr precision
    return str(int(cell)) if cell.is_integer() else repr(cell)


def read_csv(stream: t.TextIO, schema: Schema) -> Table:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(header) != schema.names:
        raise HeaderMismatch(header, schema.names)

    rows: list[Row] = []
    for i, raw in enumerate(reader, start=1):
        if not raw:
            continue

        if len(raw) != len(schema.columns):
            msg = f"row {i} has {len(raw)} cells, expected {len(schema.columns)}"
            raise SchemaMismatch(msg)

        rows.append(tuple(parse_cell(col, value, i) for col, value in zip(schema.columns, raw)))

    return Table(schema, tuple(rows))


def read_result_csv(data: bytes, base: Schema) -> Table:
    """Parse a result table whose header is any ordered subset of the base schema."""

    text = data.decode("utf-8")
    header = next(csv.reader(io.StringIO(text)), None)
    if header is None:
        raise HeaderMismatch(header, base.names)

    try:
        schema = base.select(header)
    except UnknownColumn as err:
        raise HeaderMismatch(header, base.names) from err

    return read_csv(io.StringIO(text), schema)


def load_csv(path: Path, schema: Schema = HOSPITAL_SCHEMA) -> Table:
    with path.open("r", encoding="utf-8", newline="") as fd:
        return read_csv(fd, schema)


def dump_csv(table: Table) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.schema.names)
    writer.writerows([format_cell(cell) for cell in row] for row in table.rows)
    return buffer.getvalue()


def write_csv(table: Table, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_csv(table), encoding="utf-8")


class Operator(str, enum.Enum):
    EQ = "eq"
    RANGE = "range"
    ANY = "any"


@dataclass(frozen=True)
class Query:
    """Single-column predicate plus an optional projection (`None` keeps every column)."""

    column: str
    operator: Operator
    value: t.Optional[Cell] = None
    low: t.Optional[float] = None
    high: t.Optional[float] = None
    projection: t.Optional[tuple[str, ...]] = None

    def validate(self, schema: Schema) -> None:
        column = schema.column(self.column)
        for name in self.projection or ():
            schema.column(name)

        if self.operator is Operator.EQ:
            if self.value is None:
                msg = "eq predicate needs a value"
                raise QueryError(msg, self)

            if column.kind is ColumnKind.NUMERIC:
                try:
                    float(self.value)
                except ValueError:
                    msg = "eq predicate needs a numeric value for a numeric column"
                    raise QueryError(msg, self) from None

        if self.operator is Operator.RANGE:
            if column.kind is not ColumnKind.NUMERIC:
                msg = "range predicate needs a numeric column"
                raise QueryError(msg, self)

            if self.low is None or self.high is None or self.low > self.high:
                msg = "range predicate needs low <= high"
                raise QueryError(msg, self)

    def matches(self, cell: Cell) -> bool:
        if self.operator is Operator.ANY:
            return True

        if self.operator is Operator.EQ:
            if isinstance(cell, float):
                return self.value is not None and cell == float(self.value)
            return cell == str(self.value)

        assert self.low is not None
        assert self.high is not None
        return isinstance(cell, float) and self.low <= cell <= self.high

    def to_json(self) -> dict[str, object]:
        data: dict[str, object] = {"column": self.column, "op": self.operator.value}
        if self.value is not None:
            data["value"] = self.value
        if self.low is not None:
            data["low"] = self.low
        if self.high is not None:
            data["high"] = self.high
        if self.projection is not None:
            data["projection"] = list(self.projection)
        return data

    @classmethod
    def from_json(cls, data: t.Mapping[str, object]) -> Query:
        try:
            value = data.get("value")
            low = data.get("low")
            high = data.get("high")
            projection = data.get("projection")
            return cls(
                column=str(data["column"]),
                operator=Operator(data["op"]),
                value=value if isinstance(value, (str, float)) else (float(value) if isinstance(value, int) else None),
                low=float(low) if isinstance(low, (int, float)) else None,
                high=float(high) if isinstance(high, (int, float)) else None,
                projection=tuple(str(name) for name in projection) if isinstance(projection, list) else None,
            )

        except (KeyError, ValueError) as err:
            msg = "invalid query"
            raise QueryError(msg, data) from err


def match_query(table: Table, query: Query) -> Table:
    query.validate(table.schema)

    idx = table.schema.index(query.column)
    matched = Table(table.schema, tuple(row for row in table.rows if query.matches(row[idx])))

    return matched.project(query.projection) if query.projection is not None else matched


@dataclass(frozen=True)
class Constant:
    value: Cell


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float
    integer: bool = False


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float
    integer: bool = False


@dataclass(frozen=True)
class Choice:
    values: tuple[str, ...]


@dataclass(frozen=True)
class Sequential:
    """Identifier column filled with `prefix` + 1-based row number."""

    prefix: str = ""


ColumnDistribution = t.Union[Constant, Uniform, Normal, Choice, Sequential]

DISEASES = (
    "Swine flu",
    "Diabetis",
    "Epistaxis",
    "Otitis externa",
    "Acute conjunctivitis",
    "Retinal detachment",
    "Urticaria",
    "Hayfever",
    "Melasma",
    "Acne",
    "Chicken pox",
    "Dandruff",
)
MEDICINES = (
    "Tami flu",
    "Glycheck",
    "Nasivion",
    "Ciprocent",
    "Benadryl softgel",
    "Foristal",
    "Cetraben",
    "Daivonex",
    "Tetmosol soap",
    "Benzoyl peroxide",
)

HOSPITAL_DISTRIBUTIONS: t.Mapping[str, ColumnDistribution] = {
    "sno": Sequential(),
    "personid": Sequential("p"),
    "zipcode": Uniform(500000, 599999, integer=True),
    "diseasename": Choice(DISEASES),
    "age": Uniform(18, 90, integer=True),
    "medicine": Choice(MEDICINES),
}


def _draw(column: Column, dist: ColumnDistribution, n: int, rng: np.random.Generator) -> t.Sequence[Cell]:
    numeric = column.kind is ColumnKind.NUMERIC

    if isinstance(dist, Constant):
        value = float(dist.value) if numeric else str(dist.value)
        return [value] * n

    if isinstance(dist, Sequential):
        return [f"{dist.prefix}{i + 1}" for i in range(n)]

    if isinstance(dist, Choice):
        picks = rng.integers(0, len(dist.values), size=n)
        return [dist.values[i] for i in picks]

    if not numeric:
        msg = "numeric distribution for a non-numeric column"
        raise SchemaMismatch(msg, column.name)

    if isinstance(dist, Uniform):
        values = rng.integers(int(dist.low), int(dist.high) + 1, size=n) if dist.integer else rng.uniform(
            dist.low, dist.high, size=n
        )
    else:
        values = rng.normal(dist.mean, dist.std, size=n)
        if dist.integer:
            values = np.rint(values)

    return [float(v) for v in values]


def gen_synthetic(
    n: int,
    seed: int,
    distributions: t.Optional[t.Mapping[str, ColumnDistribution]] = None,
    schema: Schema = HOSPITAL_SCHEMA,
) -> Table:
    """Generate `n` schema-conformant rows; columns without a distribution use the hospital defaults."""

    if n < 0:
        msg = "row count must be non-negative"
        raise ValueError(msg, n)

    rng = np.random.default_rng(seed)
    dists = {**HOSPITAL_DISTRIBUTIONS, **(distributions or {})}

    columns = []
    for column in schema.columns:
        dist = dists.get(column.name)
        if dist is None:
            raise UnknownColumn(column.name)
        columns.append(_draw(column, dist, n, rng))

    return Table(schema, tuple(zip(*columns)) if n else ())
