from __future__ import annotations

import typing as t

from mediq.datastore import Schema, SchemaMismatch, Table

if t.TYPE_CHECKING:
    import numpy as np


def consolidate(tables: t.Sequence[Table], rng: np.random.Generator, schema: t.Optional[Schema] = None) -> Table:
    """
    Union the decrypted provider results into one anonymous table.

    Rows are shuffled with the seeded source, so the row order carries no provider attribution. `schema` is used for
    an empty input and, when given, every table must match it.
    """

    expected = schema if schema is not None else (tables[0].schema if tables else Schema(()))

    for table in tables:
        if table.schema != expected:
            msg = "provider results don't share the result schema"
            raise SchemaMismatch(msg, table.schema.names, expected.names)

    rows = [row for table in tables for row in table.rows]
    order = rng.permutation(len(rows))

    return Table(expected, tuple(rows[i] for i in order))
