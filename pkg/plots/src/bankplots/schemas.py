"""CSV input schemas and strict header validation.

Every figure kind reads one or two of these tables.  A file whose header
deviates from the documented schema is rejected with the exact column
difference; silently tolerating extra or missing columns would let a
mislabeled file render a wrong figure.
"""

import csv

SCHEMAS = {
    "grid": ["t", "N", "S", "m"],
    "events": ["t", "kind", "id", "reserve"],
    "fan": ["t", "N", "mean", "q05", "q95", "limit", "null_count"],
    "histogram": ["N", "run", "d_N"],
    "snapshot": ["t", "particle_index", "reserve"],
}


class SchemaError(ValueError):
    """CSV header does not match the documented schema."""


def read_table(path, schema_name):
    """Read a CSV into a dict of column name -> list of raw strings.

    The header must equal SCHEMAS[schema_name] exactly (order included).
    Blank cells stay as empty strings; callers decide how to treat them.
    """
    expected = SCHEMAS[schema_name]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header "
                              f"{','.join(expected)}") from None
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            parts = [f"{path}: header mismatch for '{schema_name}'"]
            if missing:
                parts.append(f"missing columns: {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected columns: {', '.join(extra)}")
            if not missing and not extra:
                parts.append(f"column order must be {','.join(expected)}")
            raise SchemaError("; ".join(parts))
        columns = {name: [] for name in expected}
        for row in reader:
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}: row with {len(row)} cells, "
                                  f"expected {len(expected)}")
            for name, cell in zip(expected, row):
                columns[name].append(cell)
    return columns


def floats(cells):
    """Parse a string column to floats, mapping blanks to NaN."""
    return [float(c) if c != "" else float("nan") for c in cells]
