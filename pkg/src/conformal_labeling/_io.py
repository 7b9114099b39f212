"""CSV ingestion with file/line/column error reporting."""

import csv
import hashlib
import math
import re
from pathlib import Path

from . import _rng
from .errors import ValidationError

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}

# SeedSequence label for the calibration/test split.
_SPLIT_STREAM = 0x5B117


class Table:
    """Rows of a header-first CSV file, remembering source line numbers."""

    def __init__(self, path, header, rows, lines):
        self.path = str(path)
        self.header = header
        self.rows = rows
        self.lines = lines

    def __len__(self):
        return len(self.rows)

    def has(self, *columns):
        return all(c in self.header for c in columns)

    def require(self, *columns):
        missing = [c for c in columns if c not in self.header]
        if missing:
            raise ValidationError(f"{self.path}: missing column(s) {', '.join(missing)}")

    def _where(self, i, column):
        return f"{self.path}, line {self.lines[i]}, column {column!r}"

    def text(self, i, column):
        return self.rows[i][column]

    def float(self, i, column):
        raw = self.rows[i][column]
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ValidationError(f"{self._where(i, column)}: not a number: {raw!r}") from None
        if not math.isfinite(value):
            raise ValidationError(f"{self._where(i, column)}: non-finite value {raw!r}")
        return value

    def bool(self, i, column):
        raw = (self.rows[i][column] or "").strip().lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ValidationError(f"{self._where(i, column)}: not a boolean: {self.rows[i][column]!r}")

    def column_floats(self, column):
        return [self.float(i, column) for i in range(len(self))]

    def subset(self, indices):
        return Table(self.path, self.header, [self.rows[i] for i in indices],
                     [self.lines[i] for i in indices])


def read_table(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise ValidationError(f"{path}: empty file or missing header row")
        rows, lines = [], []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise ValidationError(f"{path}, line {reader.line_num}: wrong number of fields")
            rows.append(row)
            lines.append(reader.line_num)
    return Table(path, list(header), rows, lines)


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def indexed_columns(table, prefix):
    """Columns named ``prefix0..prefix{K-1}`` in index order, or ``[]``."""
    pattern = re.compile(re.escape(prefix) + r"(\d+)$")
    found = {int(mt.group(1)): c for c in table.header if (mt := pattern.match(c))}
    if not found:
        return []
    if sorted(found) != list(range(len(found))):
        raise ValidationError(f"{table.path}: {prefix}* columns must be numbered 0..K-1 without gaps")
    return [found[k] for k in range(len(found))]


def correctness(table):
    """Per-row correctness from ``correct`` or from ``label`` == ``predicted``."""
    if table.has("correct"):
        return [table.bool(i, "correct") for i in range(len(table))]
    if table.has("label", "predicted"):
        return [table.text(i, "label").strip() == table.text(i, "predicted").strip()
                for i in range(len(table))]
    return None


def split_indices(count, fraction, seed):
    """Reproducibly split ``range(count)`` into calibration and test indices."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"split fraction must lie in (0, 1), got {fraction!r}")
    if count < 2:
        raise ValidationError("need at least two rows to split")
    n_cal = min(max(int(math.floor(fraction * count + 0.5)), 1), count - 1)
    perm = _rng.generator(seed, _SPLIT_STREAM).permutation(count)
    return sorted(int(i) for i in perm[:n_cal]), sorted(int(i) for i in perm[n_cal:])
