import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

from ohlrelay import __version__
from ohlrelay.errors import DomainError

FLOAT_FORMAT = ".12g"


@dataclass
class CsvTable:
    """
    Rows of one experiment with the provenance needed to regenerate them.

    Args:
        header (List[str]): column names.
        rows (List[Sequence]): records, one value per column.
        provenance (Dict[str, Any]): written as ``# key=value`` lines.
    """
    header: List[str]
    rows: List[Sequence[Any]] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)

    def append(self, row: Sequence[Any]) -> None:
        if len(row) != len(self.header):
            raise DomainError(f"Row has {len(row)} values for {len(self.header)} columns.")
        self.rows.append(list(row))

    def column(self, name: str) -> List[Any]:
        index = self.header.index(name)
        return [row[index] for row in self.rows]


def format_value(value: Any) -> str:
    """Stable text form of a CSV cell; floats use ``.12g``."""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, FLOAT_FORMAT)
    if hasattr(value, "dtype"):
        return format_value(value.item())
    return str(value)


def write_csv(table: CsvTable, path: str) -> None:
    """
    Write a table preceded by ``#`` provenance lines.

    Args:
        table (CsvTable): data.
        path (str): output file; parent folders are created.

    Returns:
        None
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    provenance = {"version": __version__, **table.provenance}
    with open(path, "w", newline="", encoding="utf-8") as f:
        for key in sorted(provenance):
            f.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path: str) -> CsvTable:
    """Read a table written by :func:`write_csv`; cells stay strings."""
    provenance = {}
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            provenance[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return CsvTable(header=rows[0], rows=rows[1:], provenance=provenance)


def write_json(document: Any, path: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=4, sort_keys=True)


def finite_or_nan(values: Iterable[float]) -> List[float]:
    return [float(v) if v is not None and math.isfinite(v) else math.nan for v in values]


def shutdown(message):
    """
    Terminates program execution with a reason.

    Args:
        message (str): Reason for termination.
    """
    sys.exit(message)


def stdout_warn(message, category, filename, lineno, file=None, line=None):
    sys.stdout.write(warnings.formatwarning(message, category, filename, lineno))
