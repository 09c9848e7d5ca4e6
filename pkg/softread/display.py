"""Output formatting for result tables."""
import csv
import io
import json
from pathlib import Path
from typing import Optional, Sequence


def format_value(value) -> str:
    """CSV cell text; floats keep full precision, None is an empty cell."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_csv(rows: list[dict], header: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(row.get(column)) for column in header])
    return buffer.getvalue()


def format_json(rows: list[dict], header: Sequence[str]) -> str:
    """JSON list of objects with keys in header order."""
    ordered = [{column: row.get(column) for column in header} for row in rows]
    return json.dumps(ordered, indent=2) + "\n"


def format_rows(rows: list[dict], header: Sequence[str], fmt: str = "csv") -> str:
    if fmt == "json":
        return format_json(rows, header)
    if fmt == "csv":
        return format_csv(rows, header)
    raise ValueError(f"unknown output format {fmt!r}")


def report_path(output: Path, fmt: str) -> Path:
    """<stem>.report.<fmt> next to a tabulation file."""
    output = Path(output)
    return output.with_name(f"{output.stem}.report.{fmt}")


def write_rows(
    rows: list[dict],
    header: Sequence[str],
    fmt: str = "csv",
    path: Optional[Path] = None,
):
    """Write formatted rows to `path`, or print them to stdout."""
    text = format_rows(rows, header, fmt)
    if path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        print(text, end="")
