import contextlib
import csv
import math
import sys
from typing import Iterable, Optional, Sequence, Tuple

from core.exceptions import LambdaOUException


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


@contextlib.contextmanager
def open_output(path: Optional[str]):
    """The output file, or standard output when path is None."""
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        yield handle


def write_csv(path: Optional[str], columns: Sequence[str], rows: Iterable[Sequence], quantity: str, units: str,
              identity: Optional[str] = None, notes: Sequence[Tuple[str, object]] = ()):
    """CSV with `#` header lines naming the quantity, its units and the identity it checks."""
    with open_output(path) as handle:
        handle.write(f"# quantity: {quantity}; units: {units}\n")
        if identity:
            handle.write(f"# identity: {identity}\n")
        for key, value in notes:
            handle.write(f"# {key}: {format_value(value)}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def error_payload(exc: BaseException) -> dict:
    detail = exc.message if isinstance(exc, LambdaOUException) else "An unexpected error occurred."
    return {"error": type(exc).__name__, "detail": detail}
