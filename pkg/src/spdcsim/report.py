"""CSV output with a ``#``-prefixed provenance block."""
from __future__ import annotations

import csv
import io
import shlex
from pathlib import Path

from . import __version__
from .params import SourceParams


def fmt(value) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float) or hasattr(value, "dtype"):
        return repr(float(value))
    return str(value)


def render(columns, rows, *, argv=None, params: SourceParams | None = None, seed=None,
           notes=None, tables=()) -> str:
    """Provenance header, then one or more CSV tables separated by blank lines."""
    buf = io.StringIO()
    buf.write(f"# spdcsim {__version__}\n")
    if argv is not None:
        buf.write(f"# command: spdcsim {shlex.join(argv)}\n")
    if seed is not None:
        buf.write(f"# seed: {seed}\n# generator: Philox\n")
    if params is not None:
        buf.write(f"# params_hash: {params.params_hash()}\n")
        for key, value in params.as_items():
            buf.write(f"# param {key} = {value}\n")
    for line in notes or ():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for k, (cols, rws) in enumerate([(columns, rows), *tables]):
        if k:
            buf.write("\n")
        writer.writerow(cols)
        for row in rws:
            values = [row.get(c) for c in cols] if isinstance(row, dict) else list(row)
            writer.writerow([fmt(v) for v in values])
    return buf.getvalue()


def data_section(text: str) -> str:
    """Everything after the provenance block."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def header_command(text: str) -> list[str] | None:
    for line in text.splitlines():
        if line.startswith("# command: spdcsim "):
            return shlex.split(line[len("# command: spdcsim "):])
    return None


def read_table(path: "str | Path") -> list[dict[str, str]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write(text: str, out: "str | Path | None") -> None:
    if out is None or str(out) == "-":
        import sys

        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
