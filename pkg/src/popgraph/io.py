"""Output writers.  Data files are deterministic; timestamps go to a sidecar only."""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

from . import __version__
from .engine import SCHEMA_VERSION


def _open(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="")


class CsvStream:
    """CSV writer that flushes after every row, so a killed sweep leaves a valid prefix."""

    def __init__(self, path: str | Path, columns: Sequence[str]):
        self.columns = list(columns)
        self._fh = _open(path)
        self._w = csv.DictWriter(self._fh, fieldnames=self.columns, lineterminator="\n")
        self._w.writeheader()
        self._fh.flush()

    def write(self, row: dict[str, Any]) -> None:
        self._w.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class JsonlStream:
    def __init__(self, path: str | Path):
        self._fh = _open(path)

    def write_line(self, line: str) -> None:
        self._fh.write(line.rstrip("\n") + "\n")
        self._fh.flush()

    def write(self, obj: Any) -> None:
        self.write_line(json.dumps(obj, sort_keys=True))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def write_json(path: str | Path, obj: Any) -> None:
    with _open(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_metadata(path: str | Path, **fields) -> None:
    """Sidecar with the run timestamp and tool version (the only non-deterministic output)."""
    meta = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "popgraph_version": __version__,
        "schema_version": SCHEMA_VERSION,
    }
    meta.update(fields)
    write_json(path, meta)


def fmt_float(x: float) -> str:
    """Shortest round-trip representation, stable across runs."""
    return repr(float(x))
