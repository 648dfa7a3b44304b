"""Deterministic CSV/JSON emission."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .dyadic import format_rational


def _plain(obj):
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj, indent=None) -> str:
    return json.dumps(obj, default=_plain, sort_keys=True, ensure_ascii=False, allow_nan=False,
                      indent=indent, separators=(",", ":") if indent is None else (",", ": "))


def config_hash(config) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def version() -> str:
    return f"v{__version__}"


def make_report(command: str, config, results, violations=()) -> dict:
    return {"command": command, "config": config, "config_hash": config_hash(config),
            "version": version(), "results": results, "violations": list(violations)}


def format_value(v) -> str:
    if isinstance(v, Fraction):
        return format_rational(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_value(v) for v in r])
    return buf.getvalue()


def _write(path, text):
    p = Path(path)
    try:
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {p}: {exc.strerror or exc}") from exc


def write_csv(path, header, rows) -> None:
    _write(path, csv_text(header, rows))


def write_json(path, report) -> None:
    _write(path, canonical_json(report, indent=2) + "\n")
