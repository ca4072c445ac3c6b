"""Deterministic JSON / CSV report writing.

Floats are written with 17 significant digits (bit-exact round trip),
complex numbers as ``{"re": .., "im": ..}``, non-finite values as the
strings ``"nan"``, ``"inf"`` and ``"-inf"``.  Keys are sorted and files are
written atomically (temporary file, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

_TAG = "@@f17@@"
_TAGGED = re.compile(r'"' + _TAG + r'([^"]*)"')


def _float(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return _TAG + ("%.17g" % x)


def to_jsonable(obj: Any) -> Any:
    """Plain-JSON view of ``obj`` with floats tagged for 17-digit output."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        c = complex(obj)
        return {"re": _float(c.real), "im": _float(c.imag)}
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2)
    return _TAGGED.sub(lambda m: m.group(1), text) + "\n"


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["%.17g" % v if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
