"""Deterministic JSON/CSV writers: every float at 17 significant digits."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

__all__ = ["format_float", "dump_json", "dump_csv"]


def format_float(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return f"{x:.17g}"


def _json_chunks(obj, indent: int):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            yield "{}"
            return
        yield "{\n"
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            yield f'{pad}  "{k}": '
            yield from _json_chunks(v, indent + 1)
            yield ",\n" if i + 1 < len(items) else "\n"
        yield pad + "}"
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            yield "[]"
            return
        simple = all(isinstance(v, (int, float, np.integer, np.floating, bool)) for v in seq)
        if simple:
            yield "[" + ", ".join(_scalar(v) for v in seq) + "]"
            return
        yield "[\n"
        for i, v in enumerate(seq):
            yield pad + "  "
            yield from _json_chunks(v, indent + 1)
            yield ",\n" if i + 1 < len(seq) else "\n"
        yield pad + "]"
    else:
        yield _scalar(obj)


def _scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_json(obj, path) -> None:
    Path(path).write_text("".join(_json_chunks(obj, 0)) + "\n")


def dump_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for name in header:
            v = row[name]
            if isinstance(v, (float, np.floating)):
                x = float(v)
                cells.append("inf" if math.isinf(x) else ("nan" if math.isnan(x) else f"{x:.17g}"))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
