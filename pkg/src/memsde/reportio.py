"""Deterministic report writing: every float is serialized with fixed
17-significant-digit formatting so identical runs produce byte-identical
files; all writes are atomic (temp file + rename)."""

import os

import numpy as np

from .errors import ConfigError

SCHEMA = "mem-sde/1"


def format_float(v):
    """Canonical 17-significant-digit decimal text for a float."""
    v = float(v)
    if v != v:
        return '"nan"'
    if v == float("inf"):
        return '"inf"'
    if v == float("-inf"):
        return '"-inf"'
    return f"{v:.17g}"


def _serialize(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"')
                   + '"')
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if not isinstance(k, str):
                k = str(k)
            if i:
                out.append(",")
            _serialize(k, out)
            out.append(":")
            _serialize(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        for i, v in enumerate(seq):
            if i:
                out.append(",")
            _serialize(v, out)
        out.append("]")
    else:
        raise ConfigError(f"cannot serialize {type(obj).__name__}")
    return out


def dumps(obj):
    return "".join(_serialize(obj, []))


def atomic_write_text(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def atomic_write_bytes(path, data):
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def write_report(path, payload):
    """report.json with schema tag; byte-stable for identical payloads."""
    doc = {"schema": SCHEMA}
    doc.update(payload)
    atomic_write_text(path, dumps(doc) + "\n")


def write_csv(path, header, rows):
    """CSV with '.' decimals, a mandatory header row, and '\\n' endings;
    floats use the canonical 17-significant-digit format."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(format_float(v).strip('"'))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_errors_csv(path, taus, w1s, ses, n_effective):
    write_csv(path, ["tau", "w1", "se", "n_effective"],
              zip(taus, w1s, ses, n_effective))


def write_rates_csv(path, fits):
    """fits: list of (model, slope, intercept, residual)."""
    write_csv(path, ["model", "slope", "intercept", "residual"], fits)


def write_manifest(path, files, effective_config):
    """manifest.json listing every artifact plus the effective config."""
    write_report(path, {"files": sorted(files),
                        "effective_config": effective_config})
