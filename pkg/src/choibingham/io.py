"""File formats: channel and counts JSON, metadata-tagged CSV, key-value configs."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

FLOAT_FMT = ".17g"


# --------------------------------------------------------------------------
# JSON with full-precision floats
# --------------------------------------------------------------------------

def _fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, FLOAT_FMT)


def _encode(obj, indent, level):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[" + pad + ("," + pad).join(parts) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent=2):
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read JSON from {path}: {exc}") from None


# --------------------------------------------------------------------------
# metadata
# --------------------------------------------------------------------------

def config_hash(config):
    text = "\n".join(f"{k}={config[k]}" for k in sorted(config))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def metadata(command, config, seed):
    return {"command": command, "config_hash": config_hash(config),
            "seed": seed, "version": __version__}


# --------------------------------------------------------------------------
# channels and counts
# --------------------------------------------------------------------------

def channel_to_dict(choi, meta=None, **extra):
    choi = np.asarray(choi, dtype=complex)
    n = int(round(math.sqrt(choi.shape[0])))
    out = {"dim": n, "choi_re": choi.real, "choi_im": choi.imag}
    out.update(extra)
    if meta is not None:
        out["meta"] = meta
    return out


def channel_from_dict(obj):
    try:
        n = int(obj["dim"])
        choi = np.array(obj["choi_re"], dtype=float) + 1j * np.array(obj["choi_im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed channel JSON: {exc}") from None
    if choi.shape != (n * n, n * n):
        raise ConfigError("channel JSON matrix shape does not match dim")
    return choi


def write_channel(path, choi, meta=None, **extra):
    write_json(path, channel_to_dict(choi, meta, **extra))


def read_channel(path):
    return channel_from_dict(read_json(path))


def counts_to_dict(design_name, n_per_setting, x, seed, meta=None):
    out = {"design": design_name, "n_per_setting": int(n_per_setting),
           "x": [int(v) for v in x], "seed": seed}
    if meta is not None:
        out["meta"] = meta
    return out


def read_counts(path):
    obj = read_json(path)
    try:
        design = str(obj["design"])
        n = int(obj["n_per_setting"])
        x = [int(v) for v in obj["x"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed counts JSON: {exc}") from None
    return design, n, x, obj.get("seed")


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt_float(v) if math.isfinite(v) else "nan"
    return str(v)


def csv_text(header, rows, meta=None):
    lines = []
    if meta is not None:
        lines.append("# " + " ".join(f"{k}={meta[k]}" for k in meta))
    lines.append(",".join(header))
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, meta=None):
    Path(path).write_text(csv_text(header, rows, meta), encoding="utf-8", newline="\n")


def read_csv(path):
    """Header and rows (as strings), skipping ``#`` comment lines."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines()
             if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"{path} has no header row")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def read_csv_column(path, column):
    header, rows = read_csv(path)
    if column not in header:
        raise ConfigError(f"{path} has no column {column!r}")
    j = header.index(column)
    return np.array([float(r[j]) for r in rows])


# --------------------------------------------------------------------------
# key = value configs
# --------------------------------------------------------------------------

def parse_config(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = value
    return out


def read_config(path):
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
