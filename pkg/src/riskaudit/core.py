"""Shared plumbing: error types, the undefined-value marker, digests, canonical JSON."""

import hashlib
import json
import math


class AuditError(Exception):
    """Base class for all riskaudit errors."""

    exit_code = 2


class ValidationError(AuditError):
    """Invalid configuration, schema, or arguments."""

    exit_code = 1


class DataError(AuditError):
    """Malformed, inconsistent, or misaligned input data."""

    exit_code = 2


# Marker for rates whose denominator is empty.  It deliberately propagates
# through arithmetic (NaN semantics) and renders as "n/a" / JSON null, so a
# missing denominator can never masquerade as a zero disparity.
UNDEFINED = float("nan")


def is_defined(value) -> bool:
    """True when ``value`` is a concrete number (not None and not NaN)."""
    if value is None:
        return False
    try:
        return not math.isnan(value)
    except TypeError:
        return True


def json_ready(obj):
    """Recursively convert ``obj`` into plain JSON-serializable values.

    NaN and infinities become None, numpy scalars/arrays become Python
    numbers/lists, and tuples become lists.  Dict keys are coerced to str.
    """
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "item") and not isinstance(obj, (dict, list, tuple)):
        return json_ready(obj.item())
    if hasattr(obj, "tolist"):
        return json_ready(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    raise TypeError(f"cannot serialize value of type {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Deterministic compact JSON used for digests."""
    return json.dumps(json_ready(obj), sort_keys=True, separators=(",", ":"))


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def dump_json_bytes(obj) -> bytes:
    """Stable pretty-printed JSON bytes (sorted keys, trailing newline)."""
    return (json.dumps(json_ready(obj), sort_keys=True, indent=2) + "\n").encode("utf-8")


def write_json(path, obj) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_json_bytes(obj))


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
