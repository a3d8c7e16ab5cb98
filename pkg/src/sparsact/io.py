"""Problem files and result files.

Problem files are JSON documents. Complex matrices are nested row lists of
``[re, im]`` pairs; the 0/1 mask ``E`` is a plain nested list. Output is
canonical (sorted keys, floats printed with 17 significant digits) so that
a parse/serialize round trip is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, SparsactError
from .linalg import CompletionData, PlantModel

__all__ = [
    "Problem",
    "encode_matrix",
    "decode_matrix",
    "canonical_dumps",
    "write_atomic",
    "write_csv",
    "problem_to_doc",
    "parse_problem",
    "load_problem",
    "save_problem",
]

_UMASK = os.umask(0)
os.umask(_UMASK)

KINDS = ("actuator", "completion", "sensor")
_REQUIRED = {
    "actuator": ("A", "B", "Q", "R", "V"),
    "completion": ("A", "B", "C", "Q", "R", "V", "E", "G"),
    "sensor": ("A", "C", "V", "R"),
}


@dataclass(frozen=True, eq=False)
class Problem:
    """A parsed problem file.

    For ``kind == "sensor"`` the matrices are the estimation data
    (``A`` = plant, ``C`` = sensors, ``V`` = process noise, ``R`` = sensor
    noise) and ``model`` is ``None``; use
    :func:`sparsact.selection.sensor_dual` to obtain the actuator model.
    """

    kind: str
    matrices: dict
    model: PlantModel | None = None
    data: CompletionData | None = None


def encode_matrix(M) -> list:
    M = np.atleast_2d(np.asarray(M, dtype=np.complex128))
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def decode_matrix(obj, name: str, real_only: bool = False) -> np.ndarray:
    """Inverse of :func:`encode_matrix`; ``real_only`` accepts plain numbers."""
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"field {name!r}: not a rectangular numeric array") from None
    if real_only:
        if arr.ndim != 2:
            raise InputError(f"field {name!r}: expected a 2-D array of numbers")
        out = arr
    else:
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise InputError(f"field {name!r}: expected rows of [re, im] pairs")
        out = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(arr)):
        raise InputError(f"field {name!r}: contains NaN or Inf")
    return out


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    s = "%.17g" % x
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _emit(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, (bool, np.bool_)) or obj is None:
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_dumps(obj) -> str:
    """Compact JSON with sorted keys and ``%.17g`` floats."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, columns, rows) -> None:
    """Atomically write dict rows under a fixed header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row[c]) for c in columns])
    write_atomic(path, buf.getvalue())


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return v


def problem_to_doc(kind: str, matrices: dict) -> dict:
    if kind not in KINDS:
        raise InputError(f"field 'kind': must be one of {KINDS}")
    doc = {"kind": kind}
    A = np.asarray(matrices["A"])
    doc["n"] = int(A.shape[0])
    if "B" in matrices:
        doc["m"] = int(np.asarray(matrices["B"]).shape[1])
    if "C" in matrices:
        doc["p"] = int(np.asarray(matrices["C"]).shape[0])
    for key, M in matrices.items():
        if key == "E":
            doc["E"] = [[int(v) for v in row] for row in np.asarray(M).real.astype(int)]
        else:
            doc[key] = encode_matrix(M)
    return doc


def parse_problem(doc) -> Problem:
    """Validate a problem document and build the model objects.

    Raises
    ------
    InputError
        Naming the offending field.
    """
    if not isinstance(doc, dict):
        raise InputError("problem file must contain a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise InputError(f"field 'kind': must be one of {KINDS}, got {kind!r}")
    mats = {}
    for key in _REQUIRED[kind]:
        if key not in doc:
            raise InputError(f"field {key!r}: missing (required for kind={kind})")
    for key in ("A", "B", "C", "V", "Q", "R", "G"):
        if key in doc:
            mats[key] = decode_matrix(doc[key], key)
    if "E" in doc:
        mats["E"] = decode_matrix(doc["E"], "E", real_only=True)
    n = mats["A"].shape[0]
    for key, expect in (("n", n), ("m", mats["B"].shape[1] if "B" in mats else None),
                        ("p", mats["C"].shape[0] if "C" in mats else None)):
        if key in doc and expect is not None and doc[key] != expect:
            raise InputError(f"field {key!r}: declared {doc[key]} but matrices imply {expect}")
    if kind == "sensor":
        return Problem(kind, mats)
    C = mats.get("C", np.eye(n))
    try:
        model = PlantModel(A=mats["A"], B=mats["B"], C=C, V=mats["V"], Q=mats["Q"], R=mats["R"])
        data = CompletionData(E=mats["E"], G=mats["G"]) if kind == "completion" else None
    except (ValueError, SparsactError) as exc:
        raise InputError(str(exc)) from exc
    return Problem(kind, mats, model, data)


def load_problem(path) -> Problem:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return parse_problem(doc)


def save_problem(path, kind: str, matrices: dict) -> None:
    write_atomic(path, canonical_dumps(problem_to_doc(kind, matrices)))
