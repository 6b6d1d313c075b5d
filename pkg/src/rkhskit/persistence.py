"""Model files and CSV data.

Models are JSON documents tagged with a ``format`` version.  Arrays are stored
as base64 little-endian float64 with an explicit shape, so a save/load cycle
reproduces every bit.
"""
from __future__ import annotations

import base64
import csv
import io
import json
import os

import numpy as np

from .errors import InputError
from .kernels import kernel_from_dict, kernel_to_dict
from .koopman import KoopmanModel, Trajectory, fit_koopman
from .ridge import KrrModel, NystromModel, SpdSolveReport
from .vvridge import VvKrrModel

__all__ = [
    "encode_array",
    "decode_array",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "read_csv",
    "write_csv",
    "FORMATS",
]

FORMATS = ("krr-v1", "nystrom-v1", "vvkrr-v1", "koopman-v1")


def encode_array(a) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj, dtype="<f8") -> np.ndarray:
    try:
        raw = base64.b64decode(obj["data"], validate=True)
        shape = tuple(int(s) for s in obj["shape"])
        arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"corrupt array in model file: {exc}") from exc
    return arr.astype(np.float64 if dtype == "<f8" else np.int64)


def model_to_dict(model) -> dict:
    if isinstance(model, KrrModel):
        return {
            "format": "krr-v1",
            "kernel": kernel_to_dict(model.kernel),
            "lambda": model.lam,
            "support_points": encode_array(model.support_points),
            "coefficients": encode_array(model.coefficients),
        }
    if isinstance(model, NystromModel):
        return {
            "format": "nystrom-v1",
            "kernel": kernel_to_dict(model.kernel),
            "lambda": model.lam,
            "centers": encode_array(model.centers),
            "coefficients": encode_array(model.coefficients),
            "center_indices": [int(i) for i in model.center_indices],
        }
    if isinstance(model, VvKrrModel):
        return {
            "format": "vvkrr-v1",
            "kernel": kernel_to_dict(model.scalar_kernel),
            "lambda": model.lam,
            "support_points": encode_array(model.support_points),
            "coefficients": encode_array(model.coefficients),
            "output_operator": encode_array(model.output_operator),
            "n_outputs": int(model.n_outputs),
        }
    if isinstance(model, KoopmanModel):
        return {
            "format": "koopman-v1",
            "kernel": kernel_to_dict(model.kernel),
            "lambda": model.lam,
            "inputs": encode_array(model.inputs),
            "outputs": encode_array(model.outputs),
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(obj):
    if not isinstance(obj, dict):
        raise InputError("model file must contain a JSON object")
    fmt = obj.get("format")
    if fmt not in FORMATS:
        raise InputError(f"unsupported model format {fmt!r}; expected one of {', '.join(FORMATS)}")
    try:
        kernel = kernel_from_dict(obj["kernel"])
        lam = float(obj["lambda"])
        if fmt == "krr-v1":
            return KrrModel(decode_array(obj["support_points"]), decode_array(obj["coefficients"]),
                            lam, kernel, SpdSolveReport(0.0, 0))
        if fmt == "nystrom-v1":
            return NystromModel(decode_array(obj["centers"]), decode_array(obj["coefficients"]), lam,
                                kernel, np.asarray(obj["center_indices"], dtype=np.int64))
        if fmt == "vvkrr-v1":
            coef = decode_array(obj["coefficients"])
            if coef.ndim != 2 or coef.shape[1] != int(obj["n_outputs"]):
                raise InputError("coefficient shape does not match n_outputs")
            return VvKrrModel(decode_array(obj["support_points"]), coef, lam, kernel,
                              decode_array(obj["output_operator"]))
        # koopman: the factorization is rebuilt from the snapshots
        traj = Trajectory.from_pairs(decode_array(obj["inputs"]), decode_array(obj["outputs"]))
        return fit_koopman(traj, kernel, lam)
    except KeyError as exc:
        raise InputError(f"model file is missing field {exc}") from exc


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    return model_from_dict(obj)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path, min_cols: int = 1):
    """Read a numeric CSV with an optional header row.

    Returns ``(array, header)`` where ``header`` is a list of names or None.
    Bad cells raise :class:`InputError` naming the row and column (1-based).
    """
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    header = None
    if rows and not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        start = 2
    else:
        start = 1
    if not rows:
        width = len(header) if header else 0
        return np.empty((0, width)), header
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + start
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {line}, column {j + 1}: cannot parse {cell.strip()!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value")
            out[i, j] = v
    if width < min_cols:
        raise InputError(f"{path}: need at least {min_cols} columns, got {width}")
    return out, header


def write_csv(path, array, header=None) -> None:
    """Write rows using shortest round-trip float formatting."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in arr:
        w.writerow([repr(float(v)) for v in row])
    data = buf.getvalue()
    if path in (None, "-"):
        import sys

        sys.stdout.write(data)
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)
