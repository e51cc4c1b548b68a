"""Deterministic, exact tensor (de)serialization for checkpoints.

float64 arrays round-trip bit-exactly via base64 of their raw little-
endian bytes; output bytes depend only on the values, never on wall
clock, so identical runs produce identical files.
"""

from __future__ import annotations

import base64
import json

import numpy as np


def array_to_obj(a):
    a = np.ascontiguousarray(a)
    return {
        "dtype": str(a.dtype),
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype(a.dtype.newbyteorder("<")).tobytes()).decode(),
    }


def obj_to_array(obj):
    dtype = np.dtype(obj["dtype"]).newbyteorder("<")
    a = np.frombuffer(base64.b64decode(obj["data"]), dtype=dtype)
    return a.reshape(obj["shape"]).astype(obj["dtype"]).copy()


def arrays_to_obj(arrays):
    return {name: array_to_obj(a) for name, a in arrays.items()}


def obj_to_arrays(obj):
    return {name: obj_to_array(o) for name, o in obj.items()}


def dump_json(doc, path):
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


def load_json(path):
    with open(path) as f:
        return json.load(f)
