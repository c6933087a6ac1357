import hashlib
import os

import numpy as np
import simplejson as json
from munch import Munch


def to_plain(value):
    """
    Convert reports to plain JSON-compatible values: Munch and dicts to dicts,
    numpy scalars and arrays to floats and lists, tuples to lists.
    Non-finite floats are kept, simplejson writes them as null with ignore_nan.
    """
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def canonical_json(data):
    """Sorted, compact JSON text of data, the form that is hashed"""
    return json.dumps(to_plain(data), sort_keys=True, separators=(",", ":"), ignore_nan=True)


def sha256_hex(data):
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def write_json(path, data):
    with open(path, "w") as fp:
        json.dump(to_plain(data), fp, indent=2, sort_keys=True, ignore_nan=True)
        fp.write("\n")
    return path


def read_json(path):
    with open(path) as fp:
        return Munch.fromDict(json.load(fp))


def write_table(path, columns):
    """
    Write a CSV table of equal-length columns
    :param columns: dict name -> 1-d array
    """
    names = list(columns)
    table = np.column_stack([np.asarray(columns[n], dtype=float).ravel() for n in names])
    np.savetxt(path, table, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    return path


def read_table(path):
    with open(path) as fp:
        names = fp.readline().strip().split(",")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Munch({name: table[:, i] for i, name in enumerate(names)})


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def slug(text):
    """A file-name safe form of a job id"""
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in str(text))
