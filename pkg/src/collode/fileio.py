"""CSV and key-value text helpers shared by datasets, traces, and run summaries."""

import json

import numpy as np

# All floating-point text output carries 17 significant digits so that
# float64 values round-trip exactly.
FLOAT_FMT = "%.17g"


def format_float(x):
    return FLOAT_FMT % float(x)


def write_table(path, header, rows):
    """Write a comma-delimited table; floats get the round-trip format."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(x) for x in row) + "\n")


def read_table(path):
    """Read a comma-delimited table written by :func:`write_table`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def trajectory_header(dim):
    return ["t"] + [f"y{k}" for k in range(dim)]


def write_trajectory(path, times, states):
    states = np.atleast_2d(states)
    rows = np.column_stack([times, states])
    write_table(path, trajectory_header(states.shape[1]), rows)


def read_trajectory(path):
    header, data = read_table(path)
    if not header or header[0] != "t":
        raise ValueError(f"{path}: expected a trajectory header starting with 't'")
    return data[:, 0], data[:, 1:]


def write_kv(path, mapping):
    """Write a flat ``key = value`` text file (floats in round-trip format)."""
    with open(path, "w") as fh:
        for key, value in mapping.items():
            if isinstance(value, float):
                value = format_float(value)
            fh.write(f"{key} = {value}\n")


def read_kv(path):
    """Read a flat ``key = value`` text file; values stay as strings."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: malformed line {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_json(path, record):
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
