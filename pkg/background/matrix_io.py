import os
import struct

import numpy as np
import pandas as pd


HEADER = struct.Struct("<QQ")


def write_matrix_csv(matrix, output_path):
    matrix = np.atleast_2d(np.asarray(matrix))
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    pd.DataFrame(matrix).to_csv(output_path, header=False, index=False, float_format="%.17g")
    return output_path


def read_matrix_csv(path):
    return pd.read_csv(path, header=None).to_numpy(dtype=float)


def matrix_to_bytes(matrix):
    """Little-endian block: [u64 rows][u64 cols][f64 data row-major]."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype="<f8"))
    rows, cols = matrix.shape
    return HEADER.pack(rows, cols) + np.ascontiguousarray(matrix).tobytes()


def matrix_from_bytes(buffer, offset=0):
    """Returns (matrix, next_offset)."""
    rows, cols = HEADER.unpack_from(buffer, offset)
    start = offset + HEADER.size
    stop = start + 8 * rows * cols
    if stop > len(buffer):
        raise ValueError(f"binary block truncated: need {stop} bytes, have {len(buffer)}")
    data = np.frombuffer(buffer[start:stop], dtype="<f8").reshape(rows, cols).copy()
    return data, stop


def write_matrix_binary(matrix, output_path):
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "wb") as f:
        f.write(matrix_to_bytes(matrix))
    return output_path


def read_matrix_binary(path):
    with open(path, "rb") as f:
        matrix, _ = matrix_from_bytes(f.read())
    return matrix
