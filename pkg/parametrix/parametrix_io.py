import json
import os
import struct

from background.lattice import LatticeSpace
from background.matrix_io import matrix_from_bytes, matrix_to_bytes
from common.errors import LatticeError
from parametrix.green import Parametrix


LENGTH = struct.Struct("<Q")


def parametrix_header(P: Parametrix, order=None):
    return {
        "background_id": P.background_id,
        "nu": P.ref_length_nu,
        "order": order,
        "is_exact_green": P.is_exact_green,
        "site_count": P.lattice.site_count,
        "label": P.label,
        "smooth_shift": P.smooth_shift is not None,
    }


def write_parametrix(P: Parametrix, output_path, order=None):
    """[u64 header length][JSON header][kernel block][smooth shift block, when flagged]."""
    header = json.dumps(parametrix_header(P, order), sort_keys=True).encode("utf-8")
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "wb") as f:
        f.write(LENGTH.pack(len(header)))
        f.write(header)
        f.write(matrix_to_bytes(P.kernel))
        if P.smooth_shift is not None:
            f.write(matrix_to_bytes(P.smooth_shift))
    return output_path


def read_parametrix(path, lattice: LatticeSpace) -> Parametrix:
    with open(path, "rb") as f:
        buffer = f.read()

    (length,) = LENGTH.unpack_from(buffer, 0)
    header = json.loads(buffer[LENGTH.size:LENGTH.size + length].decode("utf-8"))
    if header["site_count"] != lattice.site_count:
        raise LatticeError(
            f"parametrix file holds {header['site_count']} sites, lattice has {lattice.site_count}"
        )
    kernel, offset = matrix_from_bytes(buffer, LENGTH.size + length)
    shift = matrix_from_bytes(buffer, offset)[0] if header.get("smooth_shift") else None

    return Parametrix(
        lattice=lattice,
        kernel=kernel,
        ref_length_nu=header["nu"],
        is_exact_green=header["is_exact_green"],
        label=header.get("label", ""),
        background_id=header["background_id"],
        smooth_shift=shift,
    )
