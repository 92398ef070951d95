import json
import os
import struct

import numpy as np

from background.lattice import LatticeSpace
from background.matrix_io import matrix_from_bytes, matrix_to_bytes
from common.errors import LatticeError
from functionals.polynomial import PolynomialFunctional


FORMAT_VERSION = 1
LENGTH = struct.Struct("<Q")


def functional_header(F: PolynomialFunctional):
    degrees = []
    for k in sorted(F.kernels):
        kernel = F.kernels[k]
        degrees.append({
            "degree": int(k),
            "shape": list(kernel.shape),
            "complex": bool(np.iscomplexobj(kernel)),
        })
    return {
        "format_version": FORMAT_VERSION,
        "background_id": F.lattice.background_id,
        "site_count": F.lattice.site_count,
        "locality": F.locality,
        "jet_order": F.jet_order,
        "degrees": degrees,
    }


def _as_block(kernel):
    kernel = np.asarray(kernel)
    if kernel.ndim == 0:
        return kernel.reshape(1, 1)
    return kernel.reshape(kernel.shape[0], -1)


def functional_to_bytes(F: PolynomialFunctional) -> bytes:
    """[u64 header length][JSON header][per degree: real block, imaginary block if complex]."""
    header = json.dumps(functional_header(F), sort_keys=True).encode("utf-8")
    chunks = [LENGTH.pack(len(header)), header]
    for k in sorted(F.kernels):
        block = _as_block(F.kernels[k])
        chunks.append(matrix_to_bytes(block.real))
        if np.iscomplexobj(block):
            chunks.append(matrix_to_bytes(block.imag))
    return b"".join(chunks)


def functional_from_bytes(buffer: bytes, lattice: LatticeSpace) -> PolynomialFunctional:
    (length,) = LENGTH.unpack_from(buffer, 0)
    offset = LENGTH.size
    header = json.loads(buffer[offset:offset + length].decode("utf-8"))
    offset += length

    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported functional format version {header.get('format_version')}")
    if header["site_count"] != lattice.site_count:
        raise LatticeError(
            f"functional was written on {header['site_count']} sites, lattice has {lattice.site_count}"
        )

    kernels = {}
    for entry in header["degrees"]:
        real, offset = matrix_from_bytes(buffer, offset)
        values = real
        if entry["complex"]:
            imag, offset = matrix_from_bytes(buffer, offset)
            values = real + 1j * imag
        kernels[entry["degree"]] = values.reshape(entry["shape"])

    return PolynomialFunctional(lattice, kernels, header["locality"], header["jet_order"])


def write_functional(F: PolynomialFunctional, output_path):
    os.makedirs(os.path.dirname(output_path) or ".", exist_ok=True)
    with open(output_path, "wb") as f:
        f.write(functional_to_bytes(F))
    return output_path


def read_functional(path, lattice: LatticeSpace) -> PolynomialFunctional:
    with open(path, "rb") as f:
        return functional_from_bytes(f.read(), lattice)
