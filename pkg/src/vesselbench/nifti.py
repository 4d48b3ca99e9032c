"""NIfTI-1 subset reader/writer.

Supported subset: single-file ``.nii``, little-endian, magic ``n+1\\0``,
datatypes uint8 (2), int16 (4) and float32 (16), 3 spatial dimensions.
Detached-header pairs (``ni1\\0``), big-endian files, compression and
NIfTI-2 are out of scope. Orientation fields (qform/sform) are not
interpreted; the raw header is kept on the volume and its orientation
block is copied verbatim when the volume is written back out.

Payload order on disk is x-fastest, which is exactly the package's
canonical layout, so voxel data round-trips bit-for-bit.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, UnsupportedFormatError, ValidationError
from .volume import LabelMask, Volume

HEADER_SIZE = 348
VOX_OFFSET = 352

_DT_UINT8 = 2
_DT_INT16 = 4
_DT_FLOAT32 = 16

_DTYPES = {
    _DT_UINT8: np.dtype("<u1"),
    _DT_INT16: np.dtype("<i2"),
    _DT_FLOAT32: np.dtype("<f4"),
}
_BITPIX = {_DT_UINT8: 8, _DT_INT16: 16, _DT_FLOAT32: 32}

# byte range of the orientation block: qform_code .. srow_z
_ORIENT_SLICE = slice(252, 328)


def read_nifti(path, kind: str | None = None) -> Volume | LabelMask:
    """Read a supported .nii file.

    ``kind`` forces the return type: "volume", "mask", or None to decide
    from the payload (uint8 data that is strictly binary becomes a
    LabelMask).
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"file shorter than the {HEADER_SIZE}-byte header")
    hdr = raw[:HEADER_SIZE]

    (sizeof_hdr,) = struct.unpack_from("<i", hdr, 0)
    if sizeof_hdr != HEADER_SIZE:
        (swapped,) = struct.unpack_from(">i", hdr, 0)
        if swapped == HEADER_SIZE:
            raise UnsupportedFormatError("sizeof_hdr: big-endian files not supported")
        raise FormatError(f"sizeof_hdr: expected {HEADER_SIZE}, got {sizeof_hdr}")

    magic = hdr[344:348]
    if magic == b"ni1\x00":
        raise UnsupportedFormatError("magic: detached header ('ni1') not supported")
    if magic != b"n+1\x00":
        raise FormatError(f"magic: expected 'n+1\\0', got {magic!r}")

    dim = struct.unpack_from("<8h", hdr, 40)
    if dim[0] != 3:
        raise FormatError(f"dim: expected 3 spatial dimensions, got dim[0]={dim[0]}")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise FormatError(f"dim: non-positive extent in dim[1..3]={dim[1:4]}")

    (datatype,) = struct.unpack_from("<h", hdr, 70)
    if datatype not in _DTYPES:
        raise UnsupportedFormatError(
            f"datatype: code {datatype} not supported (uint8/int16/float32 only)"
        )
    (bitpix,) = struct.unpack_from("<h", hdr, 72)
    if bitpix != _BITPIX[datatype]:
        raise FormatError(f"bitpix: {bitpix} inconsistent with datatype {datatype}")

    pixdim = struct.unpack_from("<8f", hdr, 76)
    spacing = (pixdim[1], pixdim[2], pixdim[3])
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise FormatError(f"pixdim: spacing must be finite and > 0, got {spacing}")

    (vox_offset,) = struct.unpack_from("<f", hdr, 108)
    offset = int(vox_offset)
    if offset < HEADER_SIZE:
        raise FormatError(f"vox_offset: {vox_offset} below header size")
    scl_slope, scl_inter = struct.unpack_from("<2f", hdr, 112)

    dtype = _DTYPES[datatype]
    n = nx * ny * nz
    need = offset + n * dtype.itemsize
    if len(raw) < need:
        raise FormatError(f"payload: file has {len(raw)} bytes, need {need}")
    payload = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
    grid = payload.reshape(nz, ny, nx)  # x-fastest on disk

    values = grid.astype(np.float32)
    if scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0):
        values = values * np.float32(scl_slope) + np.float32(scl_inter)
    if not np.isfinite(values).all():
        raise ValidationError("payload contains non-finite voxel values")

    if kind not in (None, "volume", "mask"):
        raise ValueError(f"kind must be 'volume', 'mask' or None, got {kind!r}")
    as_mask = kind == "mask" or (
        kind is None and datatype == _DT_UINT8 and values.max(initial=0) <= 1
    )
    if as_mask:
        if not np.isin(values, (0, 1)).all():
            raise ValidationError("mask payload is not strictly binary")
        return LabelMask(values.astype(np.uint8), spacing, header_meta=hdr)
    return Volume(values, spacing, header_meta=hdr)


def write_nifti(v: Volume | LabelMask, path) -> None:
    """Write a single-file .nii (float32 for volumes, uint8 for masks)."""
    is_mask = isinstance(v, LabelMask)
    datatype = _DT_UINT8 if is_mask else _DT_FLOAT32
    payload = v.data if is_mask else np.ascontiguousarray(v.data, dtype="<f4")

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    nx, ny, nz = v.dims
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, _BITPIX[datatype])
    sx, sy, sz = v.spacing
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into("<b", hdr, 123, 2)  # xyzt_units: mm
    if v.header_meta is not None and len(v.header_meta) == HEADER_SIZE:
        hdr[_ORIENT_SLICE] = v.header_meta[_ORIENT_SLICE]
    hdr[344:348] = b"n+1\x00"

    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(bytes(hdr))
            f.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))  # extension flag
            f.write(payload.tobytes())
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
