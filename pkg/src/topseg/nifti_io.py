"""NIfTI-1 single-file reader/writer plus a raw fixture format.

Only NIfTI-1 ``.nii`` (optionally gzipped) is supported; NIfTI-2 and
``.hdr``/``.img`` pairs are rejected. Voxel data is stored x-fastest
(Fortran order), matching the package-wide axis convention.

The fixture format is a little-endian float32 (or uint8 for labels) raw file
with a text sidecar carrying dims/spacing, so tests never need NIfTI tooling:

    <name>.raw        raw voxels, Fortran order
    <name>.raw.txt    lines "kind: gray|labels", "dims: x y z",
                      "spacing: sx sy sz" (optional), "alphabet: A B C"
"""

from __future__ import annotations

import gzip
import struct
import zlib
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import NiftiError
from .grid import BinaryMask, GrayImage, LabelMap

HEADER_SIZE = 348
_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_CODES = {np.dtype(np.uint8): 2, np.dtype(np.float32): 16}

Image = Union[GrayImage, LabelMap]


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise NiftiError("gzip", f"corrupt gzip stream: {exc}") from exc
    return raw


def load_nifti(path) -> Tuple[Image, dict]:
    """Load a NIfTI-1 volume as a GrayImage (or LabelMap for integer data).

    Returns (image, metadata); metadata holds the raw header fields needed to
    interpret the file (datatype, dim, pixdim, scl_slope/inter, descrip).
    """
    path = Path(path)
    if not path.exists():
        raise NiftiError("path", f"file not found: {path}")
    raw = _read_bytes(path)
    if len(raw) < HEADER_SIZE:
        raise NiftiError("sizeof_hdr", f"file shorter than the {HEADER_SIZE}-byte header")

    for endian in ("<", ">"):
        sizeof_hdr = struct.unpack(endian + "i", raw[0:4])[0]
        if sizeof_hdr == HEADER_SIZE:
            break
    else:
        raise NiftiError("sizeof_hdr", f"malformed header (sizeof_hdr={struct.unpack('<i', raw[0:4])[0]}, expected {HEADER_SIZE})")

    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise NiftiError("magic", f"not a NIfTI-1 file (magic={magic!r})")
    if magic == b"ni1\x00":
        raise NiftiError("magic", "detached .hdr/.img pairs are not supported")

    dim = struct.unpack(endian + "8h", raw[40:56])
    datatype = struct.unpack(endian + "h", raw[70:72])[0]
    bitpix = struct.unpack(endian + "h", raw[72:74])[0]
    pixdim = struct.unpack(endian + "8f", raw[76:108])
    vox_offset = struct.unpack(endian + "f", raw[108:112])[0]
    scl_slope = struct.unpack(endian + "f", raw[112:116])[0]
    scl_inter = struct.unpack(endian + "f", raw[116:120])[0]
    descrip = raw[148:228].split(b"\x00", 1)[0].decode("latin-1", "replace")

    if datatype not in _DTYPES:
        raise NiftiError("datatype", f"unsupported datatype code {datatype}")
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiError("dim", f"invalid dim[0]={ndim}")
    extents = [max(1, dim[i + 1]) for i in range(ndim)]
    while len(extents) > 2 and extents[-1] == 1:  # squeeze trailing singletons
        extents.pop()
    if len(extents) not in (2, 3):
        raise NiftiError("dim", f"rank {len(extents)} not supported (need 2 or 3)")

    dtype = np.dtype(_DTYPES[datatype]).newbyteorder(endian)
    count = int(np.prod(extents))
    offset = int(vox_offset) if vox_offset else HEADER_SIZE
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = data.reshape(extents, order="F").astype(np.float64)
    if scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0):
        data = data * scl_slope + scl_inter
    spacing = tuple(float(pixdim[i + 1]) for i in range(len(extents)))

    meta = {
        "datatype": datatype,
        "bitpix": bitpix,
        "dim": dim,
        "pixdim": pixdim,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "descrip": descrip,
    }
    if datatype in (2, 4, 8) and scl_slope in (0.0, 1.0) and scl_inter == 0.0:
        alphabet = _alphabet_from_descrip(descrip)
        if alphabet is not None:
            return LabelMap(data.astype(np.int64), alphabet), meta
    return GrayImage(data, spacing), meta


def _alphabet_from_descrip(descrip: str) -> Optional[Tuple[str, ...]]:
    if descrip.startswith("topseg-labels:"):
        names = descrip.split(":", 1)[1].strip()
        return tuple(n for n in names.split(",") if n)
    return None


def save_nifti(img: Image, path) -> None:
    """Write a NIfTI-1 file (gzipped when the path ends in .gz).

    GrayImage is stored as float32, LabelMap as uint8 with the alphabet
    recorded in descrip so load_nifti round-trips the class names.
    """
    path = Path(path)
    if isinstance(img, LabelMap):
        data = img.data.astype(np.uint8)
        descrip = "topseg-labels:" + ",".join(img.alphabet)
        spacing = None
    else:
        data = img.data.astype(np.float32)
        descrip = ""
        spacing = img.spacing

    code = _CODES[data.dtype]
    bitpix = data.dtype.itemsize * 8
    ndim = data.ndim
    dim = [ndim] + list(data.shape) + [1] * (7 - ndim)
    pixdim = [0.0] + (list(spacing) if spacing else [1.0] * ndim) + [1.0] * (7 - ndim)

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<f", hdr, 108, float(HEADER_SIZE + 4))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    hdr[148:148 + min(79, len(descrip))] = descrip.encode("latin-1")[:79]
    hdr[344:348] = b"n+1\x00"

    payload = bytes(hdr) + b"\x00\x00\x00\x00" + data.tobytes(order="F")
    try:
        if path.suffix == ".gz":
            path.write_bytes(gzip.compress(payload, mtime=0))
        else:
            path.write_bytes(payload)
    except OSError as exc:
        raise NiftiError("path", f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# raw fixture format


def save_raw(img: Image, path) -> None:
    path = Path(path)
    lines = []
    if isinstance(img, LabelMap):
        data = img.data.astype(np.uint8)
        lines.append("kind: labels")
        lines.append("alphabet: " + " ".join(img.alphabet))
    else:
        data = img.data.astype("<f4")
        lines.append("kind: gray")
        if img.spacing is not None:
            lines.append("spacing: " + " ".join(str(s) for s in img.spacing))
    lines.insert(1, "dims: " + " ".join(str(e) for e in data.shape))
    path.write_bytes(data.tobytes(order="F"))
    Path(str(path) + ".txt").write_text("\n".join(lines) + "\n")


def load_raw(path) -> Image:
    path = Path(path)
    meta = {}
    for line in Path(str(path) + ".txt").read_text().splitlines():
        if ":" in line:
            key, val = line.split(":", 1)
            meta[key.strip()] = val.strip()
    dims = tuple(int(v) for v in meta["dims"].split())
    if meta.get("kind") == "labels":
        data = np.frombuffer(path.read_bytes(), dtype=np.uint8)
        alphabet = tuple(meta.get("alphabet", "").split())
        return LabelMap(data.reshape(dims, order="F").astype(np.int64), alphabet)
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    spacing = None
    if "spacing" in meta:
        spacing = tuple(float(v) for v in meta["spacing"].split())
    return GrayImage(data.reshape(dims, order="F").astype(np.float64), spacing)


def load_image(path) -> Image:
    """Dispatch on extension: .nii/.nii.gz via NIfTI, .raw via the fixture format."""
    p = str(path)
    if p.endswith(".raw"):
        return load_raw(path)
    img, _ = load_nifti(path)
    return img
