"""Reading and writing volumetric files (.nii / .nii.gz and .mha).

Both formats store data x-fastest with an affine mapping (i, j, k) voxel
indices to physical (x, y, z); internally we keep ``(z, y, x)`` arrays and
(z, y, x)-ordered geometry, so the converters below flip axis order at the
boundary. Writers are deterministic (gzip mtime pinned to 0) so artifacts
are byte-identical across reruns.
"""

from __future__ import annotations

import gzip
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError, IoError, VolumeFormatError

# axis-order flip (z,y,x) <-> (x,y,z); involutive
_FLIP = np.asarray([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=np.float64)

_NIFTI_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
}
_NIFTI_CODES = {np.dtype(np.uint8): (2, 8), np.dtype(np.float32): (16, 32)}

_MET_TYPES = {
    "MET_CHAR": np.int8,
    "MET_UCHAR": np.uint8,
    "MET_SHORT": np.int16,
    "MET_USHORT": np.uint16,
    "MET_INT": np.int32,
    "MET_UINT": np.uint32,
    "MET_FLOAT": np.float32,
    "MET_DOUBLE": np.float64,
}
_MET_NAMES = {np.dtype(np.uint8): "MET_UCHAR", np.dtype(np.float32): "MET_FLOAT"}

SUPPORTED_SUFFIXES = (".nii.gz", ".nii", ".mha")


def _geometry_to_xyz(spacing_zyx, origin_zyx, direction_zyx):
    """Return (spacing, offset, 3x3 cosines) in the x,y,z convention of disk formats."""
    spacing = tuple(reversed(spacing_zyx))
    offset = tuple((_FLIP @ np.asarray(origin_zyx, dtype=np.float64)).tolist())
    cosines = _FLIP @ np.asarray(direction_zyx, dtype=np.float64) @ _FLIP
    return spacing, offset, cosines


def _geometry_from_xyz(spacing_xyz, offset_xyz, cosines_xyz):
    spacing = tuple(float(s) for s in reversed(spacing_xyz))
    origin = tuple((_FLIP @ np.asarray(offset_xyz, dtype=np.float64)).tolist())
    direction = _FLIP @ np.asarray(cosines_xyz, dtype=np.float64) @ _FLIP
    return spacing, origin, direction


def _storage_dtype(voxels: np.ndarray) -> np.dtype:
    if voxels.dtype in (np.dtype(np.uint8), np.dtype(bool)):
        return np.dtype(np.uint8)
    return np.dtype(np.float32)


# ---------------------------------------------------------------- NIfTI-1

def _write_nifti(path: Path, voxels, spacing, origin, direction):
    dtype = _storage_dtype(voxels)
    data = np.ascontiguousarray(voxels.astype(dtype))
    nz, ny, nx = data.shape
    spacing_xyz, offset_xyz, cosines = _geometry_to_xyz(spacing, origin, direction)
    srows = np.zeros((3, 4), dtype=np.float64)
    srows[:, :3] = cosines @ np.diag(spacing_xyz)
    srows[:, 3] = offset_xyz
    datatype, bitpix = _NIFTI_CODES[dtype]

    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, datatype)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, *spacing_xyz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)  # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform Off, sform on
    struct.pack_into("<12f", hdr, 280, *srows.reshape(-1))
    hdr[344:348] = b"n+1\x00"

    payload = bytes(hdr) + b"\x00\x00\x00\x00" + data.tobytes(order="C")
    if path.name.endswith(".nii.gz"):
        # filename="" and mtime=0 keep the gzip header content-only, so
        # identical volumes are byte-identical wherever they are written
        with open(path, "wb") as f:
            with gzip.GzipFile(fileobj=f, mode="wb", filename="", mtime=0,
                               compresslevel=6) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


def _quaternion_to_cosines(b, c, d, qfac):
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(max(a2, 0.0))
    r = np.asarray(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    r[:, 2] *= -1.0 if qfac < 0 else 1.0
    return r


def _read_nifti(path: Path, raw: bytes):
    if len(raw) < 352:
        raise VolumeFormatError(f"{path}: truncated NIfTI file")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != 348:
        raise VolumeFormatError(f"{path}: not a NIfTI-1 file (sizeof_hdr={sizeof_hdr})")
    if raw[344:347] not in (b"n+1", b"ni1"):
        raise VolumeFormatError(f"{path}: bad NIfTI magic {raw[344:348]!r}")

    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if ndim < 3 or any(d != 1 for d in dim[4 : 1 + ndim]):
        raise VolumeFormatError(f"{path}: expected a 3D volume, dim={dim}")
    nx, ny, nz = dim[1], dim[2], dim[3]

    (datatype,) = struct.unpack_from("<h", raw, 70)
    np_dtype = _NIFTI_DTYPES.get(datatype)
    if np_dtype is None:
        raise VolumeFormatError(f"{path}: unsupported NIfTI datatype code {datatype}")

    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    slope, inter = struct.unpack_from("<ff", raw, 112)
    qform_code, sform_code = struct.unpack_from("<hh", raw, 252)

    count = nx * ny * nz
    start = int(vox_offset) if vox_offset else 352
    item = np.dtype(np_dtype).newbyteorder("<")
    data = np.frombuffer(raw, dtype=item, count=count, offset=start)
    data = data.reshape((nz, ny, nx))  # C order over (z, y, x) == x-fastest

    if sform_code > 0:
        srows = np.asarray(struct.unpack_from("<12f", raw, 280), dtype=np.float64).reshape(3, 4)
        m = srows[:, :3]
        spacing_xyz = np.linalg.norm(m, axis=0)
        if min(spacing_xyz) <= 0:
            raise VolumeFormatError(f"{path}: degenerate sform")
        cosines = m / spacing_xyz
        offset_xyz = srows[:, 3]
    elif qform_code > 0:
        b, c, d = struct.unpack_from("<3f", raw, 256)
        offset_xyz = np.asarray(struct.unpack_from("<3f", raw, 268), dtype=np.float64)
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        cosines = _quaternion_to_cosines(b, c, d, qfac)
        spacing_xyz = np.asarray([abs(p) or 1.0 for p in pixdim[1:4]])
    else:
        spacing_xyz = np.asarray([abs(p) or 1.0 for p in pixdim[1:4]])
        cosines = np.eye(3)
        offset_xyz = np.zeros(3)

    values = np.asarray(data)
    # scl_slope of 0 means "no scaling information" per the format
    if np.isfinite(slope) and np.isfinite(inter) and slope != 0.0 and (slope, inter) != (1.0, 0.0):
        values = values.astype(np.float32) * slope + inter

    spacing, origin, direction = _geometry_from_xyz(spacing_xyz, offset_xyz, cosines)
    return values, spacing, origin, direction


# ---------------------------------------------------------------- MetaImage

def _write_mha(path: Path, voxels, spacing, origin, direction):
    dtype = _storage_dtype(voxels)
    data = np.ascontiguousarray(voxels.astype(dtype))
    nz, ny, nx = data.shape
    spacing_xyz, offset_xyz, cosines = _geometry_to_xyz(spacing, origin, direction)

    def fmt(vals):
        return " ".join(repr(float(v)) for v in vals)

    header = (
        "ObjectType = Image\n"
        "NDims = 3\n"
        "BinaryData = True\n"
        "BinaryDataByteOrderMSB = False\n"
        "CompressedData = False\n"
        f"TransformMatrix = {fmt(cosines.reshape(-1))}\n"
        f"Offset = {fmt(offset_xyz)}\n"
        f"ElementSpacing = {fmt(spacing_xyz)}\n"
        f"DimSize = {nx} {ny} {nz}\n"
        f"ElementType = {_MET_NAMES[dtype]}\n"
        "ElementDataFile = LOCAL\n"
    )
    path.write_bytes(header.encode("ascii") + data.tobytes(order="C"))


def _read_mha(path: Path, raw: bytes):
    fields = {}
    pos = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise VolumeFormatError(f"{path}: MetaImage header has no ElementDataFile")
        try:
            line = raw[pos:end].decode("ascii").strip()
        except UnicodeDecodeError as exc:
            raise VolumeFormatError(f"{path}: non-ASCII MetaImage header") from exc
        pos = end + 1
        if "=" not in line:
            raise VolumeFormatError(f"{path}: malformed MetaImage header line {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        fields[key] = value
        if key == "ElementDataFile":
            break

    if fields.get("ObjectType", "Image") != "Image" or fields.get("NDims") != "3":
        raise VolumeFormatError(f"{path}: only 3D MetaImage volumes are supported")
    if fields["ElementDataFile"] != "LOCAL":
        raise VolumeFormatError(f"{path}: external MetaImage data files are not supported")
    np_dtype = _MET_TYPES.get(fields.get("ElementType", ""))
    if np_dtype is None:
        raise VolumeFormatError(f"{path}: unsupported ElementType {fields.get('ElementType')!r}")

    nx, ny, nz = (int(v) for v in fields["DimSize"].split())
    spacing_xyz = [float(v) for v in fields.get("ElementSpacing", "1 1 1").split()]
    offset_xyz = [float(v) for v in fields.get("Offset", "0 0 0").split()]
    tm = fields.get("TransformMatrix", "1 0 0 0 1 0 0 0 1")
    cosines = np.asarray([float(v) for v in tm.split()], dtype=np.float64).reshape(3, 3)

    blob = raw[pos:]
    if fields.get("CompressedData", "False").lower() == "true":
        try:
            blob = zlib.decompress(blob)
        except zlib.error as exc:
            raise VolumeFormatError(f"{path}: corrupt compressed MetaImage data") from exc
    item = np.dtype(np_dtype)
    if fields.get("BinaryDataByteOrderMSB", "False").lower() == "true":
        item = item.newbyteorder(">")
    count = nx * ny * nz
    if len(blob) < count * item.itemsize:
        raise VolumeFormatError(f"{path}: MetaImage data shorter than DimSize promises")
    data = np.frombuffer(blob, dtype=item, count=count).reshape((nz, ny, nx))

    spacing, origin, direction = _geometry_from_xyz(spacing_xyz, offset_xyz, cosines)
    return np.asarray(data), spacing, origin, direction


# ---------------------------------------------------------------- dispatch

def write_volume(path, voxels, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), direction=None):
    """Write a (z, y, x) array; format chosen by suffix. uint8/bool stay integer, rest float32."""
    path = Path(path)
    direction = np.eye(3) if direction is None else np.asarray(direction, dtype=np.float64)
    voxels = np.asarray(voxels)
    if voxels.ndim != 3:
        raise VolumeFormatError(f"can only write 3D grids, got ndim={voxels.ndim}")
    try:
        if path.name.endswith((".nii.gz", ".nii")):
            _write_nifti(path, voxels, spacing, origin, direction)
        elif path.name.endswith(".mha"):
            _write_mha(path, voxels, spacing, origin, direction)
        else:
            raise VolumeFormatError(f"unsupported volume suffix: {path.name}")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_volume(path):
    """Read a volume; returns (voxels, spacing, origin, direction) in (z, y, x) order."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise VolumeFormatError(f"{path}: corrupt gzip stream") from exc
    try:
        if path.name.endswith(".mha"):
            voxels, spacing, origin, direction = _read_mha(path, raw)
        elif path.name.endswith((".nii.gz", ".nii")):
            voxels, spacing, origin, direction = _read_nifti(path, raw)
        else:
            raise VolumeFormatError(f"unsupported volume suffix: {path.name}")
    except struct.error as exc:
        raise VolumeFormatError(f"{path}: truncated header") from exc
    return np.array(voxels), spacing, origin, direction  # owned, writable copy


def require_finite(voxels: np.ndarray, path) -> np.ndarray:
    if not np.isfinite(voxels).all():
        raise DataError(f"{path}: volume contains NaN/Inf voxels")
    return voxels
