"""Binary tensor container: the on-disk format for datasets and checkpoints.

Layout (all integers little-endian):

    magic "KNO1" | version u16 | record count u32
    per record: name length u16, UTF-8 name, rank u8, shape u64 per axis,
                dtype tag u8 (0 = f64, 1 = complex f64 interleaved), payload
    trailing CRC32 (zlib) of all preceding bytes

Writes are deterministic for identical inputs, so regenerated files are
byte-identical; reads verify magic, version, and CRC.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

__all__ = ["ContainerError", "write_container", "read_container",
           "MAGIC", "FORMAT_VERSION"]

MAGIC = b"KNO1"
FORMAT_VERSION = 1

_DTYPE_F64 = 0
_DTYPE_C128 = 1


class ContainerError(IOError):
    """Malformed container: bad magic, version, dtype tag, or checksum."""


def write_container(path, records: dict) -> None:
    """Write named arrays in insertion order; f64 and complex f64 only."""
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(records))]
    for name, arr in records.items():
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            tag, payload = _DTYPE_C128, np.ascontiguousarray(arr, dtype="<c16")
        else:
            tag, payload = _DTYPE_F64, np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(struct.pack("<B", tag))
        chunks.append(payload.tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_container(path) -> dict:
    """Read back the named arrays; raises :class:`ContainerError` on damage."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 10:
        raise ContainerError("file too short to be a container")
    body, crc_bytes = blob[:-4], blob[-4:]
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ContainerError("checksum mismatch; file is corrupted")
    if body[:4] != MAGIC:
        raise ContainerError(f"bad magic {body[:4]!r}")
    version, count = struct.unpack_from("<HI", body, 4)
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported format version {version}")
    pos = 10
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}Q", body, pos)
        pos += 8 * rank
        (tag,) = struct.unpack_from("<B", body, pos)
        pos += 1
        n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
        if tag == _DTYPE_F64:
            dt, width = np.dtype("<f8"), 8
        elif tag == _DTYPE_C128:
            dt, width = np.dtype("<c16"), 16
        else:
            raise ContainerError(f"unknown dtype tag {tag} in record {name!r}")
        nbytes = n_items * width
        arr = np.frombuffer(body, dtype=dt, count=n_items, offset=pos)
        pos += nbytes
        out[name] = arr.reshape(shape).astype(dt.newbyteorder("="))
    if pos != len(body):
        raise ContainerError("trailing bytes after the last record")
    return out
