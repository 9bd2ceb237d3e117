"""Dataset files: fvecs and raw float32 readers, manifests, checksums.

Readers fail loudly with the byte offset of the first problem, because a
silently mis-framed vector file poisons every downstream number.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .core import VectorSet

FORMATS = ("fvecs", "raw-f32")


class DataError(ValueError):
    """A data file is malformed, inconsistent, or does not match its manifest."""


def checksum_bytes(raw: bytes) -> str:
    return hashlib.blake2b(raw, digest_size=8).hexdigest()


def checksum_file(path) -> str:
    with open(path, "rb") as fh:
        return checksum_bytes(fh.read())


def decode_fvecs(raw: bytes, source: str = "<bytes>") -> VectorSet:
    """Decode the fvecs layout: per record, an int32 dim then dim float32s."""
    if len(raw) == 0:
        warnings.warn(f"{source}: empty file, decoding as 0 vectors")
        return VectorSet(np.zeros((0, 0), dtype=np.float32))
    if len(raw) % 4 != 0:
        raise DataError(
            f"{source}: trailing {len(raw) % 4} bytes at byte offset {len(raw) - len(raw) % 4}"
        )
    ints = np.frombuffer(raw, dtype="<i4")
    d = int(ints[0])
    if d < 1:
        raise DataError(f"{source}: invalid dimension {d} at byte offset 0")
    rec = d + 1
    n_full = ints.size // rec
    # diagnose inconsistent dims among complete records before blaming the
    # leftover bytes: a changed dim field shifts every later boundary
    dims = ints[: n_full * rec : rec]
    bad = np.flatnonzero(dims != d)
    if bad.size:
        r = int(bad[0])
        raise DataError(
            f"{source}: record {r} declares dim {int(dims[r])}, expected {d}, "
            f"at byte offset {r * rec * 4}"
        )
    if ints.size % rec != 0:
        raise DataError(
            f"{source}: truncated record at byte offset {n_full * rec * 4}"
        )
    floats = np.frombuffer(raw, dtype="<f4").reshape(n_full, rec)[:, 1:]
    finite = np.isfinite(floats)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        raise DataError(
            f"{source}: non-finite value in record {int(r)} "
            f"at byte offset {(int(r) * rec + 1 + int(c)) * 4}"
        )
    return VectorSet(floats)


def read_fvecs(path) -> VectorSet:
    with open(path, "rb") as fh:
        return decode_fvecs(fh.read(), source=str(path))


def write_fvecs(path, vectors) -> None:
    """Write rows in the fvecs layout (little-endian)."""
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array")
    n, d = arr.shape
    out = np.empty((n, d + 1), dtype="<f4")
    out[:, 0] = np.full(n, d, dtype="<i4").view("<f4")
    out[:, 1:] = arr
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def decode_raw_f32(raw: bytes, count: int, dim: int, source: str = "<bytes>") -> VectorSet:
    """Decode a headerless little-endian float32 matrix of known shape."""
    if count < 0 or dim < 1:
        raise DataError(f"{source}: invalid shape ({count}, {dim})")
    expected = 4 * count * dim
    if len(raw) != expected:
        raise DataError(
            f"{source}: file is {len(raw)} bytes, expected {expected} "
            f"for {count} x {dim} float32"
        )
    floats = np.frombuffer(raw, dtype="<f4").reshape(count, dim)
    finite = np.isfinite(floats)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        raise DataError(
            f"{source}: non-finite value in record {int(r)} "
            f"at byte offset {(int(r) * dim + int(c)) * 4}"
        )
    return VectorSet(floats)


def read_raw_f32(path, count: int, dim: int) -> VectorSet:
    with open(path, "rb") as fh:
        return decode_raw_f32(fh.read(), count, dim, source=str(path))


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalize each row; a zero row is an error, not a NaN factory."""
    arr = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"cannot normalize zero vector at row {int(zero[0])}")
    return arr / norms[:, None]


@dataclass(frozen=True)
class DatasetManifest:
    """Sidecar description of a vector file.

    ``path`` is resolved relative to the manifest's own directory.
    ``count``/``dim`` are validated against (or filled from) the decoded
    file; ``checksum`` is the blake2b-64 hex digest of the raw bytes.
    """

    path: str
    format: str = "fvecs"
    count: Optional[int] = None
    dim: Optional[int] = None
    normalize: bool = False
    checksum: Optional[str] = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise DataError(f"unknown dataset format {self.format!r}")


def read_manifest(path) -> DatasetManifest:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "path" not in doc:
        raise DataError(f"{path}: manifest must be an object with a 'path' key")
    known = {"path", "format", "count", "dim", "normalize", "checksum"}
    extra = set(doc) - known
    if extra:
        raise DataError(f"{path}: unknown manifest keys {sorted(extra)}")
    data_path = doc["path"]
    if not os.path.isabs(data_path):
        data_path = os.path.join(os.path.dirname(os.path.abspath(path)), data_path)
    return DatasetManifest(
        path=data_path,
        format=doc.get("format", "fvecs"),
        count=doc.get("count"),
        dim=doc.get("dim"),
        normalize=bool(doc.get("normalize", False)),
        checksum=doc.get("checksum"),
    )


def write_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "path": manifest.path,
        "format": manifest.format,
        "count": manifest.count,
        "dim": manifest.dim,
        "normalize": manifest.normalize,
        "checksum": manifest.checksum,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(manifest_path) -> Tuple[VectorSet, DatasetManifest]:
    """Load a vector file through its manifest, verifying every declared fact."""
    manifest = read_manifest(manifest_path)
    with open(manifest.path, "rb") as fh:
        raw = fh.read()
    digest = checksum_bytes(raw)
    if manifest.checksum is not None and manifest.checksum != digest:
        raise DataError(
            f"{manifest.path}: checksum {digest} does not match manifest "
            f"({manifest.checksum})"
        )
    if manifest.format == "fvecs":
        data = decode_fvecs(raw, source=manifest.path)
    else:
        if manifest.count is None or manifest.dim is None:
            raise DataError(f"{manifest_path}: raw-f32 needs count and dim")
        data = decode_raw_f32(raw, manifest.count, manifest.dim, source=manifest.path)
    if manifest.count is not None and data.count != manifest.count:
        raise DataError(
            f"{manifest.path}: has {data.count} vectors, manifest says {manifest.count}"
        )
    if manifest.dim is not None and data.count > 0 and data.dim != manifest.dim:
        raise DataError(
            f"{manifest.path}: has dim {data.dim}, manifest says {manifest.dim}"
        )
    if manifest.normalize and data.count > 0:
        data = VectorSet(normalize_rows(data.vectors).astype(np.float32))
    return data, replace(
        manifest, count=data.count, dim=data.dim, checksum=digest
    )
