import json
import struct

import numpy as np
import pytest

import shardroute as sr
from shardroute.datasets import (
    DataError,
    checksum_bytes,
    checksum_file,
    decode_fvecs,
    decode_raw_f32,
    normalize_rows,
    read_manifest,
    write_manifest,
)


def fvecs_bytes(rows):
    out = b""
    for row in rows:
        out += struct.pack("<i", len(row))
        out += struct.pack(f"<{len(row)}f", *row)
    return out


def test_fvecs_single_record():
    vs = decode_fvecs(fvecs_bytes([[1.0, 2.0]]))
    assert vs.count == 1
    assert vs.dim == 2
    np.testing.assert_array_equal(vs.vectors, [[1.0, 2.0]])


def test_fvecs_empty_file_warns():
    with pytest.warns(UserWarning):
        vs = decode_fvecs(b"")
    assert vs.count == 0
    assert vs.dim == 0


def test_fvecs_inconsistent_dim_reports_offset():
    raw = fvecs_bytes([[1.0, 2.0], [1.0, 2.0, 3.0]])
    with pytest.raises(DataError, match="byte offset 12"):
        decode_fvecs(raw)


def test_fvecs_truncated_record():
    raw = fvecs_bytes([[1.0, 2.0]])[:-4]
    with pytest.raises(DataError, match="truncated"):
        decode_fvecs(raw)


def test_fvecs_trailing_bytes():
    raw = fvecs_bytes([[1.0, 2.0]]) + b"\x00"
    with pytest.raises(DataError, match="trailing"):
        decode_fvecs(raw)


def test_fvecs_bad_leading_dim():
    raw = struct.pack("<i", -3) + b"\x00" * 12
    with pytest.raises(DataError, match="byte offset 0"):
        decode_fvecs(raw)


def test_fvecs_non_finite_reports_offset():
    raw = fvecs_bytes([[1.0, 2.0], [float("nan"), 4.0]])
    # record 1, coordinate 0 sits after one full record and one dim field
    with pytest.raises(DataError, match="byte offset 16"):
        decode_fvecs(raw)


def test_fvecs_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(17, 5)).astype(np.float32)
    path = tmp_path / "x.fvecs"
    sr.write_fvecs(path, X)
    vs = sr.read_fvecs(path)
    np.testing.assert_array_equal(vs.vectors, X)


def test_raw_f32_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(9, 4)).astype(np.float32)
    path = tmp_path / "x.f32"
    path.write_bytes(X.tobytes())
    vs = sr.read_raw_f32(path, count=9, dim=4)
    np.testing.assert_array_equal(vs.vectors, X)


def test_raw_f32_size_mismatch():
    with pytest.raises(DataError, match="expected"):
        decode_raw_f32(b"\x00" * 20, count=2, dim=3)


def test_raw_f32_non_finite_offset():
    X = np.zeros((2, 2), dtype="<f4")
    X[1, 1] = np.inf
    with pytest.raises(DataError, match="byte offset 12"):
        decode_raw_f32(X.tobytes(), count=2, dim=2)


def test_normalize_rows_unit_output():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20, 6))
    out = normalize_rows(X)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


def test_normalize_rows_zero_row_names_index():
    X = np.ones((3, 2))
    X[1] = 0.0
    with pytest.raises(DataError, match="row 1"):
        normalize_rows(X)


def test_checksum_is_short_stable_hex():
    a = checksum_bytes(b"hello")
    assert len(a) == 16
    assert a == checksum_bytes(b"hello")
    assert a != checksum_bytes(b"hellp")


def test_checksum_file_matches_bytes(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"\x01\x02\x03")
    assert checksum_file(path) == checksum_bytes(b"\x01\x02\x03")


def make_manifest_file(tmp_path, fname="data.fvecs", **overrides):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 3)).astype(np.float32)
    data_path = tmp_path / fname
    sr.write_fvecs(data_path, X)
    doc = {
        "path": fname,
        "format": "fvecs",
        "count": 8,
        "dim": 3,
        "normalize": False,
        "checksum": checksum_file(data_path),
    }
    doc.update(overrides)
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(doc))
    return mpath, X


def test_load_dataset_roundtrip(tmp_path):
    mpath, X = make_manifest_file(tmp_path)
    vs, manifest = sr.load_dataset(mpath)
    np.testing.assert_array_equal(vs.vectors, X)
    assert manifest.count == 8
    assert manifest.dim == 3


def test_load_dataset_normalizes_when_asked(tmp_path):
    mpath, X = make_manifest_file(tmp_path, normalize=True)
    vs, _ = sr.load_dataset(mpath)
    np.testing.assert_allclose(np.linalg.norm(vs.vectors, axis=1), 1.0, atol=1e-6)


def test_load_dataset_rejects_checksum_mismatch(tmp_path):
    mpath, _ = make_manifest_file(tmp_path, checksum="0" * 16)
    with pytest.raises(DataError, match="checksum"):
        sr.load_dataset(mpath)


def test_load_dataset_rejects_count_mismatch(tmp_path):
    mpath, _ = make_manifest_file(tmp_path, count=9)
    with pytest.raises(DataError):
        sr.load_dataset(mpath)


def test_manifest_rejects_unknown_keys(tmp_path):
    mpath, _ = make_manifest_file(tmp_path, flavor="spicy")
    with pytest.raises(DataError, match="flavor"):
        read_manifest(mpath)


def test_manifest_rejects_unknown_format(tmp_path):
    mpath, _ = make_manifest_file(tmp_path, format="hdf5")
    with pytest.raises((DataError, ValueError)):
        read_manifest(mpath)


def test_manifest_write_read_roundtrip(tmp_path):
    mpath, _ = make_manifest_file(tmp_path)
    manifest = read_manifest(mpath)
    out = tmp_path / "copy.json"
    write_manifest(manifest, out)
    again = read_manifest(out)
    assert again.format == manifest.format
    assert again.count == manifest.count
    assert again.checksum == manifest.checksum


def test_manifest_resolves_relative_paths(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    mpath, X = make_manifest_file(sub)
    vs, manifest = sr.load_dataset(mpath)
    assert vs.count == 8
