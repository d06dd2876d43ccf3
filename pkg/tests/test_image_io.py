"""NIfTI reader/writer and the raw fixture format."""

import gzip
import struct

import numpy as np
import pytest

from topseg.errors import NiftiError
from topseg.grid import BRAIN_CLASSES, GrayImage, LabelMap
from topseg.nifti_io import (
    HEADER_SIZE,
    load_image,
    load_nifti,
    load_raw,
    save_nifti,
    save_raw,
)


def test_gray_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = GrayImage(rng.random((5, 6, 7)), spacing=(1.0, 1.0, 2.5))
    path = tmp_path / "vol.nii"
    save_nifti(img, path)
    back, meta = load_nifti(path)
    assert isinstance(back, GrayImage)
    assert back.dims == img.dims
    assert back.spacing == img.spacing
    np.testing.assert_allclose(back.data, img.data, atol=1e-7)  # float32 storage
    assert meta["datatype"] == 16


def test_gzip_roundtrip(tmp_path):
    img = GrayImage(np.linspace(0, 1, 24).reshape(4, 6))
    path = tmp_path / "img.nii.gz"
    save_nifti(img, path)
    assert path.read_bytes()[:2] == b"\x1f\x8b"
    back, _ = load_nifti(path)
    np.testing.assert_allclose(back.data, img.data, atol=1e-7)


def test_gzip_deterministic_bytes(tmp_path):
    img = GrayImage(np.linspace(0, 1, 24).reshape(4, 6))
    p1, p2 = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
    save_nifti(img, p1)
    save_nifti(img, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_labelmap_roundtrip_preserves_alphabet(tmp_path):
    labels = LabelMap(np.arange(24).reshape(4, 6) % 4, BRAIN_CLASSES)
    path = tmp_path / "seg.nii"
    save_nifti(labels, path)
    back, _ = load_nifti(path)
    assert isinstance(back, LabelMap)
    assert back.alphabet == BRAIN_CLASSES
    np.testing.assert_array_equal(back.data, labels.data)


def test_missing_file(tmp_path):
    with pytest.raises(NiftiError) as err:
        load_nifti(tmp_path / "nope.nii")
    assert err.value.field == "path"


def test_truncated_header(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x00" * 40)
    with pytest.raises(NiftiError) as err:
        load_nifti(path)
    assert err.value.field == "sizeof_hdr"


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.nii"
    hdr = bytearray(HEADER_SIZE + 16)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[344:348] = b"XXX\x00"
    path.write_bytes(bytes(hdr))
    with pytest.raises(NiftiError) as err:
        load_nifti(path)
    assert err.value.field == "magic"


def test_detached_pair_rejected(tmp_path):
    path = tmp_path / "pair.hdr"
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    hdr[344:348] = b"ni1\x00"
    path.write_bytes(bytes(hdr))
    with pytest.raises(NiftiError, match="detached"):
        load_nifti(path)


def test_corrupt_gzip(tmp_path):
    path = tmp_path / "junk.nii.gz"
    good = gzip.compress(b"\x00" * 400)
    path.write_bytes(good[:20])
    with pytest.raises(NiftiError) as err:
        load_nifti(path)
    assert err.value.field == "gzip"


def test_unsupported_datatype(tmp_path):
    img = GrayImage(np.zeros((3, 3)))
    path = tmp_path / "odd.nii"
    save_nifti(img, path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<h", raw, 70, 1)  # datatype 1 = bitmap, unsupported
    path.write_bytes(bytes(raw))
    with pytest.raises(NiftiError) as err:
        load_nifti(path)
    assert err.value.field == "datatype"


def test_scl_slope_applied(tmp_path):
    img = GrayImage(np.full((3, 3), 0.25))
    path = tmp_path / "scl.nii"
    save_nifti(img, path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<f", raw, 112, 2.0)  # scl_slope
    struct.pack_into("<f", raw, 116, 0.5)  # scl_inter
    path.write_bytes(bytes(raw))
    back, _ = load_nifti(path)
    np.testing.assert_allclose(back.data, 1.0)


def test_raw_fixture_roundtrip(tmp_path):
    img = GrayImage(np.linspace(0, 1, 60).reshape(3, 4, 5), spacing=(1.0, 2.0, 3.0))
    path = tmp_path / "fix.raw"
    save_raw(img, path)
    back = load_raw(path)
    assert isinstance(back, GrayImage)
    assert back.spacing == img.spacing
    np.testing.assert_allclose(back.data, img.data, atol=1e-7)

    labels = LabelMap(np.zeros((3, 4), dtype=int), ("CP",))
    lpath = tmp_path / "lab.raw"
    save_raw(labels, lpath)
    lback = load_raw(lpath)
    assert isinstance(lback, LabelMap)
    assert lback.alphabet == ("CP",)


def test_load_image_dispatch(tmp_path):
    img = GrayImage(np.zeros((4, 4)))
    save_raw(img, tmp_path / "a.raw")
    save_nifti(img, tmp_path / "a.nii")
    assert load_image(tmp_path / "a.raw").dims == (4, 4)
    assert load_image(tmp_path / "a.nii").dims == (4, 4)
