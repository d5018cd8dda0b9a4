import struct

import numpy as np
import pytest

from dcpl.dataset import (
    Dataset,
    dataset_from_bytes,
    dataset_to_bytes,
    load_dataset,
    load_head,
    save_dataset,
    save_head,
)
from dcpl.errors import (
    BadMagicError,
    DataFormatError,
    DegenerateInputError,
    DimensionMismatchError,
    LabelRangeError,
    MissingFileError,
    NonFiniteError,
)
from dcpl.model import ModelParams


@pytest.fixture
def full_dataset(rng):
    n, d_f, d_p, k = 7, 3, 4, 3
    return Dataset(
        rng.standard_normal((n, d_f)),
        rng.standard_normal((n, d_p)),
        k,
        true_labels=rng.integers(0, k, n),
        pseudo_labels=rng.integers(0, k, n),
        source_head=ModelParams(rng.standard_normal((k, d_f)), rng.standard_normal(k)),
        projection=rng.standard_normal((d_p, 2)),
    )


def test_binary_round_trip_is_exact(tmp_path, full_dataset):
    path = tmp_path / "ds.dcpl"
    save_dataset(full_dataset, path)
    back = load_dataset(path)
    assert back.equals(full_dataset)
    assert back.features_f.tobytes() == full_dataset.features_f.tobytes()


def test_saving_twice_is_byte_identical(tmp_path, full_dataset):
    save_dataset(full_dataset, tmp_path / "a.dcpl")
    save_dataset(full_dataset, tmp_path / "b.dcpl")
    assert (tmp_path / "a.dcpl").read_bytes() == (tmp_path / "b.dcpl").read_bytes()


def test_optional_sections_omitted(tmp_path, rng):
    ds = Dataset(rng.standard_normal((4, 2)), rng.standard_normal((4, 2)), 2)
    buf = dataset_to_bytes(ds)
    n, d_f, d_p, k, flags = struct.unpack("<5I", buf[6:26])
    assert (n, d_f, d_p, k, flags) == (4, 2, 2, 2, 0)
    assert len(buf) == 26 + 8 * (8 + 8)
    back = dataset_from_bytes(buf)
    assert back.true_labels is None and back.pseudo_labels is None
    assert back.equals(ds)


def test_header_layout(full_dataset):
    buf = dataset_to_bytes(full_dataset)
    assert buf[:4] == b"DCPL"
    assert struct.unpack("<H", buf[4:6]) == (1,)
    assert struct.unpack("<5I", buf[6:26])[:4] == (7, 3, 4, 3)


def test_label_out_of_range_names_row(full_dataset):
    buf = bytearray(dataset_to_bytes(full_dataset))
    offset = 26 + 8 * 7 * (3 + 4) + 4 * 5  # true label of row 5
    buf[offset:offset + 4] = struct.pack("<I", 7)
    with pytest.raises(LabelRangeError) as err:
        dataset_from_bytes(bytes(buf))
    assert err.value.row == 5
    assert "row 5" in str(err.value)


def test_empty_dataset_rejected():
    buf = b"DCPL" + struct.pack("<H", 1) + struct.pack("<5I", 0, 2, 2, 2, 0)
    with pytest.raises(DegenerateInputError):
        dataset_from_bytes(buf)


def test_bad_magic_and_truncation(full_dataset):
    buf = dataset_to_bytes(full_dataset)
    with pytest.raises(BadMagicError):
        dataset_from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(DataFormatError, match="truncated"):
        dataset_from_bytes(buf[:-3])
    with pytest.raises(DataFormatError, match="trailing"):
        dataset_from_bytes(buf + b"\0")


def test_non_finite_value_located(full_dataset):
    ff = full_dataset.features_f.copy()
    ff[2, 1] = np.nan
    bad = Dataset(ff, full_dataset.features_p, 3)
    with pytest.raises(NonFiniteError) as err:
        bad.validate()
    assert err.value.row == 2 and "features_f[1]" in err.value.field


def test_view_row_mismatch(rng):
    with pytest.raises(DimensionMismatchError):
        Dataset(rng.standard_normal((3, 2)), rng.standard_normal((4, 2)), 2).validate()


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        load_dataset(tmp_path / "absent.dcpl")


def test_csv_round_trip(tmp_path, full_dataset):
    plain = Dataset(full_dataset.features_f, full_dataset.features_p, 3,
                    true_labels=full_dataset.true_labels, pseudo_labels=full_dataset.pseudo_labels)
    save_dataset(plain, tmp_path / "ds.csv")
    back = load_dataset(tmp_path / "ds.csv", k=3)
    assert back.equals(plain)


def test_csv_handwritten_fixture(tmp_path):
    (tmp_path / "f.csv").write_text("id,label,f_0,f_1,p_0\n0,0,1.0,2.0,0.5\n1,1,-1.0,0.0,1.5\n")
    ds = load_dataset(tmp_path / "f.csv")
    assert (ds.n, ds.d_f, ds.d_p, ds.k) == (2, 2, 1, 2)
    assert ds.pseudo_labels is None
    np.testing.assert_array_equal(ds.true_labels, [0, 1])


def test_csv_errors_located(tmp_path):
    (tmp_path / "a.csv").write_text("id,label,f_0,p_0\n0,0,1.0,0.5\n1,5,1.0,0.5\n")
    with pytest.raises(LabelRangeError) as err:
        load_dataset(tmp_path / "a.csv", k=2)
    assert err.value.row == 2
    (tmp_path / "b.csv").write_text("id,f_0,p_0\n0,abc,0.5\n")
    with pytest.raises(DataFormatError) as err:
        load_dataset(tmp_path / "b.csv", k=2)
    assert err.value.row == 1 and err.value.field == "f_0"
    (tmp_path / "c.csv").write_text("id,f_0,p_0\n")
    with pytest.raises(DegenerateInputError):
        load_dataset(tmp_path / "c.csv", k=2)
    (tmp_path / "d.csv").write_text("id,f_0,p_0\n0,inf,1\n")
    with pytest.raises(NonFiniteError):
        load_dataset(tmp_path / "d.csv", k=2)


def test_standalone_head_round_trip(tmp_path, rng):
    head = ModelParams(rng.standard_normal((3, 5)), rng.standard_normal(3))
    save_head(head, tmp_path / "h.dcph")
    assert load_head(tmp_path / "h.dcph").equals(head)


def test_head_from_dataset_container(tmp_path, full_dataset):
    save_dataset(full_dataset, tmp_path / "ds.dcpl")
    assert load_head(tmp_path / "ds.dcpl").equals(full_dataset.source_head)


def test_head_shape_checked_against_dataset(full_dataset, rng):
    from dataclasses import replace
    bad = replace(full_dataset, source_head=ModelParams(rng.standard_normal((2, 3)), np.zeros(2)))
    with pytest.raises(DimensionMismatchError):
        bad.validate()
