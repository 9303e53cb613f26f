import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from levykernel.errors import CODES, KernelError
from levykernel.io import dumps, read_csv, read_json, read_tensor, sha256_file, write_csv, write_json, write_tensor


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_tensor_round_trip(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("t") / "a.lkt"
    write_tensor(path, arr, {"times": [0.1, 0.2], "note": "x"})
    back, head = read_tensor(path)
    assert back.tobytes() == arr.astype("<f8").tobytes()
    assert head["times"] == [0.1, 0.2] and head["shape"] == list(arr.shape)


def test_tensor_bytes_are_deterministic(tmp_path):
    arr = np.arange(12.0).reshape(3, 4)
    write_tensor(tmp_path / "a.lkt", arr, {"b": 1, "a": np.float64(2.0)})
    write_tensor(tmp_path / "b.lkt", arr, {"a": 2.0, "b": 1})
    assert sha256_file(tmp_path / "a.lkt") == sha256_file(tmp_path / "b.lkt")


def test_not_a_tensor(tmp_path):
    (tmp_path / "x.lkt").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_tensor(tmp_path / "x.lkt")


def test_json_handles_numpy_and_nonfinite(tmp_path):
    obj = {"a": np.float64(1.5), "b": np.arange(3), "c": float("inf"), "d": np.bool_(True)}
    write_json(tmp_path / "o.json", obj)
    back = read_json(tmp_path / "o.json")
    assert back["a"] == 1.5 and back["b"] == [0, 1, 2] and back["d"] is True
    assert dumps(obj) == dumps(dict(reversed(list(obj.items()))))


def test_csv_round_trip(tmp_path):
    rows = np.array([[0.0, 1.25], [1.0, -3.5]])
    write_csv(tmp_path / "c.csv", ["x", "v"], rows)
    header, data = read_csv(tmp_path / "c.csv")
    assert list(header) == ["x", "v"]
    assert np.array_equal(np.asarray(data, float), rows)


def test_error_codes():
    err = KernelError("GRID_MISMATCH", "nodes differ", n=3)
    assert err.code in CODES and err.to_dict()["details"] == {"n": 3}
    with pytest.raises(ValueError):
        KernelError("NOT_A_CODE")
