import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings

from app.container import (
    containers_equal, create_container, get_cell, iter_indices, peers_along, scalars_equal, schema_of,
    subset_container, with_cell
)
from app.data_loader import (
    ContainerLoader, container_from_frame, container_to_frame, parse_container, serialize_container
)
from app.constants import MENSAJES_ERROR
from app.models import Dimension
from tests.helpers import FIXTURES, grid
from tests.strategies import typed_containers
from utils.error_handling import (
    ArityMismatch, DuplicateLabel, EmptyDimension, InvalidScalar, MalformedContainer, UnknownIndex
)


def test_d0_shape_and_cells(d0):
    assert d0.shape == (4, 3)
    assert d0.labels(1) == ("Name", "Age", "Children")
    assert get_cell(d0, ("0", "Age")) == 35
    assert get_cell(d0, ("2", "Name")) is None
    assert get_cell(d0, ("3", "Children")) is None


def test_duplicate_label_rejected():
    dims = [Dimension(name="rows", indices=("a", "a"))]
    with pytest.raises(DuplicateLabel):
        create_container(dims, [1, 2])


def test_arity_mismatch():
    dims = [Dimension(name="rows", indices=("a", "b"))]
    with pytest.raises(ArityMismatch):
        create_container(dims, [1])


def test_nan_is_not_a_scalar():
    dims = [Dimension(name="rows", indices=("a",))]
    with pytest.raises(InvalidScalar):
        create_container(dims, [float("nan")])


def test_numpy_scalars_are_normalized():
    dims = [Dimension(name="rows", indices=("a", "b"))]
    c = create_container(dims, [np.int64(3), np.float64(1.5)])
    assert type(get_cell(c, ("a",))) is int
    assert type(get_cell(c, ("b",))) is float


def test_unknown_index(d0):
    with pytest.raises(UnknownIndex, match=MENSAJES_ERROR["indice_invalido"]):
        get_cell(d0, ("9", "Age"))


def test_subset_preserves_order(d0):
    small = subset_container(d0, [["0", "2"], ["Name", "Children"]])
    assert small.labels(0) == ("0", "2")
    assert get_cell(small, ("2", "Children")) == 1


def test_subset_rejects_reordering_and_empty(d0):
    with pytest.raises(UnknownIndex):
        subset_container(d0, [["2", "0"], None])
    with pytest.raises(EmptyDimension):
        subset_container(d0, [[], None])


def test_subset_full_is_copy(d0):
    assert containers_equal(subset_container(d0, [None, None]), d0)


def test_with_cell_changes_one_cell(d0):
    changed = with_cell(d0, ("1", "Age"), 99)
    assert get_cell(changed, ("1", "Age")) == 99
    assert get_cell(d0, ("1", "Age")) == 41
    diffs = [idx for idx in iter_indices(d0) if not scalars_equal(get_cell(d0, idx), get_cell(changed, idx))]
    assert diffs == [("1", "Age")]


def test_cells_are_read_only(d0):
    with pytest.raises(ValueError):
        d0.cells[0, 0] = "x"


def test_scalar_equality_rules():
    assert scalars_equal(1, 1.0)
    assert not scalars_equal(True, 1)
    assert scalars_equal(None, None)
    assert not scalars_equal(None, 0)
    assert not scalars_equal("1", 1)


def test_containers_equal_ignores_id():
    a = grid([[1, 2]], id="a")
    b = grid([[1, 2]], id="b")
    assert containers_equal(a, b)
    assert not containers_equal(a, grid([[1, 3]]))
    assert not containers_equal(a, grid([[1, 2]], cols=["x", "y"]))


def test_peers_along_column(d0):
    assert peers_along(d0, ("0", "Age"), 0) == [35, 41, 33, 28]
    assert peers_along(d0, ("0", "Age"), 1) == ["Alice", 35, 2]


def test_serialization_is_canonical(d0):
    text = (FIXTURES / "d0.json").read_text(encoding="utf-8")
    assert serialize_container(d0) == text
    assert containers_equal(parse_container(text), d0)


@pytest.mark.parametrize("text", ["{", "[]", '{"id": "x", "dims": []}',
                                  '{"id": "x", "dims": [{"name": "r", "indices": ["a"]}], "values": [1, 2]}'])
def test_malformed_documents(text):
    with pytest.raises(MalformedContainer):
        parse_container(text)


def test_loader_roundtrip(tmp_path, d0):
    path = tmp_path / "c.json"
    ContainerLoader(path).save_data(d0)
    loader = ContainerLoader(path)
    loaded = loader.load_data()
    assert containers_equal(loaded, d0)
    assert loader.get_data_info()["null_cells"] == 2


def test_loader_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ContainerLoader(tmp_path / "nope.json").load_data()


def test_frame_reduction():
    df = pd.DataFrame({"a": [1.0, np.nan], "b": ["x", None]}, index=["r", "r"])
    c = container_from_frame(df, id="df")
    assert c.labels(0) == ("r", "r#1")
    assert get_cell(c, ("r#1", "a")) is None
    assert get_cell(c, ("r#1", "b")) is None
    back = container_to_frame(c)
    assert list(back.columns) == ["a", "b"]
    assert back.loc["r", "b"] == "x"


def test_schema_of_ignores_values(d0):
    schema = schema_of(d0)
    assert schema.shape == (4, 3)
    assert schema.is_valid(("3", "Children"))
    assert not schema.is_valid(("4", "Age"))
    assert schema_of(with_cell(d0, ("0", "Age"), 1)) == schema


@given(typed_containers(max_rows=5, max_cols=5, null_rate=0.3))
@settings(max_examples=300, deadline=None, derandomize=True)
def test_serialization_roundtrip(generated):
    c, _ = generated
    back = parse_container(serialize_container(c))
    assert back.id == c.id
    assert containers_equal(back, c)
    assert serialize_container(back) == serialize_container(c)
