"""Estrategias de hypothesis para contenedores y operaciones incorporadas"""
from hypothesis import strategies as st

from app.container import create_container
from app.models import Dimension, OperationSignature

VALUE_STRATEGIES = {
    "int": st.integers(-5, 5),
    "str": st.sampled_from(["a", "b", "c", ""]),
    "bool": st.booleans(),
}


@st.composite
def typed_containers(draw, max_rows=4, max_cols=4, null_rate=0.2):
    """(contenedor 2-D, tipos por columna); la columna 0 siempre es entera"""
    n_rows = draw(st.integers(1, max_rows))
    n_cols = draw(st.integers(1, max_cols))
    kinds = ["int"] + [draw(st.sampled_from(sorted(VALUE_STRATEGIES))) for _ in range(n_cols - 1)]
    values = []
    for _ in range(n_rows):
        for kind in kinds:
            is_null = draw(st.floats(0, 1)) < null_rate
            values.append(None if is_null else draw(VALUE_STRATEGIES[kind]))
    dims = [Dimension(name="rows", indices=tuple(str(r) for r in range(n_rows))),
            Dimension(name="cols", indices=tuple(f"c{k}" for k in range(n_cols)))]
    return create_container(dims, values, id="rand"), kinds


def builtin_op(draw, container, kinds) -> OperationSignature:
    cols = list(container.labels(1))
    int_cols = [c for c, k in zip(cols, kinds) if k == "int"]
    name = draw(st.sampled_from(["drop_null_rows", "filter_rows", "minmax_scale_columns",
                                 "map_add_constant", "sort_by_column", "project_columns"]))
    if name == "filter_rows":
        params = {"column": draw(st.sampled_from(int_cols)), "cmp": draw(st.sampled_from(["<", ">", "=", "≠"])),
                  "value": draw(st.integers(-5, 5))}
    elif name == "minmax_scale_columns":
        chosen = draw(st.lists(st.sampled_from(int_cols), min_size=1, unique=True))
        params = {"columns": chosen}
    elif name == "map_add_constant":
        params = {"k": draw(st.integers(-2, 2))}
    elif name == "sort_by_column":
        params = {"column": draw(st.sampled_from(cols)), "asc": draw(st.booleans())}
    elif name == "project_columns":
        params = {"columns": draw(st.lists(st.sampled_from(cols), min_size=1, unique=True))}
    else:
        params = {}
    return OperationSignature(namespace="builtin", name=name, params=params)


@st.composite
def container_and_op(draw, max_rows=4, max_cols=4):
    container, kinds = draw(typed_containers(max_rows=max_rows, max_cols=max_cols))
    return container, builtin_op(draw, container, kinds)
