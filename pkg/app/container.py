"""Modelo de datos de arrays: contenedores densos e inmutables.

Toda etiqueta de índice es un string; las posiciones numéricas se codifican
como decimales ("0", "1", ...). El orden de las etiquetas es significativo.
"""
import logging
import math
from typing import Iterator, List, Optional, Sequence, Any

import numpy as np

from .constants import MENSAJES_ERROR
from .models import ContainerSchema, Dimension, IndexTuple
from utils.error_handling import (
    ArityMismatch, DuplicateLabel, EmptyDimension, InvalidScalar, UnknownIndex
)

logger = logging.getLogger(__name__)

Scalar = Any  # int | float | str | bool | None


def is_numeric(v: Scalar) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def check_scalar(v: Scalar) -> Scalar:
    """Valida un escalar y normaliza tipos de numpy a tipos nativos"""
    if isinstance(v, np.generic):
        v = v.item()
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        if math.isnan(v):
            raise InvalidScalar("NaN no está permitido; use Null")
        return v
    raise InvalidScalar(f"Tipo de escalar no admitido: {type(v).__name__}")


def scalars_equal(a: Scalar, b: Scalar) -> bool:
    """Igualdad de escalares: Null sólo igual a sí mismo, bool distinto de número"""
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if is_numeric(a) and is_numeric(b):
        return a == b
    if isinstance(a, str) and isinstance(b, str):
        return a == b
    return False


class Container:
    """Array denso con dimensiones nombradas y etiquetas únicas ordenadas"""

    __slots__ = ("id", "dims", "_cells", "_positions")

    def __init__(self, id: str, dims: Sequence[Dimension], cells: np.ndarray):
        self.id = id
        self.dims = tuple(dims)
        cells = np.asarray(cells, dtype=object).reshape(tuple(len(d.indices) for d in self.dims))
        cells.flags.writeable = False
        self._cells = cells
        self._positions = tuple({label: pos for pos, label in enumerate(d.indices)} for d in self.dims)

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def shape(self):
        return self._cells.shape

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def schema(self) -> ContainerSchema:
        return ContainerSchema(dims=self.dims)

    def labels(self, dim: int) -> tuple:
        return self.dims[dim].indices

    def position(self, idx: IndexTuple) -> tuple:
        if len(idx) != len(self.dims):
            raise UnknownIndex(f"{MENSAJES_ERROR['indice_invalido']}: aridad {len(idx)} distinta de {len(self.dims)}")
        try:
            return tuple(self._positions[k][label] for k, label in enumerate(idx))
        except KeyError as e:
            raise UnknownIndex(f"{MENSAJES_ERROR['indice_invalido']}: etiqueta {e.args[0]!r} en {self.id}") from None

    def has_index(self, idx: IndexTuple) -> bool:
        return len(idx) == len(self.dims) and all(
            label in self._positions[k] for k, label in enumerate(idx)
        )

    def index_at(self, pos: tuple) -> IndexTuple:
        return tuple(self.dims[k].indices[p] for k, p in enumerate(pos))

    def values_row_major(self) -> List[Scalar]:
        return list(self._cells.ravel())

    def __repr__(self) -> str:
        dims = ", ".join(f"{d.name}:{len(d.indices)}" for d in self.dims)
        return f"Container({self.id!r}, [{dims}])"


def create_container(dims: Sequence[Dimension], values: Sequence[Scalar], id: str = "container") -> Container:
    """Crea un contenedor a partir de dimensiones y valores en orden row-major"""
    for d in dims:
        if len(set(d.indices)) != len(d.indices):
            seen = set()
            dup = next(label for label in d.indices if label in seen or seen.add(label))
            raise DuplicateLabel(f"Etiqueta duplicada {dup!r} en la dimensión {d.name}")
    expected = int(np.prod([len(d.indices) for d in dims])) if dims else 1
    values = list(values)
    if len(values) != expected:
        raise ArityMismatch(f"Se esperaban {expected} valores y se recibieron {len(values)}")
    cells = np.empty(len(values), dtype=object)
    for i, v in enumerate(values):
        cells[i] = check_scalar(v)
    return Container(id, dims, cells)


def get_cell(c: Container, idx: IndexTuple) -> Scalar:
    return c.cells[c.position(idx)]


def with_cell(c: Container, idx: IndexTuple, v: Scalar, id: Optional[str] = None) -> Container:
    """Devuelve un contenedor nuevo que sólo difiere de `c` en `idx`"""
    pos = c.position(idx)
    cells = c.cells.copy()
    cells[pos] = check_scalar(v)
    return Container(id or c.id, c.dims, cells)


def subset_container(c: Container, keep: Sequence[Optional[Sequence[str]]], id: Optional[str] = None) -> Container:
    """Sub-array restringido a las etiquetas conservadas (None = toda la dimensión)"""
    if len(keep) != c.ndim:
        raise ArityMismatch(f"Se esperaban {c.ndim} listas de etiquetas")
    positions = []
    new_dims = []
    for k, (dim, kept) in enumerate(zip(c.dims, keep)):
        labels = list(dim.indices) if kept is None else list(kept)
        if not labels:
            raise EmptyDimension(f"La dimensión {dim.name} quedaría vacía")
        pos = []
        for label in labels:
            if label not in c._positions[k]:
                raise UnknownIndex(f"Etiqueta desconocida {label!r} en {dim.name}")
            pos.append(c._positions[k][label])
        if pos != sorted(pos) or len(set(pos)) != len(pos):
            raise UnknownIndex(f"Las etiquetas de {dim.name} deben respetar el orden original")
        positions.append(pos)
        new_dims.append(Dimension(name=dim.name, indices=tuple(labels)))
    cells = c.cells[np.ix_(*positions)] if positions else c.cells
    return Container(id or c.id, new_dims, cells)


def containers_equal(a: Container, b: Container) -> bool:
    """Mismos nombres de dimensión, mismas etiquetas ordenadas y celdas iguales"""
    if len(a.dims) != len(b.dims):
        return False
    for da, db in zip(a.dims, b.dims):
        if da.name != db.name or da.indices != db.indices:
            return False
    return all(scalars_equal(x, y) for x, y in zip(a.cells.ravel(), b.cells.ravel()))


def schema_of(c: Container) -> ContainerSchema:
    return c.schema


def iter_indices(c: Container) -> Iterator[IndexTuple]:
    """Recorre los índices en orden row-major"""
    for pos in np.ndindex(*c.shape):
        yield c.index_at(pos)


def peers_along(c: Container, idx: IndexTuple, dim: int = 0) -> List[Scalar]:
    """Valores que comparten todas las coordenadas de `idx` salvo la dimensión `dim`"""
    pos = list(c.position(idx))
    if c.ndim == 0:
        return [c.cells[()]]
    pos[dim] = slice(None)
    return list(c.cells[tuple(pos)])
