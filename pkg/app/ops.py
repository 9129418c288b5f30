"""Identidad y ejecución de operaciones.

Incluye el catálogo incorporado (las operaciones del pipeline de ejemplo),
la captura analítica de linaje exacto para esas operaciones y la interfaz
de procesos externos para operaciones de caja negra.
"""
import hashlib
import json
import logging
import shlex
import subprocess
import tempfile
import threading
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import ALIAS_BUILTIN, ALIAS_COMPARADORES, BUILTIN_NAMESPACE, COMPARADORES, OPERACIONES_BUILTIN
from .container import Container, containers_equal, is_numeric, iter_indices, scalars_equal
from .data_loader import parse_container, save_container
from .lineage_store import LineageRecord, LineageTable, build_table
from .models import (
    Completeness, ConstraintTag, ExternalOpSpec, IndexTuple, InfluenceKind, NodeSignature,
    OperationSignature, Origin, OriginKind, TagKind
)
from utils.error_handling import (
    ArityMismatch, ExecutionFailure, ExecutionTimeout, MalformedContainer, MalformedOutput,
    NonZeroExit, NotBuiltin, OutputMismatch, UnknownOperation
)

logger = logging.getLogger(__name__)

Runner = Callable[[Container], Container]


def canonical_key(op: OperationSignature) -> str:
    """Clave estable: espacio de nombres, nombre y parámetros ordenados"""
    params = ", ".join(f"{k}={json.dumps(op.params[k], ensure_ascii=False)}" for k in sorted(op.params))
    return f"{op.namespace}.{op.name}({params})"


def builtin_name(op: OperationSignature) -> Optional[str]:
    """Nombre de la operación incorporada a la que resuelve `op`, si existe"""
    if op.namespace == BUILTIN_NAMESPACE and op.name in OPERACIONES_BUILTIN:
        return op.name
    return ALIAS_BUILTIN.get(f"{op.namespace}.{op.name}")


def node_signature(op: OperationSignature, inputs: Sequence[Container], output: Container) -> NodeSignature:
    return NodeSignature(op=op, input_schemas=[c.schema for c in inputs], output_schema=output.schema)


def node_key(sig: NodeSignature) -> str:
    """Clave de firma de nodo: la clave de la operación más un resumen de los esquemas"""
    schemas = json.dumps([json.loads(s.model_dump_json()) for s in sig.input_schemas]
                         + [json.loads(sig.output_schema.model_dump_json())], ensure_ascii=False, sort_keys=True)
    digest = hashlib.sha256(schemas.encode("utf-8")).hexdigest()[:16]
    return f"{canonical_key(sig.op)}@{digest}"


# Operaciones incorporadas

def _require_2d(c: Container, name: str) -> None:
    if c.ndim != 2:
        raise ExecutionFailure(f"{name} requiere un contenedor 2-D; recibió {c.ndim} dimensiones")


def _column_pos(c: Container, column: str, name: str) -> int:
    try:
        return c.labels(1).index(column)
    except ValueError:
        raise ExecutionFailure(f"{name}: columna desconocida {column!r}") from None


def _rebuild(c: Container, rows: Sequence[int], cols: Optional[Sequence[int]] = None,
             cells: Optional[np.ndarray] = None, id: Optional[str] = None) -> Container:
    cols = list(range(c.shape[1])) if cols is None else list(cols)
    base = c.cells if cells is None else cells
    sub = base[np.ix_(list(rows), cols)] if rows and cols else np.empty((len(rows), len(cols)), dtype=object)
    dims = [c.dims[0].model_copy(update={"indices": tuple(c.labels(0)[r] for r in rows)}),
            c.dims[1].model_copy(update={"indices": tuple(c.labels(1)[k] for k in cols)})]
    return Container(id or c.id, dims, sub)


def normalize_cmp(cmp: str) -> str:
    cmp = ALIAS_COMPARADORES.get(cmp, cmp)
    if cmp not in COMPARADORES:
        raise ExecutionFailure(f"Comparador no admitido: {cmp!r}")
    return cmp


def compare(v, cmp: str, value) -> bool:
    """Predicado de filtrado: Null y tipos incomparables evalúan falso"""
    if v is None or value is None:
        return False
    comparable = ((is_numeric(v) and is_numeric(value)) or (isinstance(v, str) and isinstance(value, str))
                  or (isinstance(v, bool) and isinstance(value, bool)))
    if not comparable:
        return False
    if cmp == '<':
        return v < value
    if cmp == '>':
        return v > value
    if cmp == '=':
        return v == value
    return v != value


def drop_null_rows(c: Container, **_) -> Container:
    _require_2d(c, "drop_null_rows")
    rows = [r for r in range(c.shape[0]) if not any(v is None for v in c.cells[r])]
    return _rebuild(c, rows)


def filter_rows(c: Container, column: str, cmp: str, value, **_) -> Container:
    _require_2d(c, "filter_rows")
    k = _column_pos(c, column, "filter_rows")
    cmp = normalize_cmp(cmp)
    rows = [r for r in range(c.shape[0]) if compare(c.cells[r, k], cmp, value)]
    return _rebuild(c, rows)


def _column_range(c: Container, k: int) -> Tuple[Optional[float], Optional[float]]:
    values = [v for v in c.cells[:, k] if v is not None]
    if any(not is_numeric(v) for v in values):
        raise ExecutionFailure(f"minmax_scale_columns: la columna {c.labels(1)[k]!r} no es numérica")
    if not values:
        return None, None
    return min(values), max(values)


def _as_columns(columns) -> List[str]:
    cols = [columns] if isinstance(columns, str) else list(columns or [])
    return list(dict.fromkeys(cols))


def minmax_scale_columns(c: Container, columns, **_) -> Container:
    _require_2d(c, "minmax_scale_columns")
    cells = c.cells.copy()
    for column in _as_columns(columns):
        k = _column_pos(c, column, "minmax_scale_columns")
        lo, hi = _column_range(c, k)
        for r in range(c.shape[0]):
            v = cells[r, k]
            if v is None:
                continue
            cells[r, k] = 0.0 if hi == lo else (v - lo) / (hi - lo)
    return Container(c.id, c.dims, cells)


def map_add_constant(c: Container, k=1, **_) -> Container:
    cells = c.cells.copy()
    for pos in np.ndindex(*c.shape):
        if is_numeric(cells[pos]):
            cells[pos] = cells[pos] + k
    return Container(c.id, c.dims, cells)


def _sort_key(v):
    if isinstance(v, bool):
        return (2, v)
    if is_numeric(v):
        return (0, v)
    return (1, v)


def sort_by_column(c: Container, column: str, asc: bool = True, **_) -> Container:
    """Reordena filas por valor; estable, con Null siempre al final"""
    _require_2d(c, "sort_by_column")
    k = _column_pos(c, column, "sort_by_column")
    present = [r for r in range(c.shape[0]) if c.cells[r, k] is not None]
    nulls = [r for r in range(c.shape[0]) if c.cells[r, k] is None]
    present.sort(key=lambda r: _sort_key(c.cells[r, k]), reverse=not asc)
    return _rebuild(c, present + nulls)


def project_columns(c: Container, columns, **_) -> Container:
    _require_2d(c, "project_columns")
    cols = _as_columns(columns)
    return _rebuild(c, list(range(c.shape[0])), [_column_pos(c, col, "project_columns") for col in cols])


BUILTINS: Dict[str, Callable[..., Container]] = {
    'drop_null_rows': drop_null_rows,
    'filter_rows': filter_rows,
    'minmax_scale_columns': minmax_scale_columns,
    'map_add_constant': map_add_constant,
    'sort_by_column': sort_by_column,
    'project_columns': project_columns,
}


def _run_builtin(name: str, op: OperationSignature, c: Container) -> Container:
    try:
        return BUILTINS[name](c, **op.params)
    except TypeError as e:
        raise ExecutionFailure(f"{name}: parámetros inválidos {op.params}: {e}") from e


def execute_external(spec: ExternalOpSpec, inputs: Sequence[Container], output_id: str = "output") -> Container:
    """Ejecuta un proceso externo: `<cmd> <in_1> ... <in_n> <out>`"""
    with tempfile.TemporaryDirectory(prefix="xlineage-") as tmp:
        tmp_dir = Path(tmp)
        in_paths = []
        for i, c in enumerate(inputs):
            path = tmp_dir / f"in_{i}.json"
            save_container(c, path)
            in_paths.append(str(path))
        out_path = tmp_dir / "out.json"
        if "{inputs}" in spec.command or "{output}" in spec.command:
            command = spec.command.format(inputs=" ".join(shlex.quote(p) for p in in_paths),
                                          output=shlex.quote(str(out_path)))
            args = shlex.split(command)
        else:
            args = shlex.split(spec.command) + in_paths + [str(out_path)]
        logger.debug(f"Ejecutando proceso externo: {args}")
        try:
            proc = subprocess.run(args, cwd=spec.workdir, capture_output=True, text=True, timeout=spec.timeout)
        except subprocess.TimeoutExpired as e:
            raise ExecutionTimeout(f"El proceso externo superó {spec.timeout}s") from e
        except OSError as e:
            raise ExecutionFailure(f"No se pudo lanzar el proceso externo: {e}") from e
        if proc.returncode != 0:
            raise NonZeroExit(f"El proceso externo terminó con código {proc.returncode}: {proc.stderr.strip()[-300:]}")
        if not out_path.exists():
            raise MalformedOutput("El proceso externo no escribió el archivo de salida")
        try:
            result = parse_container(out_path.read_text(encoding="utf-8"), source=str(out_path))
        except MalformedContainer as e:
            raise MalformedOutput(str(e)) from e
    return Container(output_id, result.dims, result.cells)


class OperationRegistry:
    """Operaciones ejecutables: incorporadas más externas registradas"""

    def __init__(self):
        self._externals: Dict[str, ExternalOpSpec] = {}

    def register_external(self, op: OperationSignature, spec: ExternalOpSpec) -> None:
        self._externals[canonical_key(op)] = spec

    def external_spec(self, op: OperationSignature) -> Optional[ExternalOpSpec]:
        return self._externals.get(canonical_key(op))

    def is_builtin(self, op: OperationSignature) -> bool:
        return builtin_name(op) is not None and canonical_key(op) not in self._externals

    def execute(self, op: OperationSignature, inputs: Sequence[Container], output_id: Optional[str] = None) -> Container:
        if not inputs:
            raise ArityMismatch("La operación necesita al menos una entrada")
        output_id = output_id or f"{inputs[0].id}>{op.name}"
        spec = self.external_spec(op)
        if spec is not None:
            return execute_external(spec, inputs, output_id)
        name = builtin_name(op)
        if name is None:
            raise UnknownOperation(f"Operación desconocida: {canonical_key(op)}")
        if len(inputs) != 1:
            raise ArityMismatch(f"{name} recibe una entrada; recibió {len(inputs)}")
        result = _run_builtin(name, op, inputs[0])
        return Container(output_id, result.dims, result.cells)

    def runner(self, op: OperationSignature) -> Runner:
        """Cierre de una entrada sobre la operación"""
        return lambda c: self.execute(op, [c], output_id=f"{c.id}>{op.name}")


DEFAULT_REGISTRY = OperationRegistry()


def execute(op: OperationSignature, inputs: Sequence[Container], registry: Optional[OperationRegistry] = None,
            output_id: Optional[str] = None) -> Container:
    return (registry or DEFAULT_REGISTRY).execute(op, inputs, output_id)


class CountingRunner:
    """Envuelve un cierre y cuenta sus ejecuciones (seguro entre hilos)"""

    def __init__(self, fn: Runner):
        self.fn = fn
        self.calls = 0
        self.shapes: List[tuple] = []
        self._lock = threading.Lock()

    def __call__(self, c: Container) -> Container:
        with self._lock:
            self.calls += 1
            self.shapes.append(c.shape)
        return self.fn(c)

    def calls_with_shape(self, shape: tuple) -> int:
        return sum(1 for s in self.shapes if s == tuple(shape))


# Linaje exacto de las operaciones incorporadas

def predicate_cell_is_direct(v, cmp: str, value) -> bool:
    """¿Todo cambio de la celda del predicado elimina la fila?"""
    cmp = normalize_cmp(cmp)
    if cmp == '=':
        return True
    if isinstance(v, bool):
        return not compare(not v, cmp, value)
    return False


def _same_index(c: Container) -> List[LineageRecord]:
    records = []
    for idx in iter_indices(c):
        records.append(LineageRecord(idx, 0, idx, InfluenceKind.DIRECT))
        records.append(LineageRecord(idx, 0, idx, InfluenceKind.INDIRECT))
    return records


def _both(records: List[LineageRecord], out_idx: IndexTuple, in_idx: IndexTuple) -> None:
    records.append(LineageRecord(out_idx, 0, in_idx, InfluenceKind.DIRECT))
    records.append(LineageRecord(out_idx, 0, in_idx, InfluenceKind.INDIRECT))


def _exact_records(name: str, op: OperationSignature, A: Container, B: Container) -> List[LineageRecord]:
    p = op.params
    if name in ('map_add_constant', 'sort_by_column', 'project_columns'):
        return _same_index(B)
    records: List[LineageRecord] = []
    if name == 'drop_null_rows':
        for (r, col) in iter_indices(B):
            _both(records, (r, col), (r, col))
            for other in A.labels(1):
                records.append(LineageRecord((r, col), 0, (r, other), InfluenceKind.INDIRECT))
        return records
    if name == 'filter_rows':
        column = p['column']
        for (r, col) in iter_indices(B):
            _both(records, (r, col), (r, col))
            pred = (r, column)
            records.append(LineageRecord((r, col), 0, pred, InfluenceKind.INDIRECT))
            if predicate_cell_is_direct(A.cells[A.position(pred)], p['cmp'], p['value']):
                records.append(LineageRecord((r, col), 0, pred, InfluenceKind.DIRECT))
        return records
    if name == 'minmax_scale_columns':
        scaled = set(_as_columns(p['columns']))
        ranges = {col: _column_range(A, A.labels(1).index(col)) for col in scaled}
        for (r, col) in iter_indices(B):
            v = A.cells[A.position((r, col))]
            if col not in scaled or v is None:
                _both(records, (r, col), (r, col))
                continue
            # celdas interiores: cualquier cambio altera el valor escalado
            lo, hi = ranges[col]
            if lo < v < hi:
                records.append(LineageRecord((r, col), 0, (r, col), InfluenceKind.DIRECT))
            for other in A.labels(0):
                records.append(LineageRecord((r, col), 0, (other, col), InfluenceKind.INDIRECT))
        return records
    raise NotBuiltin(f"Sin regla analítica para {name}")


def capture_exact_lineage(op: OperationSignature, input: Container, output: Container) -> LineageTable:
    """Tabla Exact según el linaje analítico de cada operación incorporada"""
    name = builtin_name(op)
    if name is None:
        raise NotBuiltin(f"{canonical_key(op)} no es una operación incorporada")
    expected = _run_builtin(name, op, input)
    if not containers_equal(expected, output):
        raise OutputMismatch(f"La salida no corresponde a {canonical_key(op)} sobre {input.id}")
    records = _exact_records(name, op, input, output)
    return build_table(records, Completeness.EXACT, Origin(kind=OriginKind.CAPTURED_EXACT),
                       [input.schema], output.schema)


def declared_tags(op: OperationSignature) -> Optional[List[ConstraintTag]]:
    """Etiquetas a nivel de operación declaradas para las incorporadas (lista completa)"""
    name = builtin_name(op)
    if name is None:
        return None
    slice0 = ConstraintTag(kind=TagKind.SLICE, dim=0)
    slice1 = ConstraintTag(kind=TagKind.SLICE, dim=1)
    one = ConstraintTag(kind=TagKind.ONE_TO_ONE)
    ident = ConstraintTag(kind=TagKind.IDENTITY)
    p = op.params
    if name == 'drop_null_rows':
        return [slice0, ident]
    if name == 'filter_rows':
        tags = [slice0]
        if normalize_cmp(str(p.get('cmp', '='))) != '=' and not isinstance(p.get('value'), bool):
            tags.append(ident)
        tags.append(ConstraintTag(kind=TagKind.CONDITION, dim=1, index=str(p.get('column'))))
        return tags
    if name == 'minmax_scale_columns':
        return [slice1]
    if name == 'map_add_constant':
        tags = [one, slice0, slice1]
        if p.get('k', 1) == 0:
            tags.append(ident)
        return tags
    return [one, ident]
