"""Representación relacional del linaje.

Cada registro enlaza una entidad de salida con una entidad de entrada que la
influye. Una consulta Indirect devuelve la unión de registros Direct e Indirect:
la captura siempre emite el registro Indirect de cada registro Direct.
"""
import io
import json
import logging
from collections import defaultdict
from itertools import product
from typing import Dict, FrozenSet, Iterable, List, Literal, Mapping, NamedTuple, Optional, Sequence, Set, Tuple, Union

import pandas as pd

from .constants import MAGIA_COMPRIMIDO, RANGO_COMPLETITUD, RANGO_ORIGEN
from .models import Completeness, ContainerSchema, IndexTuple, InfluenceKind, Origin, OriginKind
from utils.error_handling import CorruptPayload, EmptyInput, SchemaMismatch, SchemaViolation

logger = logging.getLogger(__name__)

KINDS = (InfluenceKind.DIRECT, InfluenceKind.INDIRECT)


class LineageRecord(NamedTuple):
    out_idx: IndexTuple
    in_slot: int
    in_idx: IndexTuple
    kind: InfluenceKind


class LineageTable:
    """Conjunto inmutable de registros con completitud por tipo y origen"""

    __slots__ = ("records", "completeness", "origin", "input_schemas", "output_schema")

    def __init__(self, records: FrozenSet[LineageRecord], completeness: Mapping[InfluenceKind, Completeness],
                 origin: Origin, input_schemas: Tuple[ContainerSchema, ...], output_schema: ContainerSchema):
        self.records = records
        self.completeness = dict(completeness)
        self.origin = origin
        self.input_schemas = input_schemas
        self.output_schema = output_schema

    def of_kind(self, kind: InfluenceKind) -> Set[LineageRecord]:
        """Registros que responden a una consulta del tipo dado"""
        if kind == InfluenceKind.DIRECT:
            return {r for r in self.records if r.kind == InfluenceKind.DIRECT}
        return set(self.records)

    def influencers(self, kind: InfluenceKind, slot: int = 0) -> Dict[IndexTuple, Set[IndexTuple]]:
        """Mapa salida -> entradas que la influyen (semántica de consulta)"""
        out: Dict[IndexTuple, Set[IndexTuple]] = defaultdict(set)
        for r in self.of_kind(kind):
            if r.in_slot == slot:
                out[r.out_idx].add(r.in_idx)
        return out

    def same_schemas(self, other: "LineageTable") -> bool:
        return self.input_schemas == other.input_schemas and self.output_schema == other.output_schema

    def __len__(self) -> int:
        return len(self.records)

    def __repr__(self) -> str:
        comp = ",".join(f"{k.value}={v.value}" for k, v in self.completeness.items())
        return f"LineageTable({len(self.records)} registros, {comp}, origin={self.origin.label})"


def _normalize_completeness(completeness: Union[Completeness, Mapping[InfluenceKind, Completeness]]) -> Dict[InfluenceKind, Completeness]:
    if isinstance(completeness, Completeness):
        return {k: completeness for k in KINDS}
    return {k: Completeness(completeness[k]) for k in KINDS}


def build_table(records: Iterable[LineageRecord],
                completeness: Union[Completeness, Mapping[InfluenceKind, Completeness]],
                origin: Origin,
                input_schemas: Sequence[ContainerSchema],
                output_schema: ContainerSchema) -> LineageTable:
    """Construye una tabla deduplicada validando cada registro contra los esquemas"""
    input_schemas = tuple(input_schemas)
    out_sets = [set(d.indices) for d in output_schema.dims]
    in_sets = [[set(d.indices) for d in s.dims] for s in input_schemas]

    def _valid(idx, sets) -> bool:
        return len(idx) == len(sets) and all(label in s for label, s in zip(idx, sets))

    checked = set()
    for r in records:
        r = LineageRecord(tuple(r.out_idx), int(r.in_slot), tuple(r.in_idx), InfluenceKind(r.kind))
        if not _valid(r.out_idx, out_sets):
            raise SchemaViolation(f"Índice de salida {r.out_idx} fuera del esquema")
        if not 0 <= r.in_slot < len(input_schemas):
            raise SchemaViolation(f"Slot de entrada {r.in_slot} inexistente")
        if not _valid(r.in_idx, in_sets[r.in_slot]):
            raise SchemaViolation(f"Índice de entrada {r.in_idx} fuera del esquema del slot {r.in_slot}")
        checked.add(r)
    return LineageTable(frozenset(checked), _normalize_completeness(completeness), origin,
                        input_schemas, output_schema)


def weakest_completeness(values: Iterable[Completeness]) -> Completeness:
    return max(values, key=lambda c: RANGO_COMPLETITUD[Completeness(c).value])


def weakest_origin(origins: Sequence[Origin]) -> Origin:
    """Origen menos confiable; entre aprendidos conserva el mayor número de ejemplos"""
    worst = max(origins, key=lambda o: RANGO_ORIGEN[o.kind.value])
    if worst.kind == OriginKind.LEARNT:
        count = max(o.example_count or 0 for o in origins if o.kind == OriginKind.LEARNT)
        return Origin(kind=OriginKind.LEARNT, example_count=count, timestamp=worst.timestamp, note=worst.note)
    return worst


def intersect_tables(tables: Sequence[LineageTable]) -> LineageTable:
    """Intersección por tipo de los registros de varias tablas"""
    if not tables:
        raise EmptyInput("No hay tablas que intersectar")
    first = tables[0]
    for t in tables[1:]:
        if not t.same_schemas(first):
            raise SchemaMismatch("Las tablas a intersectar no comparten esquemas")
    records = set(first.records)
    for t in tables[1:]:
        records &= t.records
    completeness = {}
    for k in KINDS:
        ok = all(t.completeness[k] in (Completeness.EXACT, Completeness.OVERAPPROX) for t in tables)
        completeness[k] = Completeness.OVERAPPROX if ok else Completeness.UNKNOWN
    count = max(t.origin.example_count or 0 for t in tables)
    origin = Origin(kind=OriginKind.LEARNT, example_count=count)
    return LineageTable(frozenset(records), completeness, origin, first.input_schemas, first.output_schema)


def compose_tables(upstream: LineageTable, downstream: LineageTable) -> LineageTable:
    """Join relacional sobre el contenedor intermedio.

    Direct∘Direct = Direct; cualquier otra combinación es Indirect.
    """
    if len(downstream.input_schemas) != 1 or downstream.input_schemas[0] != upstream.output_schema:
        raise SchemaMismatch("La salida de la tabla previa no coincide con la entrada de la siguiente")
    by_middle: Dict[IndexTuple, List[LineageRecord]] = defaultdict(list)
    for r in upstream.records:
        by_middle[r.out_idx].append(r)
    records = set()
    for r2 in downstream.records:
        for r1 in by_middle.get(r2.in_idx, ()):
            records.add(LineageRecord(r2.out_idx, r1.in_slot, r1.in_idx, InfluenceKind.INDIRECT))
            if r1.kind == InfluenceKind.DIRECT and r2.kind == InfluenceKind.DIRECT:
                records.add(LineageRecord(r2.out_idx, r1.in_slot, r1.in_idx, InfluenceKind.DIRECT))
    completeness = {k: weakest_completeness([upstream.completeness[k], downstream.completeness[k]]) for k in KINDS}
    origin = weakest_origin([upstream.origin, downstream.origin])
    return LineageTable(frozenset(records), completeness, origin, upstream.input_schemas, downstream.output_schema)


def restrict_to_slot(t: LineageTable, slot: int) -> LineageTable:
    """Vista de un solo slot de entrada, renumerado a 0"""
    if not 0 <= slot < len(t.input_schemas):
        raise SchemaViolation(f"Slot de entrada {slot} inexistente")
    records = frozenset(r._replace(in_slot=0) for r in t.records if r.in_slot == slot)
    return LineageTable(records, t.completeness, t.origin, (t.input_schemas[slot],), t.output_schema)


def query_table(t: LineageTable, side: Literal["forward", "backward"], indices: Iterable[IndexTuple],
                kind: InfluenceKind, slot: int = 0) -> Set[IndexTuple]:
    """Entidades alcanzables desde `indices` en la dirección indicada"""
    indices = {tuple(i) for i in indices}
    schema = t.input_schemas[slot] if side == "forward" else t.output_schema
    for idx in indices:
        if not schema.is_valid(idx):
            raise SchemaViolation(f"Índice {idx} fuera del esquema")
    result = set()
    for r in t.of_kind(kind):
        if r.in_slot != slot:
            continue
        if side == "forward" and r.in_idx in indices:
            result.add(r.out_idx)
        elif side == "backward" and r.out_idx in indices:
            result.add(r.in_idx)
    return result


# Compresión por rangos

def _positions(schema: ContainerSchema) -> List[Dict[str, int]]:
    return [{label: p for p, label in enumerate(d.indices)} for d in schema.dims]


def _merge_boxes(points: Iterable[Tuple[int, ...]], naxes: int) -> List[Tuple[Tuple[int, int], ...]]:
    """Fusiona puntos en rectángulos alineados a los ejes, eje por eje"""
    boxes = [tuple((p, p) for p in pt) for pt in points]
    for axis in range(naxes):
        groups: Dict[tuple, List[Tuple[int, int]]] = defaultdict(list)
        for b in boxes:
            groups[b[:axis] + b[axis + 1:]].append(b[axis])
        merged = []
        for key, ivs in groups.items():
            ivs.sort()
            cur = ivs[0]
            for iv in ivs[1:]:
                if iv[0] == cur[1] + 1:
                    cur = (cur[0], iv[1])
                else:
                    merged.append(key[:axis] + (cur,) + key[axis:])
                    cur = iv
            merged.append(key[:axis] + (cur,) + key[axis:])
        boxes = merged
    return sorted(boxes)


def compress_table(t: LineageTable) -> str:
    """Codifica la tabla como bloque de texto XPLT1 con rectángulos de etiquetas"""
    out_pos = _positions(t.output_schema)
    header = {
        "completeness": {k.value: t.completeness[k].value for k in KINDS},
        "origin": json.loads(t.origin.model_dump_json()),
        "input_schemas": [json.loads(s.model_dump_json()) for s in t.input_schemas],
        "output_schema": json.loads(t.output_schema.model_dump_json()),
    }
    groups: Dict[Tuple[str, int], List[LineageRecord]] = defaultdict(list)
    for r in t.records:
        groups[(r.kind.value, r.in_slot)].append(r)
    lines = []
    for (kind, slot) in sorted(groups):
        in_pos = _positions(t.input_schemas[slot])
        n_out = len(out_pos)
        points = [tuple(out_pos[k][l] for k, l in enumerate(r.out_idx)) + tuple(in_pos[k][l] for k, l in enumerate(r.in_idx))
                  for r in groups[(kind, slot)]]
        labels = [d.indices for d in t.output_schema.dims] + [d.indices for d in t.input_schemas[slot].dims]
        for box in _merge_boxes(points, len(labels)):
            ranges = [[labels[a][s], labels[a][e]] for a, (s, e) in enumerate(box)]
            lines.append(json.dumps([kind, slot, ranges[:n_out], ranges[n_out:]], ensure_ascii=False))
    header["runs"] = len(lines)
    return "\n".join([MAGIA_COMPRIMIDO, json.dumps(header, ensure_ascii=False, sort_keys=True)] + lines) + "\n"


def decompress_table(payload: str) -> LineageTable:
    """Reconstruye la tabla exacta a partir de un bloque XPLT1"""
    lines = payload.splitlines()
    if not lines or lines[0] != MAGIA_COMPRIMIDO:
        raise CorruptPayload("Falta la cabecera XPLT1")
    try:
        header = json.loads(lines[1])
        input_schemas = tuple(ContainerSchema.model_validate(s) for s in header["input_schemas"])
        output_schema = ContainerSchema.model_validate(header["output_schema"])
        origin = Origin.model_validate(header["origin"])
        completeness = {InfluenceKind(k): Completeness(v) for k, v in header["completeness"].items()}
        runs = lines[2:]
        if len(runs) != header["runs"]:
            raise CorruptPayload("El número de rangos no coincide con la cabecera")
        out_pos = _positions(output_schema)
        records = set()
        for line in runs:
            kind, slot, out_ranges, in_ranges = json.loads(line)
            in_pos = _positions(input_schemas[slot])
            axes = []
            for pos, labels, (start, end) in zip(out_pos + in_pos,
                                                 [d.indices for d in output_schema.dims] + [d.indices for d in input_schemas[slot].dims],
                                                 out_ranges + in_ranges):
                s, e = pos[start], pos[end]
                if s > e:
                    raise CorruptPayload(f"Rango invertido {start}..{end}")
                axes.append(labels[s:e + 1])
            n_out = len(out_pos)
            for combo in product(*axes):
                records.add(LineageRecord(tuple(combo[:n_out]), int(slot), tuple(combo[n_out:]), InfluenceKind(kind)))
        return build_table(records, completeness, origin, input_schemas, output_schema)
    except CorruptPayload:
        raise
    except (IndexError, KeyError, TypeError, ValueError, SchemaViolation) as e:
        raise CorruptPayload(f"Bloque XPLT1 corrupto: {e}") from e


# Formato de texto canónico

def table_to_frame(t: LineageTable) -> pd.DataFrame:
    """Un registro por fila, ordenado lexicográficamente.

    Las columnas de entrada siguen el esquema de mayor aridad; los índices de
    ranuras más estrechas se completan con "".
    """
    out_cols = [f"out_{d.name}" for d in t.output_schema.dims]
    in_schema = max(t.input_schemas, key=lambda s: s.ndim, default=ContainerSchema(dims=()))
    in_cols = [f"in_{d.name}" for d in in_schema.dims]
    pad = in_schema.ndim
    rows = sorted(list(r.out_idx) + [str(r.in_slot)] + list(r.in_idx) + [""] * (pad - len(r.in_idx)) + [r.kind.value]
                  for r in t.records)
    return pd.DataFrame(rows, columns=out_cols + ["in_slot"] + in_cols + ["kind"], dtype=str)


def table_to_text(t: LineageTable) -> str:
    return table_to_frame(t).to_csv(index=False, lineterminator="\n")


def table_from_text(text: str, input_schemas: Sequence[ContainerSchema], output_schema: ContainerSchema,
                    completeness: Union[Completeness, Mapping[InfluenceKind, Completeness]],
                    origin: Origin) -> LineageTable:
    df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    n_out = output_schema.ndim
    records = []
    for row in df.itertuples(index=False, name=None):
        slot = int(row[n_out])
        width = input_schemas[slot].ndim if slot < len(input_schemas) else len(row) - n_out - 2
        in_idx = tuple(row[n_out + 1:n_out + 1 + width])
        records.append(LineageRecord(tuple(row[:n_out]), slot, in_idx, InfluenceKind(row[-1])))
    return build_table(records, completeness, origin, input_schemas, output_schema)
