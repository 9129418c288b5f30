"""Etiquetas de restricción de linaje.

Cada etiqueta tiene una función de aserción sobre (linaje, entrada, salida)
y una función de restricción máxima que produce el linaje más holgado
compatible con la etiqueta.
"""
import logging
import re
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .config import CONDITION_LABEL_BOUND
from .constants import MENSAJES_ERROR
from .container import Container, iter_indices, scalars_equal
from .lineage_store import LineageRecord, LineageTable, build_table
from .models import (
    Completeness, ConstraintTag, ContainerSchema, IndexTuple, InfluenceKind, OperationSignature,
    Origin, OriginKind, TagKind
)
from utils.error_handling import InsufficientLineage, SchemaMismatch

logger = logging.getLogger(__name__)

_TAG_RE = re.compile(r"^\s*(OneToOne|Identity|Slice|Condition)\s*(?:\[\s*([^\]]*)\])?\s*$")


def parse_tag_kind(text: str) -> TagKind:
    try:
        return TagKind(text.strip())
    except ValueError:
        raise SchemaMismatch(f"Tipo de etiqueta desconocido: {text!r}") from None


def parse_tag(text: str) -> ConstraintTag:
    """`OneToOne`, `Identity`, `Slice[0]`, `Condition[1,Age]`"""
    m = _TAG_RE.match(text)
    if not m:
        raise SchemaMismatch(f"Etiqueta inválida: {text!r}")
    kind = TagKind(m.group(1))
    args = m.group(2)
    if kind in (TagKind.ONE_TO_ONE, TagKind.IDENTITY):
        if args:
            raise SchemaMismatch(f"{kind.value} no admite parámetros")
        return ConstraintTag(kind=kind)
    if args is None:
        raise SchemaMismatch(f"{kind.value} requiere parámetros")
    try:
        if kind == TagKind.SLICE:
            return ConstraintTag(kind=kind, dim=int(args))
        dim, index = args.split(",", 1)
        return ConstraintTag(kind=kind, dim=int(dim), index=index.strip())
    except ValueError:
        raise SchemaMismatch(f"Parámetros inválidos en {text!r}") from None


def _check_schemas(lin: LineageTable, input: Container, output: Container) -> None:
    if len(lin.input_schemas) != 1 or lin.input_schemas[0] != input.schema or lin.output_schema != output.schema:
        raise SchemaMismatch("Los esquemas del linaje no coinciden con la entrada/salida")


def _check_dim(tag: ConstraintTag, schema: ContainerSchema) -> None:
    if tag.dim is None or not 0 <= tag.dim < schema.ndim:
        raise SchemaMismatch(f"{tag}: dimensión fuera de rango para {schema.ndim} dimensiones")
    if tag.kind == TagKind.CONDITION and tag.index not in schema.dims[tag.dim].indices:
        raise SchemaMismatch(f"{tag}: la etiqueta {tag.index!r} no existe en la dimensión {tag.dim}")


def _constrained_kinds(kind: TagKind) -> List[InfluenceKind]:
    if kind == TagKind.ONE_TO_ONE:
        return [InfluenceKind.DIRECT, InfluenceKind.INDIRECT]
    if kind == TagKind.IDENTITY:
        return [InfluenceKind.DIRECT]
    return [InfluenceKind.INDIRECT]


def _is_subsequence(sub: Sequence[str], seq: Sequence[str]) -> bool:
    it = iter(seq)
    return all(label in it for label in sub)


def slice_structure_ok(d: int, input_schema: ContainerSchema, output_schema: ContainerSchema) -> bool:
    """Mismas etiquetas fuera de `d`; a lo largo de `d`, subsecuencia ordenada"""
    if input_schema.ndim != output_schema.ndim:
        return False
    for k, (din, dout) in enumerate(zip(input_schema.dims, output_schema.dims)):
        if k == d:
            if not _is_subsequence(dout.indices, din.indices):
                return False
        elif din.indices != dout.indices:
            return False
    return True


def assert_on_instance(tag: ConstraintTag, lin: LineageTable, input: Container, output: Container) -> bool:
    """Comprueba si una instancia (linaje, entrada, salida) cumple la etiqueta"""
    _check_schemas(lin, input, output)
    for kind in _constrained_kinds(tag.kind):
        if lin.completeness[kind] == Completeness.UNKNOWN:
            raise InsufficientLineage(f"{MENSAJES_ERROR['linaje_insuficiente']}: {tag} con linaje {kind.value} desconocido")
    direct = lin.influencers(InfluenceKind.DIRECT)
    indirect = lin.influencers(InfluenceKind.INDIRECT)
    outputs = list(iter_indices(output))

    if tag.kind == TagKind.ONE_TO_ONE:
        return all(direct.get(b, set()) == {b} and indirect.get(b, set()) == {b} for b in outputs)

    if tag.kind == TagKind.IDENTITY:
        for b in outputs:
            sources = direct.get(b, set())
            if len(sources) != 1:
                return False
            (a,) = sources
            if not scalars_equal(input.cells[input.position(a)], output.cells[output.position(b)]):
                return False
        return True

    _check_dim(tag, input.schema)
    d = tag.dim
    if tag.kind == TagKind.SLICE:
        if not slice_structure_ok(d, input.schema, output.schema):
            return False
        return all(a[d] == b[d] for b in outputs for a in indirect.get(b, ()))

    # Condition
    if input.ndim != output.ndim:
        return False
    witness = False
    for b in outputs:
        sources = indirect.get(b, set())
        for a in sources:
            if any(a[k] != b[k] for k in range(len(b)) if k != d) or a[d] not in (tag.index, b[d]):
                return False
        if len(sources) > 1 and any(a[d] == tag.index for a in sources):
            witness = True
    return witness


def _both(records: List[LineageRecord], b: IndexTuple, a: IndexTuple) -> None:
    records.append(LineageRecord(b, 0, a, InfluenceKind.DIRECT))
    records.append(LineageRecord(b, 0, a, InfluenceKind.INDIRECT))


def max_constraint_lineage(tag: ConstraintTag, input: Container, output: Container) -> LineageTable:
    """Linaje máximo compatible con la etiqueta (sobre-aproximación)"""
    if input.ndim != output.ndim:
        raise SchemaMismatch(f"{tag}: la entrada y la salida tienen distinta dimensionalidad")
    records: List[LineageRecord] = []
    outputs = list(iter_indices(output))
    inputs = list(iter_indices(input))

    if tag.kind == TagKind.ONE_TO_ONE:
        for b in outputs:
            if input.has_index(b):
                _both(records, b, b)
    elif tag.kind == TagKind.IDENTITY:
        for b in outputs:
            vb = output.cells[output.position(b)]
            for a in inputs:
                records.append(LineageRecord(b, 0, a, InfluenceKind.INDIRECT))
                if scalars_equal(input.cells[input.position(a)], vb):
                    records.append(LineageRecord(b, 0, a, InfluenceKind.DIRECT))
    elif tag.kind == TagKind.SLICE:
        _check_dim(tag, input.schema)
        d = tag.dim
        if not slice_structure_ok(d, input.schema, output.schema):
            raise SchemaMismatch(f"{tag}: la estructura de salida no es un corte de la entrada")
        by_label: Dict[str, List[IndexTuple]] = defaultdict(list)
        for a in inputs:
            by_label[a[d]].append(a)
        for b in outputs:
            for a in by_label.get(b[d], ()):
                _both(records, b, a)
    else:
        _check_dim(tag, input.schema)
        d = tag.dim
        # Direct ⊆ Indirect: ambos quedan restringidos al mismo conjunto
        for b in outputs:
            for label in {tag.index, b[d]}:
                a = b[:d] + (label,) + b[d + 1:]
                if input.has_index(a):
                    _both(records, b, a)

    origin = Origin(kind=OriginKind.DECLARED, note=f"max_constraint {tag}")
    return build_table(records, Completeness.OVERAPPROX, origin, [input.schema], output.schema)


def param_labels(op: Optional[OperationSignature]) -> List[str]:
    if op is None:
        return []
    labels: List[str] = []
    for value in op.params.values():
        if isinstance(value, str):
            labels.append(value)
        elif isinstance(value, list):
            labels.extend(v for v in value if isinstance(v, str))
    return labels


def enumerate_candidate_params(kind: TagKind, input: Container, op: Optional[OperationSignature] = None,
                               bound: int = CONDITION_LABEL_BOUND) -> List[ConstraintTag]:
    """Parámetros candidatos de un tipo de etiqueta para una entrada dada"""
    if kind in (TagKind.ONE_TO_ONE, TagKind.IDENTITY):
        return [ConstraintTag(kind=kind)]
    if kind == TagKind.SLICE:
        return [ConstraintTag(kind=kind, dim=d) for d in range(input.ndim)]
    referenced = param_labels(op)
    candidates: List[ConstraintTag] = []
    for d in range(input.ndim):
        labels = input.labels(d)
        chosen = [label for label in referenced if label in labels]
        if len(labels) <= bound:
            chosen += list(labels)
        for label in dict.fromkeys(chosen):
            candidates.append(ConstraintTag(kind=kind, dim=d, index=label))
    return candidates


def satisfying_params(kind: TagKind, lin: LineageTable, input: Container, output: Container,
                      op: Optional[OperationSignature] = None,
                      candidates: Optional[Iterable[ConstraintTag]] = None) -> List[ConstraintTag]:
    """Subconjunto de parámetros para los que la aserción se cumple"""
    if candidates is None:
        candidates = enumerate_candidate_params(kind, input, op)
    satisfied = []
    for tag in candidates:
        try:
            if assert_on_instance(tag, lin, input, output):
                satisfied.append(tag)
        except SchemaMismatch as e:
            logger.debug(f"Candidato {tag} descartado: {e}")
    return satisfied


def tags_from_texts(texts: Iterable[str]) -> Set[ConstraintTag]:
    return {parse_tag(t) for t in texts}
