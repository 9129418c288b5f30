"""Servicio de consultas de procedencia sobre una ejecución y la base de conocimiento"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Set, Tuple, Union

from .constants import MENSAJES_ERROR
from .container import Container, containers_equal
from .knowledge_base import KnowledgeBase
from .lineage_store import LineageTable, compose_tables, query_table, restrict_to_slot
from .models import AssertionResult, ConstraintTag, KBEntry, OperationSignature, PathQuery, QueryResult, TagKind, WorkflowNode
from .ops import canonical_key, declared_tags
from .tags import parse_tag, parse_tag_kind, satisfying_params, assert_on_instance
from .workflow import RunRecord
from utils.error_handling import ExecutionFailure, InvalidPath, UnknownTarget

logger = logging.getLogger(__name__)


class ProvenanceService:
    """Primitivas de consulta (prov_query, assert_tag) y sus aplicaciones"""

    def __init__(self, record: Optional[RunRecord] = None, kb: Optional[KnowledgeBase] = None):
        self.record = record
        if kb is None and record is not None and record.kb_dir is not None and Path(record.kb_dir).exists():
            kb = KnowledgeBase(Path(record.kb_dir))
        self.kb = kb

    def _require_record(self) -> RunRecord:
        if self.record is None:
            raise UnknownTarget("Esta consulta necesita un directorio de ejecución")
        return self.record

    def _node(self, node_id: str) -> WorkflowNode:
        node = self._require_record().node(node_id)
        if node is None:
            raise UnknownTarget(f"{MENSAJES_ERROR['objetivo_desconocido']}: {node_id}")
        return node

    def _hop(self, upstream: str, downstream: str) -> LineageTable:
        record = self._require_record()
        node = record.dag.producer(downstream)
        if node is None or upstream not in node.inputs:
            raise InvalidPath(f"{MENSAJES_ERROR['ruta_invalida']}: {upstream} -> {downstream}")
        table = record.tables[node.id]
        return restrict_to_slot(table, node.inputs.index(upstream))

    def prov_query(self, q: PathQuery) -> QueryResult:
        """Entidades del último contenedor de la ruta relacionadas con los índices del primero"""
        if len(q.path) < 2:
            raise InvalidPath(f"{MENSAJES_ERROR['ruta_invalida']}: se necesitan al menos dos contenedores")
        hops = [self._hop(u, v) for u, v in zip(q.path, q.path[1:])]
        composed = hops[0]
        for t in hops[1:]:
            composed = compose_tables(composed, t)
        side = "backward" if q.backward else "forward"
        found = query_table(composed, side, q.indices, q.kind)
        return QueryResult(indices=sorted(found), completeness=composed.completeness[q.kind], origin=composed.origin)

    def _op_entry(self, op_key: str) -> Optional[KBEntry]:
        return self.kb.latest(op_key, "tags") if self.kb is not None else None

    def _resolve(self, target: str) -> Tuple[Optional[WorkflowNode], str]:
        if self.record is not None and self.record.node(target) is not None:
            node = self.record.node(target)
            return node, canonical_key(node.op)
        if self._op_entry(target) is not None:
            return None, target
        raise UnknownTarget(f"{MENSAJES_ERROR['objetivo_desconocido']}: {target}")

    def assert_tag(self, target: str, kind: Union[TagKind, str],
                   params: Optional[List[ConstraintTag]] = None) -> AssertionResult:
        """Primero la base de conocimiento; si no hay entrada, aserción sobre la instancia"""
        kind = parse_tag_kind(kind) if isinstance(kind, str) else kind
        node, op_key = self._resolve(target)
        entry = self._op_entry(op_key)
        if entry is not None:
            known = [parse_tag(t) for t in entry.tags]
            if params is None:
                matched = [t for t in known if t.kind == kind]
                return AssertionResult(target=target, kind=kind, satisfied=bool(matched), params=matched,
                                       source="kb", origin=entry.origin)
            matched = [p for p in params if p in known]
            return AssertionResult(target=target, kind=kind, satisfied=len(matched) == len(params),
                                   params=matched, source="kb", origin=entry.origin)

        record = self._require_record()
        table = restrict_to_slot(record.tables[node.id], 0)
        input: Container = record.containers[node.inputs[0]]
        output: Container = record.containers[node.output]
        if params is None:
            matched = satisfying_params(kind, table, input, output, node.op)
            satisfied = bool(matched)
        else:
            matched = [p for p in params if assert_on_instance(p, table, input, output)]
            satisfied = len(matched) == len(params)
        return AssertionResult(target=target, kind=kind, satisfied=satisfied, params=matched,
                               source="instance", origin=table.origin)

    def row_wise(self, nodes: Iterable[str]) -> Set[str]:
        """Nodos que no son fila a fila (fallan Slice[0])"""
        slice0 = ConstraintTag(kind=TagKind.SLICE, dim=0)
        offending = {n for n in nodes if not self.assert_tag(n, TagKind.SLICE, [slice0]).satisfied}
        if offending:
            logger.info(f"Nodos que no son fila a fila: {sorted(offending)}")
        return offending

    def _slice_identity_dims(self, node_id: str) -> Set[int]:
        identity = self.assert_tag(node_id, TagKind.IDENTITY)
        if not identity.satisfied:
            return set()
        dims = {t.dim for t in self.assert_tag(node_id, TagKind.SLICE).params}
        if identity.source == "kb":
            return dims
        # Una instancia sólo confirma etiquetas que la operación garantiza en general
        op = self._node(node_id).op
        declared = declared_tags(op) if self._require_record().registry.is_builtin(op) else None
        if declared is None:
            logger.warning(f"{node_id}: caja negra sin etiquetas a nivel de operación; no se considera reordenable")
            return set()
        if not any(t.kind == TagKind.IDENTITY for t in declared):
            return set()
        return dims & {t.dim for t in declared if t.kind == TagKind.SLICE}

    def double_slice(self, parent: str, child: str) -> bool:
        """¿Ambos nodos cortan la misma dimensión preservando valores?"""
        parent_node, child_node = self._node(parent), self._node(child)
        if parent_node.output not in child_node.inputs:
            raise InvalidPath(f"{MENSAJES_ERROR['ruta_invalida']}: {parent} no alimenta a {child}")
        return bool(self._slice_identity_dims(parent) & self._slice_identity_dims(child))

    def verify_reorder(self, parent: str, child: str) -> bool:
        """Ejecuta ambos órdenes sobre la entrada del padre y compara las salidas"""
        record = self._require_record()
        parent_op: OperationSignature = self._node(parent).op
        child_op: OperationSignature = self._node(child).op
        A = record.containers[self._node(parent).inputs[0]]
        run = record.registry.execute
        forward = run(child_op, [run(parent_op, [A])])
        try:
            swapped = run(parent_op, [run(child_op, [A])])
        except ExecutionFailure as e:
            logger.info(f"El orden {child} -> {parent} no se puede ejecutar: {e}")
            return False
        return containers_equal(forward, swapped)
