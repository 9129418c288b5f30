"""Ingesta y ejecución de flujos de trabajo (DAG) con captura de linaje.

Orden de resolución del linaje de cada nodo:
    (a) tabla en la base de conocimiento para la firma de nodo
    (b) captura analítica exacta (operaciones incorporadas)
    (c) política oracle: oráculo de influencia
    (d) política learn: aprendizaje por perturbación
    (e) tabla de completitud desconocida
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import networkx as nx
import toml
from pydantic import ValidationError

from .config import CONTAINER_ENCODING, EXTERNAL_MAX_WORKERS, ORACLE_MAX_WORKERS
from .constants import MENSAJES_ERROR, POLITICAS_CAPTURA
from .container import Container
from .data_loader import load_container, save_container, write_atomic
from .knowledge_base import KnowledgeBase
from .learn import learn_lineage, unknown_table
from .lineage_store import LineageTable, build_table, compress_table, decompress_table, table_to_text
from .models import (
    Completeness, ContainerRef, LearnConfig, NodeRun, NodeSignature, Origin, OriginKind, RunManifest, WorkflowDag, WorkflowNode
)
from .oracle import influence_oracle
from .ops import (
    CountingRunner, OperationRegistry, canonical_key, capture_exact_lineage, declared_tags, node_key, node_signature
)
from utils.error_handling import (
    CorruptPayload, CycleDetected, DuplicateId, ExecutionFailure, MalformedContainer, UnknownContainerRef,
    WorkflowParseError
)

logger = logging.getLogger(__name__)


def load_workflow_document(path: Path) -> Dict[str, Any]:
    """Lee un documento de flujo en JSON o TOML"""
    path = Path(path)
    try:
        text = path.read_text(encoding=CONTAINER_ENCODING)
        if path.suffix == ".toml":
            return toml.loads(text)
        return json.loads(text)
    except FileNotFoundError as e:
        raise WorkflowParseError(f"{MENSAJES_ERROR['archivo_no_encontrado']}: {path}") from e
    except (ValueError, toml.TomlDecodeError, OSError) as e:
        raise WorkflowParseError(f"{MENSAJES_ERROR['flujo_invalido']}: {e}") from e


def parse_workflow(doc: Dict[str, Any], base_dir: Optional[Union[str, Path]] = None) -> WorkflowDag:
    """Valida el documento y calcula un orden topológico estable"""
    try:
        containers = [ContainerRef.model_validate(c) for c in doc.get("containers", [])]
        nodes = [WorkflowNode.model_validate(n) for n in doc.get("nodes", [])]
    except (ValidationError, AttributeError, TypeError) as e:
        raise WorkflowParseError(f"{MENSAJES_ERROR['flujo_invalido']}: {e}") from e

    producers: Dict[str, str] = {}
    for ref in containers:
        if ref.id in producers:
            raise DuplicateId(f"Contenedor declarado dos veces: {ref.id}")
        producers[ref.id] = ""
    node_ids = set()
    for node in nodes:
        if node.id in node_ids:
            raise DuplicateId(f"Nodo duplicado: {node.id}")
        node_ids.add(node.id)
        if node.output in producers:
            raise DuplicateId(f"El contenedor {node.output} tiene más de un productor")
        producers[node.output] = node.id

    graph = nx.DiGraph()
    position = {node.id: k for k, node in enumerate(nodes)}
    graph.add_nodes_from(position)
    for node in nodes:
        for ref in node.inputs:
            if ref not in producers:
                raise UnknownContainerRef(f"El nodo {node.id} usa el contenedor no declarado {ref}")
            if producers[ref]:
                graph.add_edge(producers[ref], node.id)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CycleDetected(f"Ciclo en el flujo: {' -> '.join(u for u, _ in cycle)}")
    order = list(nx.lexicographical_topological_sort(graph, key=lambda n: position[n]))
    return WorkflowDag(containers=containers, nodes=nodes, order=order,
                       base_dir=str(base_dir) if base_dir is not None else None)


def load_workflow(path: Path) -> WorkflowDag:
    path = Path(path)
    return parse_workflow(load_workflow_document(path), base_dir=path.parent.resolve())


class RunRecord:
    """Registro de una ejecución: contenedores materializados y linaje por nodo"""

    def __init__(self, dag: WorkflowDag, registry: OperationRegistry, policy: str,
                 kb_dir: Optional[Path] = None):
        self.dag = dag
        self.registry = registry
        self.policy = policy
        self.kb_dir = kb_dir
        self.order: List[str] = list(dag.order)
        self.containers: Dict[str, Container] = {}
        self.tables: Dict[str, LineageTable] = {}
        self.signatures: Dict[str, NodeSignature] = {}
        self.sources: Dict[str, str] = {}
        self.stats = {"kb_hits": 0, "captures": 0, "executions": 0}

    def node(self, node_id: str) -> Optional[WorkflowNode]:
        return self.dag.node(node_id)

    def table(self, node_id: str) -> LineageTable:
        return self.tables[node_id]

    def node_runs(self) -> List[NodeRun]:
        runs = []
        for node_id in self.order:
            node = self.dag.node(node_id)
            t = self.tables[node_id]
            runs.append(NodeRun(node_id=node_id, signature=self.signatures[node_id], inputs=node.inputs,
                                output=node.output, origin=t.origin, completeness=t.completeness,
                                source=self.sources[node_id], table_file=f"lineage/{node_id}.xplt"))
        return runs


def build_registry(dag: WorkflowDag) -> OperationRegistry:
    """Registra las operaciones externas con su directorio de trabajo resuelto"""
    registry = OperationRegistry()
    base = Path(dag.base_dir) if dag.base_dir else Path.cwd()
    for node in dag.nodes:
        if node.is_external:
            workdir = base / (node.exec.workdir or ".")
            registry.register_external(node.op, node.exec.model_copy(update={"workdir": str(workdir)}))
    return registry


def seed_declared_tags(dag: WorkflowDag, registry: OperationRegistry, kb: KnowledgeBase) -> None:
    """Siembra las etiquetas declaradas de las incorporadas que aún no estén en la KB"""
    for node in dag.nodes:
        if not registry.is_builtin(node.op):
            continue
        key = canonical_key(node.op)
        if kb.latest(key, "tags") is None:
            kb.store_tags(key, declared_tags(node.op), Origin(kind=OriginKind.DECLARED))


def _resolve_lineage(record: RunRecord, node: WorkflowNode, inputs: List[Container], output: Container,
                     kb: Optional[KnowledgeBase], policy: str, cfg: LearnConfig) -> LineageTable:
    op = node.op
    key = node_key(record.signatures[node.id])
    if kb is not None:
        hit = kb.latest_table(key)
        if hit is not None and hit[1].input_schemas == tuple(c.schema for c in inputs):
            logger.info(f"[{node.id}] linaje recuperado de la KB ({hit[1].origin.label})")
            record.stats["kb_hits"] += 1
            record.sources[node.id] = "kb"
            return hit[1]

    single = len(inputs) == 1
    workers = EXTERNAL_MAX_WORKERS if node.is_external else ORACLE_MAX_WORKERS
    table: Optional[LineageTable] = None
    if record.registry.is_builtin(op) and single:
        table = capture_exact_lineage(op, inputs[0], output)
        record.sources[node.id] = "captured_exact"
    elif policy == "oracle" and single:
        counter = CountingRunner(record.registry.runner(op))
        table = influence_oracle(counter, inputs[0], max_workers=workers)
        record.stats["executions"] += counter.calls
        record.sources[node.id] = "oracle"
    elif policy == "learn" and single:
        counter = CountingRunner(record.registry.runner(op))
        report = learn_lineage(counter, inputs[0], op, cfg, full_output=output, max_workers=workers)
        record.stats["executions"] += counter.calls
        record.sources[node.id] = "learnt"
        table = report.table
        if kb is not None and report.tags:
            kb.store_tags(canonical_key(op), report.tags, report.origin)

    if table is None:
        logger.warning(f"[{node.id}] sin captura de linaje; tabla de completitud desconocida")
        record.sources[node.id] = "unknown"
        origin = Origin(kind=OriginKind.DECLARED, note="no lineage captured")
        if single:
            return unknown_table(inputs[0], output, origin)
        return build_table([], Completeness.UNKNOWN, origin, [c.schema for c in inputs], output.schema)

    logger.info(f"[{node.id}] linaje capturado ({record.sources[node.id]}, {len(table)} registros)")
    record.stats["captures"] += 1
    if kb is not None:
        kb.store_lineage(key, table)
    return table


def run_workflow(dag: WorkflowDag, kb: Optional[KnowledgeBase] = None, policy: str = "oracle",
                 cfg: Optional[LearnConfig] = None, registry: Optional[OperationRegistry] = None) -> RunRecord:
    """Ejecuta los nodos en orden topológico y resuelve el linaje de cada uno"""
    if policy not in POLITICAS_CAPTURA:
        raise WorkflowParseError(f"Política de captura desconocida: {policy}")
    cfg = cfg or LearnConfig()
    registry = registry or build_registry(dag)
    record = RunRecord(dag, registry, policy, kb.root if kb is not None else None)
    base = Path(dag.base_dir) if dag.base_dir else Path.cwd()

    for ref in dag.containers:
        path = Path(ref.path)
        c = load_container(path if path.is_absolute() else base / path)
        record.containers[ref.id] = Container(ref.id, c.dims, c.cells)

    if kb is not None:
        seed_declared_tags(dag, registry, kb)

    for node_id in record.order:
        node = dag.node(node_id)
        inputs = [record.containers[i] for i in node.inputs]
        logger.info(f"Ejecutando nodo {node_id}: {canonical_key(node.op)}")
        try:
            output = registry.execute(node.op, inputs, output_id=node.output)
        except ExecutionFailure as e:
            e.node_id = node_id
            logger.error(f"{MENSAJES_ERROR['ejecucion_fallida']}: {e}")
            raise
        record.containers[node.output] = output
        record.signatures[node_id] = node_signature(node.op, inputs, output)
        try:
            record.tables[node_id] = _resolve_lineage(record, node, inputs, output, kb, policy, cfg)
        except ExecutionFailure as e:
            e.node_id = e.node_id or node_id
            raise

    logger.info(f"Resumen: {record.stats['kb_hits']} aciertos de KB, {record.stats['captures']} capturas nuevas, "
                f"{record.stats['executions']} ejecuciones de captura")
    return record


def save_run(record: RunRecord, out_dir: Path) -> Path:
    """Persiste contenedores, tablas de linaje y el manifiesto de la ejecución"""
    out_dir = Path(out_dir)
    for cid, c in record.containers.items():
        save_container(c, out_dir / "containers" / f"{cid}.json")
    for node_id, t in record.tables.items():
        write_atomic(out_dir / "lineage" / f"{node_id}.xplt", compress_table(t))
        write_atomic(out_dir / "lineage" / f"{node_id}.csv", table_to_text(t))
    manifest = RunManifest(workflow=record.dag, order=record.order, nodes=record.node_runs(),
                           kb_dir=str(record.kb_dir) if record.kb_dir else None, policy=record.policy)
    write_atomic(out_dir / "run.json", manifest.model_dump_json(indent=2) + "\n")
    logger.info(f"Ejecución guardada en {out_dir}")
    return out_dir


def load_run(out_dir: Path) -> RunRecord:
    """Reconstruye un RunRecord desde un directorio de ejecución"""
    out_dir = Path(out_dir)
    try:
        manifest = RunManifest.model_validate_json((out_dir / "run.json").read_text(encoding=CONTAINER_ENCODING))
    except (OSError, ValidationError, ValueError) as e:
        raise WorkflowParseError(f"Directorio de ejecución inválido {out_dir}: {e}") from e
    dag = manifest.workflow
    record = RunRecord(dag, build_registry(dag), manifest.policy,
                       Path(manifest.kb_dir) if manifest.kb_dir else None)
    record.order = list(manifest.order)
    try:
        ids = [ref.id for ref in dag.containers] + [n.output for n in dag.nodes]
        for cid in ids:
            record.containers[cid] = load_container(out_dir / "containers" / f"{cid}.json")
        for run in manifest.nodes:
            record.tables[run.node_id] = decompress_table((out_dir / run.table_file).read_text(encoding=CONTAINER_ENCODING))
            record.signatures[run.node_id] = run.signature
            record.sources[run.node_id] = run.source
    except (OSError, MalformedContainer, CorruptPayload) as e:
        raise WorkflowParseError(f"Directorio de ejecución incompleto {out_dir}: {e}") from e
    return record
