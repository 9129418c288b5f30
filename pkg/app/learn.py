"""Captura de linaje aprendido para operaciones de caja negra.

Se generan contenedores pequeños a partir de la entrada registrada, se
perturban, se ejecuta la operación sobre ellos y sólo sobreviven las
etiquetas consistentes con todos los ejemplos. El linaje del contenedor
completo es la intersección de las tablas de restricción máxima.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import ORACLE_MAX_WORKERS
from .container import Container, iter_indices, subset_container, with_cell
from .lineage_store import LineageTable, build_table, intersect_tables
from .models import Completeness, ConstraintTag, LearnConfig, OperationSignature, Origin, OriginKind, TagKind
from .ops import Runner
from .oracle import StandardDomain, influence_oracle
from .tags import assert_on_instance, enumerate_candidate_params, max_constraint_lineage, param_labels
from utils.error_handling import AllExecutionsFailed, LineageError, NoExamples, NoTags, SchemaMismatch, SubsetTooLarge

logger = logging.getLogger(__name__)

Example = Tuple[Container, Container]


class LearnReport(BaseModel):
    """Resultado del aprendizaje de una operación"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tags: List[ConstraintTag] = Field(default_factory=list)
    origin: Origin
    table: Any
    n_examples: int = 0
    n_failed: int = 0


def _domain(cfg: LearnConfig) -> StandardDomain:
    return cfg.domain or StandardDomain()


def generate_small_containers(input: Container, op: Optional[OperationSignature], cfg: LearnConfig) -> List[Container]:
    """Sub-contenedores sembrados; las etiquetas citadas en los parámetros siempre se conservan"""
    rng = np.random.default_rng(cfg.rng_seed)
    referenced = set(param_labels(op))
    smalls = []
    for k in range(cfg.n_subsets):
        keep = []
        for d in range(input.ndim):
            labels = list(input.labels(d))
            size = cfg.size_for(d)
            if size > len(labels):
                if not cfg.allow_clamp:
                    raise SubsetTooLarge(f"subset_size={size} supera las {len(labels)} etiquetas de la dimensión {d}")
                logger.warning(f"subset_size={size} recortado a {len(labels)} en la dimensión {d}")
                size = len(labels)
            forced = [i for i, label in enumerate(labels) if label in referenced]
            others = [i for i, label in enumerate(labels) if label not in referenced]
            n_draw = min(max(size - len(forced), 0), len(others))
            drawn = rng.choice(len(others), size=n_draw, replace=False) if n_draw else []
            positions = sorted(forced + [others[j] for j in drawn])
            keep.append([labels[p] for p in positions])
        smalls.append(subset_container(input, keep, id=f"{input.id}~s{k}"))
    logger.debug(f"Generados {len(smalls)} contenedores pequeños desde {input.id}")
    return smalls


def perturb_containers(bases: Sequence[Container], cfg: LearnConfig) -> List[Container]:
    """Variantes que difieren de su base en exactamente una celda"""
    rng = np.random.default_rng([cfg.rng_seed, 1])
    domain = _domain(cfg)
    variants = []
    for base in bases:
        indices = list(iter_indices(base))
        if not indices:
            continue
        for j in range(cfg.n_perturbations):
            idx = indices[int(rng.integers(len(indices)))]
            alternatives = domain.alternatives(base, idx)
            if not alternatives:
                continue
            x = alternatives[int(rng.integers(len(alternatives)))]
            variants.append(with_cell(base, idx, x, id=f"{base.id}~p{j}"))
    return variants


def _try_run(run: Runner, c: Container) -> Optional[Container]:
    try:
        return run(c)
    except LineageError as e:
        logger.warning(f"Ejemplo {c.id} rechazado por la operación: {e}")
        return None


def collect_examples(run: Runner, containers: Sequence[Container], max_workers: int = 1) -> List[Example]:
    """Pares (entrada, salida); los fallos se registran y se omiten"""
    if not containers:
        raise NoExamples("No hay contenedores de ejemplo")
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(lambda c: _try_run(run, c), containers))
    else:
        outputs = [_try_run(run, c) for c in containers]
    pairs = [(c, out) for c, out in zip(containers, outputs) if out is not None]
    if not pairs:
        raise AllExecutionsFailed(f"Las {len(containers)} ejecuciones de ejemplo fallaron")
    return pairs


def _candidates_for(example: Example, op: Optional[OperationSignature], cfg: LearnConfig) -> List[ConstraintTag]:
    out = []
    for kind in TagKind:
        out.extend(enumerate_candidate_params(kind, example[0], op, cfg.condition_label_bound))
    return out


def _holds(tag: ConstraintTag, lin: LineageTable, inp: Container, out: Container) -> bool:
    try:
        return assert_on_instance(tag, lin, inp, out)
    except SchemaMismatch:
        return False


def infer_tags(run: Runner, examples: Sequence[Example], candidates: Optional[Sequence[ConstraintTag]] = None,
               cfg: Optional[LearnConfig] = None, op: Optional[OperationSignature] = None,
               max_workers: int = ORACLE_MAX_WORKERS) -> List[Tuple[ConstraintTag, Origin]]:
    """Sobreviven las etiquetas que se cumplen sobre el linaje de oráculo de cada ejemplo"""
    if not examples:
        raise NoExamples("infer_tags necesita al menos un ejemplo")
    cfg = cfg or LearnConfig()
    if candidates is None:
        candidates = _candidates_for(examples[0], op, cfg)
        for example in examples[1:]:
            allowed = set(_candidates_for(example, op, cfg))
            candidates = [t for t in candidates if t in allowed]
    survivors = list(dict.fromkeys(candidates))
    for inp, _ in examples:
        if not survivors:
            break
        lin = influence_oracle(run, inp, _domain(cfg), max_workers=max_workers)
        out = run(inp)
        survivors = [t for t in survivors if _holds(t, lin, inp, out)]
    origin = Origin(kind=OriginKind.LEARNT, example_count=len(examples))
    logger.info(f"Etiquetas supervivientes tras {len(examples)} ejemplos: {[str(t) for t in survivors]}")
    return [(t, origin) for t in survivors]


def unknown_table(input: Container, output: Container, origin: Origin) -> LineageTable:
    """Tabla sin registros reclamados: procedencia nula"""
    return build_table([], Completeness.UNKNOWN, origin, [input.schema], output.schema)


def extrapolate_lineage(tags: Sequence[ConstraintTag], full_input: Container, full_output: Container,
                        example_count: int = 0, strict: bool = False) -> LineageTable:
    """Intersección de las tablas de restricción máxima de las etiquetas supervivientes"""
    origin = Origin(kind=OriginKind.LEARNT, example_count=example_count)
    if not tags:
        if strict:
            raise NoTags("No sobrevivió ninguna etiqueta")
        return unknown_table(full_input, full_output, origin.model_copy(update={"note": "sin etiquetas"}))
    tables = []
    for tag in tags:
        try:
            tables.append(max_constraint_lineage(tag, full_input, full_output))
        except SchemaMismatch as e:
            logger.warning(f"Etiqueta {tag} omitida en la extrapolación: {e}")
    if not tables:
        return unknown_table(full_input, full_output, origin.model_copy(update={"note": "etiquetas incompatibles"}))
    merged = intersect_tables(tables)
    return LineageTable(merged.records, merged.completeness, origin, merged.input_schemas, merged.output_schema)


def learn_lineage(run: Runner, full_input: Container, op: Optional[OperationSignature] = None,
                  cfg: Optional[LearnConfig] = None, full_output: Optional[Container] = None,
                  max_workers: int = ORACLE_MAX_WORKERS) -> LearnReport:
    """Aprendizaje completo: subconjuntos, perturbaciones, inferencia y extrapolación.

    Si `full_output` no se entrega, la operación se ejecuta una sola vez sobre
    el contenedor completo.
    """
    cfg = cfg or LearnConfig()
    bases = generate_small_containers(full_input, op, cfg)
    containers = bases + perturb_containers(bases, cfg)
    examples = collect_examples(run, containers, max_workers=max_workers)
    survivors = infer_tags(run, examples, None, cfg, op, max_workers=max_workers)
    tags = [t for t, _ in survivors]
    if full_output is None:
        full_output = run(full_input)
    table = extrapolate_lineage(tags, full_input, full_output, example_count=len(examples))
    return LearnReport(tags=tags, origin=table.origin, table=table,
                       n_examples=len(examples), n_failed=len(containers) - len(examples))
