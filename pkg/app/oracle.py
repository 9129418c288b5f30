"""Oráculo de influencia por perturbación exhaustiva.

Para cada celda de entrada se prueban valores alternativos de un dominio
finito y se observa qué celdas de salida cambian (o desaparecen).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .config import ORACLE_MAX_WORKERS
from .constants import PREFIJO_CENTINELA
from .container import Container, containers_equal, is_numeric, iter_indices, peers_along, scalars_equal, with_cell
from .lineage_store import LineageRecord, LineageTable, build_table
from .models import Completeness, IndexTuple, InfluenceKind, Origin, OriginKind
from .ops import Runner
from utils.error_handling import ExecutionFailure, ExecutionTimeout, MalformedOutput, NonDeterministicOp, NonZeroExit

logger = logging.getLogger(__name__)

FALLOS_DE_PROCESO = (ExecutionTimeout, NonZeroExit, MalformedOutput)


def _fresh_sentinel(peers: Sequence) -> str:
    k = 0
    while f"{PREFIJO_CENTINELA}{k}" in peers:
        k += 1
    return f"{PREFIJO_CENTINELA}{k}"


def _dedupe_without(values: Sequence, v) -> List:
    out = []
    for x in values:
        if scalars_equal(x, v) or any(scalars_equal(x, y) and type(x) is type(y) for y in out):
            continue
        out.append(x)
    return out


def standard_domain(v, peers: Sequence = ()) -> List:
    """Alternativas para una celda con valor `v` y sus pares de columna"""
    numeric = [p for p in peers if is_numeric(p)]
    if isinstance(v, bool):
        return _dedupe_without([not v, None], v)
    if is_numeric(v):
        lo = min(numeric + [v])
        hi = max(numeric + [v])
        return _dedupe_without([0, -v, v + 1, lo - 1, hi + 1, None], v)
    if isinstance(v, str):
        return _dedupe_without([_fresh_sentinel(peers), "", None], v)
    # Null: sondas del tipo de la columna
    present = [p for p in peers if p is not None]
    if numeric:
        return [min(numeric) - 1, max(numeric) + 1]
    strings = [p for p in present if isinstance(p, str)]
    if strings:
        return _dedupe_without([_fresh_sentinel(present), strings[0]], None)
    if any(isinstance(p, bool) for p in present):
        return [True, False]
    return [0]


class StandardDomain:
    """Dominio de perturbación por defecto; los pares se toman a lo largo de `peer_dim`"""

    def __init__(self, peer_dim: int = 0):
        self.peer_dim = peer_dim

    def peers(self, container: Container, idx: IndexTuple) -> List:
        if container.ndim == 0:
            return []
        dim = self.peer_dim if self.peer_dim < container.ndim else 0
        return peers_along(container, idx, dim)

    def alternatives(self, container: Container, idx: IndexTuple) -> List:
        v = container.cells[container.position(idx)]
        return standard_domain(v, self.peers(container, idx))


class ExtendedDomain(StandardDomain):
    """Dominio estándar más sondas adicionales (magnitudes grandes, vecinos, textos)"""

    def alternatives(self, container: Container, idx: IndexTuple) -> List:
        base = super().alternatives(container, idx)
        v = container.cells[container.position(idx)]
        extra: List = []
        if is_numeric(v):
            extra = [v - 1, v * 2, v + 1000, v - 1000]
        elif isinstance(v, str):
            extra = [v + v, v[::-1], v.upper()]
        return _dedupe_without(base + extra, v)


def output_changed(b: IndexTuple, B: Container, B_prime: Optional[Container]) -> bool:
    """La celda `b` falta en B' o su valor difiere del de B"""
    if B_prime is None or not B_prime.has_index(b):
        return True
    return not scalars_equal(B.cells[B.position(b)], B_prime.cells[B_prime.position(b)])


def _safe_run(run: Runner, A: Container) -> Optional[Container]:
    """Ejecuta una perturbación; sólo el rechazo de la propia operación se tolera"""
    try:
        return run(A)
    except FALLOS_DE_PROCESO:
        raise
    except ExecutionFailure as e:
        logger.warning(f"Perturbación {A.id} rechazada por la operación: {e}")
        return None


def influence_oracle(run: Runner, A: Container, domain: Optional[StandardDomain] = None,
                     max_workers: int = ORACLE_MAX_WORKERS) -> LineageTable:
    """Tabla de influencia directa/indirecta por perturbación de una celda a la vez.

    Una salida perturbada que la operación rechaza cuenta como cambio de toda b,
    y la tabla deja de declararse exacta. Los fallos del proceso (timeout,
    código de salida, salida mal formada) se propagan.
    """
    domain = domain or StandardDomain()
    B = run(A)
    if not containers_equal(B, run(A)):
        raise NonDeterministicOp(f"Dos ejecuciones sobre {A.id} produjeron salidas distintas")

    jobs: List[Tuple[IndexTuple, Container]] = []
    for a in iter_indices(A):
        for x in domain.alternatives(A, a):
            jobs.append((a, with_cell(A, a, x, id=f"{A.id}~o{len(jobs)}")))

    if max_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(lambda job: _safe_run(run, job[1]), jobs))
    else:
        outputs = [_safe_run(run, job[1]) for job in jobs]

    out_indices = list(iter_indices(B))
    changed: Dict[IndexTuple, List[Set[IndexTuple]]] = {}
    for (a, _), B_prime in zip(jobs, outputs):
        changed.setdefault(a, []).append({b for b in out_indices if output_changed(b, B, B_prime)})

    records = []
    for a, per_value in changed.items():
        always = set.intersection(*per_value)
        ever = set.union(*per_value)
        for b in ever:
            records.append(LineageRecord(b, 0, a, InfluenceKind.INDIRECT))
        for b in always:
            records.append(LineageRecord(b, 0, a, InfluenceKind.DIRECT))

    rejected = sum(1 for B_prime in outputs if B_prime is None)
    logger.debug(f"Oráculo sobre {A.id}: {len(jobs) + 2} ejecuciones, {len(records)} registros")
    indirect = Completeness.OVERAPPROX if rejected else Completeness.EXACT
    completeness = {InfluenceKind.DIRECT: Completeness.OVERAPPROX, InfluenceKind.INDIRECT: indirect}
    note = f"runs={len(jobs) + 2}" + (f" rejected={rejected}" if rejected else "")
    origin = Origin(kind=OriginKind.ORACLE, note=note)
    return build_table(records, completeness, origin, [A.schema], B.schema)
