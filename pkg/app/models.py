from pydantic import BaseModel, ConfigDict, Field, StrictBool, StrictFloat, StrictInt, StrictStr, field_validator
from typing import Optional, List, Dict, Any, Tuple, Union, Literal
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .config import (
    LEARN_N_SUBSETS, LEARN_SUBSET_SIZE, LEARN_N_PERTURBATIONS, LEARN_RNG_SEED,
    CONDITION_LABEL_BOUND, EXTERNAL_TIMEOUT_SECONDS, DEFAULT_KB_DIR, DEFAULT_RUN_DIR,
    DEFAULT_CAPTURE_POLICY
)
from .constants import POLITICAS_CAPTURA

# Una etiqueta por dimensión, alineada con las dimensiones del contenedor
IndexTuple = Tuple[str, ...]
ParamValue = Union[StrictBool, StrictInt, StrictFloat, StrictStr, List[StrictStr], None]


class Dimension(BaseModel):
    """Dimensión con nombre y etiquetas ordenadas"""
    model_config = ConfigDict(frozen=True)

    name: str
    indices: Tuple[str, ...]


class ContainerSchema(BaseModel):
    """Estructura de un contenedor sin valores de celda"""
    model_config = ConfigDict(frozen=True)

    dims: Tuple[Dimension, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(d.indices) for d in self.dims)

    def is_valid(self, idx: IndexTuple) -> bool:
        if len(idx) != len(self.dims):
            return False
        return all(label in d.indices for d, label in zip(self.dims, idx))


class InfluenceKind(str, Enum):
    DIRECT = "direct"
    INDIRECT = "indirect"


class Completeness(str, Enum):
    EXACT = "exact"
    OVERAPPROX = "overapprox"
    UNKNOWN = "unknown"


class OriginKind(str, Enum):
    DECLARED = "declared"
    CAPTURED_EXACT = "captured_exact"
    ORACLE = "oracle"
    LEARNT = "learnt"


class Origin(BaseModel):
    """Registro de cómo se produjo una etiqueta o tabla de linaje"""
    model_config = ConfigDict(frozen=True)

    kind: OriginKind
    example_count: Optional[int] = None
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    note: str = ""

    @property
    def label(self) -> str:
        if self.kind == OriginKind.LEARNT:
            return f"learnt(n={self.example_count or 0})"
        return self.kind.value


class OperationSignature(BaseModel):
    """Identidad abstracta de una operación"""
    namespace: str
    name: str
    params: Dict[str, ParamValue] = Field(default_factory=dict)


class NodeSignature(BaseModel):
    """Operación resuelta contra los esquemas concretos de una ejecución"""
    op: OperationSignature
    input_schemas: List[ContainerSchema]
    output_schema: ContainerSchema


class ExternalOpSpec(BaseModel):
    """Operación de caja negra ejecutada como proceso externo"""
    command: str
    workdir: Optional[str] = None
    timeout: float = EXTERNAL_TIMEOUT_SECONDS


class TagKind(str, Enum):
    ONE_TO_ONE = "OneToOne"
    SLICE = "Slice"
    IDENTITY = "Identity"
    CONDITION = "Condition"


class ConstraintTag(BaseModel):
    """Etiqueta de restricción de linaje parametrizada"""
    model_config = ConfigDict(frozen=True)

    kind: TagKind
    dim: Optional[int] = None
    index: Optional[str] = None

    @property
    def text(self) -> str:
        if self.kind == TagKind.SLICE:
            return f"Slice[{self.dim}]"
        if self.kind == TagKind.CONDITION:
            return f"Condition[{self.dim},{self.index}]"
        return self.kind.value

    def __str__(self) -> str:
        return self.text


class LearnConfig(BaseModel):
    """Parámetros del aprendizaje de linaje por perturbación"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n_subsets: int = LEARN_N_SUBSETS
    subset_size: Union[int, List[int]] = LEARN_SUBSET_SIZE
    n_perturbations: int = LEARN_N_PERTURBATIONS
    rng_seed: int = LEARN_RNG_SEED
    allow_clamp: bool = False
    condition_label_bound: int = CONDITION_LABEL_BOUND
    # Política de perturbación; None usa el dominio estándar
    domain: Optional[Any] = Field(default=None, exclude=True)

    @field_validator("n_subsets")
    @classmethod
    def _check_subsets(cls, v: int) -> int:
        if v < 1:
            raise ValueError("n_subsets debe ser >= 1")
        return v

    @field_validator("subset_size")
    @classmethod
    def _check_size(cls, v: Union[int, List[int]]) -> Union[int, List[int]]:
        sizes = v if isinstance(v, list) else [v]
        if any(s < 2 for s in sizes):
            raise ValueError("subset_size debe ser >= 2 en cada dimensión")
        return v

    def size_for(self, dim: int) -> int:
        if isinstance(self.subset_size, list):
            return self.subset_size[dim] if dim < len(self.subset_size) else self.subset_size[-1]
        return self.subset_size


class RunConfig(BaseModel):
    """Configuración de una ejecución desde la CLI"""
    kb_dir: Path = DEFAULT_KB_DIR
    policy: str = DEFAULT_CAPTURE_POLICY
    learn: LearnConfig = Field(default_factory=LearnConfig)
    out_dir: Path = DEFAULT_RUN_DIR
    verbosity: int = 0

    @field_validator("policy")
    @classmethod
    def _check_policy(cls, v: str) -> str:
        if v not in POLITICAS_CAPTURA:
            raise ValueError(f"política desconocida: {v}")
        return v


class ContainerRef(BaseModel):
    id: str
    path: str


class WorkflowNode(BaseModel):
    """Nodo del DAG: una operación declarada"""
    id: str
    op: OperationSignature
    exec: Union[Literal["builtin"], ExternalOpSpec] = "builtin"
    inputs: List[str]
    output: str

    @property
    def is_external(self) -> bool:
        return isinstance(self.exec, ExternalOpSpec)


class WorkflowDag(BaseModel):
    """Grafo de dependencias de datos validado"""
    containers: List[ContainerRef] = Field(default_factory=list)
    nodes: List[WorkflowNode] = Field(default_factory=list)
    base_dir: Optional[str] = None
    order: List[str] = Field(default_factory=list)

    def node(self, node_id: str) -> Optional[WorkflowNode]:
        return next((n for n in self.nodes if n.id == node_id), None)

    def producer(self, container_id: str) -> Optional[WorkflowNode]:
        return next((n for n in self.nodes if n.output == container_id), None)


class KBEntry(BaseModel):
    """Entrada inmutable de la base de conocimiento"""
    entry_id: str
    key: str
    kind: Literal["tags", "lineage"]
    origin: Origin
    tags: List[str] = Field(default_factory=list)
    table_file: Optional[str] = None

    @property
    def timestamp(self) -> datetime:
        return self.origin.timestamp


class NodeRun(BaseModel):
    """Registro de ejecución de un nodo"""
    node_id: str
    signature: NodeSignature
    inputs: List[str]
    output: str
    origin: Origin
    completeness: Dict[InfluenceKind, Completeness]
    source: str
    table_file: str


class RunManifest(BaseModel):
    """Lo que se persiste de una ejecución en el directorio de salida"""
    workflow: WorkflowDag
    order: List[str]
    nodes: List[NodeRun]
    kb_dir: Optional[str] = None
    policy: str = DEFAULT_CAPTURE_POLICY


class PathQuery(BaseModel):
    path: List[str]
    indices: List[IndexTuple]
    kind: InfluenceKind = InfluenceKind.INDIRECT
    backward: bool = False


class QueryResult(BaseModel):
    indices: List[IndexTuple]
    completeness: Completeness
    origin: Origin


class AssertionResult(BaseModel):
    """Veredicto de assert_tag con su procedencia"""
    target: str
    kind: TagKind
    satisfied: bool
    params: List[ConstraintTag] = Field(default_factory=list)
    source: Literal["kb", "instance"]
    origin: Optional[Origin] = None
