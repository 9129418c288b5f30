"""Jerarquía de errores del motor de linaje.

Cada error lleva el código de salida que usa la CLI para reportarlo.
"""
from typing import Optional

EXIT_OK = 0
EXIT_FINDING = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3
EXIT_RESOLUTION = 4


class LineageError(Exception):
    """Error base del motor"""
    exit_code = EXIT_INTERNAL


# Contenedores

class ContainerError(LineageError):
    pass


class DuplicateLabel(ContainerError):
    pass


class ArityMismatch(ContainerError):
    pass


class UnknownIndex(ContainerError):
    exit_code = EXIT_RESOLUTION


class EmptyDimension(ContainerError):
    pass


class InvalidScalar(ContainerError):
    pass


class MalformedContainer(ContainerError):
    exit_code = EXIT_USAGE


# Tablas de linaje

class LineageStoreError(LineageError):
    pass


class SchemaViolation(LineageStoreError):
    exit_code = EXIT_RESOLUTION


class SchemaMismatch(LineageStoreError):
    pass


class EmptyInput(LineageStoreError):
    pass


class CorruptPayload(LineageStoreError):
    pass


# Operaciones

class OperationError(LineageError):
    pass


class UnknownOperation(OperationError):
    pass


class ExecutionFailure(OperationError):
    """Falla al ejecutar una operación; `node_id` se adjunta dentro de un flujo"""

    def __init__(self, message: str, node_id: Optional[str] = None):
        super().__init__(message)
        self.node_id = node_id

    def __str__(self) -> str:
        base = super().__str__()
        return f"[{self.node_id}] {base}" if self.node_id else base


class ExecutionTimeout(ExecutionFailure):
    pass


class NonZeroExit(ExecutionFailure):
    pass


class MalformedOutput(ExecutionFailure):
    pass


class NotBuiltin(OperationError):
    pass


class OutputMismatch(OperationError):
    pass


class NonDeterministicOp(OperationError):
    pass


# Etiquetas

class TagError(LineageError):
    pass


class InsufficientLineage(TagError):
    exit_code = EXIT_RESOLUTION


# Aprendizaje

class LearnError(LineageError):
    pass


class SubsetTooLarge(LearnError):
    pass


class AllExecutionsFailed(LearnError):
    pass


class NoExamples(LearnError):
    pass


class NoTags(LearnError):
    pass


# Flujos de trabajo

class WorkflowError(LineageError):
    exit_code = EXIT_USAGE


class WorkflowParseError(WorkflowError):
    pass


class CycleDetected(WorkflowError):
    pass


class UnknownContainerRef(WorkflowError):
    pass


class DuplicateId(WorkflowError):
    pass


# Base de conocimiento

class KnowledgeBaseError(LineageError):
    pass


class CorruptStore(KnowledgeBaseError):
    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path

    def __str__(self) -> str:
        base = super().__str__()
        return f"{base} ({self.path})" if self.path else base


class KBWriteFailure(KnowledgeBaseError):
    pass


# Consultas

class QueryError(LineageError):
    exit_code = EXIT_RESOLUTION


class InvalidPath(QueryError):
    pass


class UnknownTarget(QueryError):
    pass
