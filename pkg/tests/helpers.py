"""Utilidades compartidas por las pruebas"""
import shlex
import sys
from pathlib import Path

from app.container import create_container
from app.models import Dimension, OperationSignature

FIXTURES = Path(__file__).parent / "fixtures"


def op(name: str, namespace: str = "builtin", **params) -> OperationSignature:
    return OperationSignature(namespace=namespace, name=name, params=params)


def grid(values, rows=None, cols=None, id="grid"):
    """Contenedor 2-D a partir de una lista de filas"""
    rows = rows or [str(r) for r in range(len(values))]
    cols = cols or [f"c{k}" for k in range(len(values[0]))]
    dims = [Dimension(name="rows", indices=tuple(rows)), Dimension(name="cols", indices=tuple(cols))]
    return create_container(dims, [v for row in values for v in row], id=id)


def external_command(builtin: OperationSignature) -> str:
    """Comando que ejecuta una incorporada como proceso externo"""
    script = FIXTURES / "run_builtin.py"
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(script))} {shlex.quote(builtin.model_dump_json())}"


def misbehave_command(mode: str) -> str:
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(FIXTURES / 'misbehave.py'))} {mode}"


def pairs(table, kind):
    """Pares (salida, entrada) que responden a una consulta del tipo dado"""
    return {(r.out_idx, r.in_idx) for r in table.of_kind(kind)}
