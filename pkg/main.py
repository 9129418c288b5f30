"""Línea de comandos del motor de linaje.

Los informes se escriben en stdout con orden estable; los logs van a stderr.
"""
import logging
import sys
from functools import wraps
from pathlib import Path
from typing import List, Optional

import click
import toml
from pydantic import ValidationError

from app.config import APP_DESCRIPTION, APP_NAME, APP_VERSION, DEBUG, DEFAULT_KB_DIR, LOG_FORMAT, LOG_LEVEL
from app.constants import MENSAJES_ERROR
from app.knowledge_base import KnowledgeBase
from app.models import InfluenceKind, LearnConfig, PathQuery, RunConfig, TagKind
from app.services import ProvenanceService
from app.tags import parse_tag, parse_tag_kind
from app.workflow import load_run, load_workflow, run_workflow, save_run
from utils.error_handling import (
    EXIT_FINDING, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, LineageError, SchemaMismatch, UnknownTarget
)

logger = logging.getLogger(__name__)


def setup_logging(verbosity: int) -> None:
    default = logging.DEBUG if DEBUG else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    level = {1: logging.DEBUG, -1: logging.WARNING}.get(verbosity, default)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def handle_errors(fn):
    """Traduce los errores del motor a códigos de salida"""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except LineageError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except (FileNotFoundError, ValidationError, toml.TomlDecodeError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except click.ClickException:
            raise
        except Exception as e:
            logger.exception("Error interno")
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INTERNAL)
        sys.exit(code or EXIT_OK)
    return wrapper


def build_run_config(config_path: Optional[Path], **overrides) -> RunConfig:
    """Valores por defecto < archivo TOML < opciones de la CLI"""
    values = {}
    learn = {}
    if config_path is not None:
        doc = toml.load(str(config_path))
        run_section = doc.get("run", {})
        renames = {"kb": "kb_dir", "capture": "policy", "out": "out_dir"}
        values = {renames.get(k, k): v for k, v in run_section.items()}
        learn = doc.get("learn", {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(learn=LearnConfig(**learn), **values)


def parse_index(text: str) -> tuple:
    return tuple(label.strip() for label in text.split(","))


@click.group(help=f"{APP_NAME}: {APP_DESCRIPTION}")
@click.version_option(APP_VERSION)
@click.option("-v", "--verbose", "verbosity", flag_value=1, help="Logs de depuración")
@click.option("-q", "--quiet", "verbosity", flag_value=-1, help="Sólo advertencias")
@click.pass_context
def cli(ctx, verbosity):
    ctx.ensure_object(dict)
    ctx.obj["verbosity"] = verbosity or 0
    setup_logging(verbosity or 0)


@cli.command("run")
@click.argument("workflow", type=click.Path(path_type=Path))
@click.option("--kb", "kb_dir", type=click.Path(path_type=Path), envvar="XPROV_KB", help="Directorio de la KB")
@click.option("--capture", "policy", type=click.Choice(["declared-only", "oracle", "learn"]), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="Archivo TOML con secciones [run] y [learn]")
@handle_errors
def cmd_run(workflow, kb_dir, policy, out_dir, config_path):
    """Ejecuta un flujo y captura el linaje de cada nodo"""
    cfg = build_run_config(config_path, kb_dir=kb_dir, policy=policy, out_dir=out_dir)
    dag = load_workflow(workflow)
    record = run_workflow(dag, KnowledgeBase(cfg.kb_dir), cfg.policy, cfg.learn)
    save_run(record, cfg.out_dir)
    for node_id in record.order:
        t = record.tables[node_id]
        comp = t.completeness[InfluenceKind.INDIRECT].value
        click.echo(f"{node_id}\tsource={record.sources[node_id]}\torigin={t.origin.label}\tcompleteness={comp}")
    click.echo(f"kb_hits={record.stats['kb_hits']} captures={record.stats['captures']}")


@cli.command("query")
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--path", "path", required=True, help="Ids de contenedores separados por comas")
@click.option("--index", "indices", multiple=True, required=True, help="Etiquetas separadas por comas")
@click.option("--kind", type=click.Choice(["direct", "indirect"]), default="indirect")
@click.option("--backward", is_flag=True, help="Consulta desde el último contenedor hacia el primero")
@handle_errors
def cmd_query(run_dir, path, indices, kind, backward):
    """Consulta de linaje a lo largo de una ruta de contenedores"""
    service = ProvenanceService(load_run(run_dir))
    q = PathQuery(path=[p.strip() for p in path.split(",")], indices=[parse_index(i) for i in indices],
                  kind=InfluenceKind(kind), backward=backward)
    result = service.prov_query(q)
    for idx in result.indices:
        click.echo(",".join(idx))
    click.echo(f"origin={result.origin.label} completeness={result.completeness.value}")


def _params(tag: str, params: List[str]):
    if not params:
        return None
    try:
        return [parse_tag(f"{tag}[{p}]") for p in params]
    except SchemaMismatch as e:
        raise click.BadParameter(str(e), param_hint="--params")


@cli.command("assert")
@click.option("--run", "run_dir", type=click.Path(path_type=Path), default=None)
@click.option("--kb", "kb_dir", type=click.Path(path_type=Path), envvar="XPROV_KB", default=None)
@click.option("--node", default=None, help="Id de nodo de la ejecución")
@click.option("--op", "op_key", default=None, help="Clave canónica de operación")
@click.option("--tag", required=True, type=click.Choice([k.value for k in TagKind]))
@click.option("--params", multiple=True, help="Parámetros de la etiqueta, p. ej. 0 o 1,Age")
@handle_errors
def cmd_assert(run_dir, kb_dir, node, op_key, tag, params):
    """Comprueba una etiqueta de restricción sobre un nodo u operación"""
    target = node or op_key
    if target is None:
        raise click.UsageError("Indique --node o --op")
    record = load_run(run_dir) if run_dir else None
    kb = KnowledgeBase(kb_dir) if kb_dir and Path(kb_dir).exists() else None
    service = ProvenanceService(record, kb)
    kind = parse_tag_kind(tag)
    result = service.assert_tag(target, kind, _params(tag, list(params)))
    if params or kind in (TagKind.ONE_TO_ONE, TagKind.IDENTITY):
        click.echo("true" if result.satisfied else "false")
    else:
        click.echo(" ".join(t.text for t in result.params) if result.params else "false")
    origin = result.origin.label if result.origin else "none"
    click.echo(f"source={result.source} origin={origin}")


@cli.command("check-leakage")
@click.argument("run_dir", type=click.Path(path_type=Path))
@handle_errors
def cmd_check_leakage(run_dir):
    """Lista los nodos que no son fila a fila"""
    record = load_run(run_dir)
    offending = ProvenanceService(record).row_wise(record.order)
    for node_id in record.order:
        if node_id in offending:
            click.echo(f"leakage\t{node_id}")
    if not offending:
        click.echo("clean")
        return EXIT_OK
    return EXIT_FINDING


@cli.command("check-reorder")
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--parent", required=True)
@click.option("--child", required=True)
@click.option("--verify", is_flag=True, help="Ejecuta ambos órdenes y compara")
@handle_errors
def cmd_check_reorder(run_dir, parent, child, verify):
    """Indica si dos nodos consecutivos pueden intercambiarse"""
    service = ProvenanceService(load_run(run_dir))
    click.echo("valid" if service.double_slice(parent, child) else "invalid")
    if verify:
        click.echo(f"verified={'true' if service.verify_reorder(parent, child) else 'false'}")


@cli.group("kb")
def kb_group():
    """Inspección de la base de conocimiento"""


@kb_group.command("list")
@click.option("--kb", "kb_dir", type=click.Path(path_type=Path), envvar="XPROV_KB", default=DEFAULT_KB_DIR)
@click.pass_context
@handle_errors
def cmd_kb_list(ctx, kb_dir):
    """Entradas de la KB, de la más reciente a la más antigua"""
    verbose = ctx.find_root().obj.get("verbosity", 0) > 0
    for entry in KnowledgeBase(kb_dir).entries():
        payload = ",".join(entry.tags) if entry.kind == "tags" else entry.table_file
        line = f"{entry.key}\t{entry.kind}\t{payload}\torigin={entry.origin.label}"
        click.echo(f"{line}\t{entry.timestamp.isoformat()}" if verbose else line)


@kb_group.command("show")
@click.argument("key")
@click.option("--kb", "kb_dir", type=click.Path(path_type=Path), envvar="XPROV_KB", default=DEFAULT_KB_DIR)
@handle_errors
def cmd_kb_show(key, kb_dir):
    """Historial de una clave"""
    entries = KnowledgeBase(kb_dir).lookup(key)
    if not entries:
        raise UnknownTarget(f"{MENSAJES_ERROR['clave_desconocida']}: {key}")
    for entry in entries:
        if entry.kind == "tags":
            click.echo(f"tags={','.join(entry.tags)} origin={entry.origin.label}")
        else:
            click.echo(f"lineage={entry.table_file} origin={entry.origin.label}")


if __name__ == "__main__":
    cli()
