"""Base de conocimiento persistente de etiquetas y tablas de linaje.

Estructura del directorio:
    index.json            lista ordenada de entradas (solo se agregan)
    entries/<id>.json     una entrada por archivo, con su origen
    tables/<id>.xplt      tabla de linaje comprimida (entradas "lineage")
    .lock                 candado de escritor único
"""
import hashlib
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from filelock import FileLock, Timeout
from pydantic import ValidationError

from .constants import MENSAJES_ERROR
from .config import (
    CONTAINER_ENCODING, KB_ENTRIES_DIR, KB_INDEX_FILE, KB_LOCK_FILE, KB_LOCK_TIMEOUT_SECONDS, KB_TABLES_DIR
)
from .data_loader import write_atomic
from .lineage_store import LineageTable, compress_table, decompress_table
from .models import ConstraintTag, KBEntry, Origin
from utils.error_handling import CorruptPayload, CorruptStore, KBWriteFailure

logger = logging.getLogger(__name__)


class KnowledgeBase:
    """Almacén append-only con un archivo por entrada más un índice"""

    def __init__(self, root: Path, lock_timeout: float = KB_LOCK_TIMEOUT_SECONDS):
        self.root = Path(root)
        self.lock_timeout = lock_timeout

    @property
    def index_path(self) -> Path:
        return self.root / KB_INDEX_FILE

    def _entry_path(self, entry_id: str) -> Path:
        return self.root / KB_ENTRIES_DIR / f"{entry_id}.json"

    @contextmanager
    def _lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        lock = FileLock(self.root / KB_LOCK_FILE, timeout=self.lock_timeout)
        try:
            lock.acquire()
        except Timeout as e:
            logger.error(f"Candado ocupado en {self.root} tras {self.lock_timeout}s")
            raise KBWriteFailure(f"No se pudo tomar el candado de {self.root}") from e
        try:
            yield
        finally:
            lock.release()

    def _read_index(self) -> List[dict]:
        if not self.index_path.exists():
            return []
        try:
            items = json.loads(self.index_path.read_text(encoding=CONTAINER_ENCODING))
            if not isinstance(items, list) or any(not {"entry_id", "key"} <= set(i) for i in items):
                raise ValueError("formato de índice inesperado")
            return items
        except (ValueError, TypeError) as e:
            logger.error(f"Índice de la base de conocimiento corrupto: {str(e)}")
            raise CorruptStore(f"{MENSAJES_ERROR['kb_corrupta']}: índice ({e})", str(self.index_path)) from e

    def _read_entry(self, entry_id: str) -> KBEntry:
        path = self._entry_path(entry_id)
        try:
            return KBEntry.model_validate_json(path.read_text(encoding=CONTAINER_ENCODING))
        except (OSError, ValidationError, ValueError) as e:
            logger.error(f"Entrada corrupta {entry_id}: {str(e)}")
            raise CorruptStore(f"{MENSAJES_ERROR['kb_corrupta']}: {entry_id}", str(path)) from e

    def entries(self) -> List[KBEntry]:
        """Todas las entradas, de la más reciente a la más antigua"""
        return [self._read_entry(item["entry_id"]) for item in reversed(self._read_index())]

    def keys(self) -> List[str]:
        return list(dict.fromkeys(item["key"] for item in reversed(self._read_index())))

    def lookup(self, key: str) -> List[KBEntry]:
        """Historial de una clave, de la más reciente a la más antigua"""
        return [self._read_entry(item["entry_id"]) for item in reversed(self._read_index()) if item["key"] == key]

    def store(self, key: str, kind: str, origin: Origin, tags: Iterable[ConstraintTag] = (),
              table: Optional[LineageTable] = None) -> KBEntry:
        """Agrega una entrada nueva; nunca sobrescribe"""
        with self._lock():
            index = self._read_index()
            entry_id = f"{len(index):06d}-{hashlib.sha256(key.encode('utf-8')).hexdigest()[:10]}"
            table_file = None
            try:
                if table is not None:
                    table_file = f"{KB_TABLES_DIR}/{entry_id}.xplt"
                    write_atomic(self.root / table_file, compress_table(table))
                entry = KBEntry(entry_id=entry_id, key=key, kind=kind, origin=origin,
                                tags=[t.text for t in tags], table_file=table_file)
                write_atomic(self._entry_path(entry_id), entry.model_dump_json(indent=2) + "\n")
                index.append({"entry_id": entry_id, "key": key, "kind": kind})
                write_atomic(self.index_path, json.dumps(index, ensure_ascii=False, indent=2) + "\n")
            except OSError as e:
                logger.error(f"Error al escribir en la base de conocimiento: {str(e)}")
                raise KBWriteFailure(f"No se pudo escribir la entrada {entry_id}: {e}") from e
        logger.info(f"KB: nueva entrada {kind} para {key} (origen {origin.label})")
        return entry

    def store_tags(self, key: str, tags: Iterable[ConstraintTag], origin: Origin) -> KBEntry:
        return self.store(key, "tags", origin, tags=tags)

    def store_lineage(self, key: str, table: LineageTable) -> KBEntry:
        return self.store(key, "lineage", table.origin, table=table)

    def load_table(self, entry: KBEntry) -> LineageTable:
        if entry.table_file is None:
            raise CorruptStore(f"La entrada {entry.entry_id} no tiene tabla")
        path = self.root / entry.table_file
        try:
            return decompress_table(path.read_text(encoding=CONTAINER_ENCODING))
        except (OSError, CorruptPayload) as e:
            logger.error(f"Tabla corrupta {path}: {str(e)}")
            raise CorruptStore(f"{MENSAJES_ERROR['kb_corrupta']}: tabla de {entry.entry_id}", str(path)) from e

    def latest(self, key: str, kind: str) -> Optional[KBEntry]:
        return next((e for e in self.lookup(key) if e.kind == kind), None)

    def latest_table(self, key: str) -> Optional[Tuple[KBEntry, LineageTable]]:
        entry = self.latest(key, "lineage")
        return (entry, self.load_table(entry)) if entry else None


def kb_lookup(kb: KnowledgeBase, key: str) -> List[KBEntry]:
    return kb.lookup(key)


def kb_store(kb: KnowledgeBase, key: str, kind: str, origin: Origin, tags: Iterable[ConstraintTag] = (),
             table: Optional[LineageTable] = None) -> KBEntry:
    return kb.store(key, kind, origin, tags=tags, table=table)
