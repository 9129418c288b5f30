import json
import logging
import os
from pathlib import Path
from typing import Optional, Dict, Any

import numpy as np
import pandas as pd

from .config import CONTAINER_ENCODING
from .container import Container, create_container, check_scalar
from .models import Dimension
from utils.error_handling import ContainerError, MalformedContainer

# Configurar logging
logger = logging.getLogger(__name__)


def serialize_container(c: Container) -> str:
    """Serialización canónica: dims en orden de declaración, valores row-major"""
    doc = {
        "id": c.id,
        "dims": [{"name": d.name, "indices": list(d.indices)} for d in c.dims],
        "values": c.values_row_major(),
    }
    return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"


def parse_container(text: str, source: str = "<texto>") -> Container:
    """Interpreta un documento de contenedor; cualquier defecto es MalformedContainer"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedContainer(f"JSON inválido en {source}: {e}") from e
    if not isinstance(doc, dict) or not {"id", "dims", "values"} <= set(doc):
        raise MalformedContainer(f"Faltan campos id/dims/values en {source}")
    try:
        dims = [Dimension(name=d["name"], indices=tuple(str(i) for i in d["indices"])) for d in doc["dims"]]
        return create_container(dims, doc["values"], id=str(doc["id"]))
    except ContainerError as e:
        raise MalformedContainer(f"Contenedor inválido en {source}: {e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedContainer(f"Estructura inválida en {source}: {e}") from e


def write_atomic(path: Path, text: str) -> None:
    """Escribe en un temporal y renombra"""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding=CONTAINER_ENCODING)
    os.replace(tmp, path)


def container_from_frame(df: pd.DataFrame, id: str = "frame",
                         row_dim: str = "rows", col_dim: str = "cols") -> Container:
    """Reduce un DataFrame a un contenedor 2-D.

    Las etiquetas duplicadas reciben sub-claves "label#k"; NaN/None pasan a Null.
    """
    def _dedupe(labels):
        seen: Dict[str, int] = {}
        out = []
        for label in map(str, labels):
            k = seen.get(label, 0)
            out.append(label if k == 0 else f"{label}#{k}")
            seen[label] = k + 1
        return tuple(out)

    values = []
    for row in df.itertuples(index=False, name=None):
        for v in row:
            if v is None or (isinstance(v, float) and np.isnan(v)) or v is pd.NA or v is pd.NaT:
                values.append(None)
            else:
                values.append(check_scalar(v))
    dims = [Dimension(name=row_dim, indices=_dedupe(df.index)),
            Dimension(name=col_dim, indices=_dedupe(df.columns))]
    return create_container(dims, values, id=id)


def container_to_frame(c: Container) -> pd.DataFrame:
    """Vista DataFrame de un contenedor 2-D (Null como None)"""
    if c.ndim != 2:
        raise MalformedContainer("Sólo los contenedores 2-D tienen vista DataFrame")
    return pd.DataFrame(c.cells.tolist(), index=list(c.labels(0)), columns=list(c.labels(1)), dtype=object)


class ContainerLoader:
    """Clase para cargar y guardar contenedores en el formato canónico"""

    def __init__(self, file_path: Optional[Path] = None):
        self.file_path = Path(file_path) if file_path else None
        self.container: Optional[Container] = None

    def load_data(self) -> Container:
        """Carga el contenedor desde el archivo"""
        try:
            logger.info(f"Cargando contenedor desde: {self.file_path}")

            if self.file_path is None or not self.file_path.exists():
                raise FileNotFoundError(f"El archivo {self.file_path} no existe")

            text = self.file_path.read_text(encoding=CONTAINER_ENCODING)
            self.container = parse_container(text, source=str(self.file_path))

            logger.info(f"Contenedor '{self.container.id}' cargado. Forma: {self.container.shape}")
            return self.container

        except Exception as e:
            logger.error(f"Error al cargar contenedor: {str(e)}")
            raise

    def save_data(self, container: Optional[Container] = None) -> None:
        """Guarda el contenedor en el archivo de origen"""
        container = container or self.container
        if container is None or self.file_path is None:
            return
        try:
            write_atomic(self.file_path, serialize_container(container))
            logger.debug(f"Contenedor '{container.id}' guardado en {self.file_path}")
        except OSError as e:
            logger.error(f"Error al guardar contenedor: {str(e)}")
            raise

    def get_data_info(self) -> Dict[str, Any]:
        """Obtiene información sobre el contenedor cargado"""
        if self.container is None:
            return {}
        c = self.container
        return {
            'id': c.id,
            'dims': [d.name for d in c.dims],
            'shape': c.shape,
            'null_cells': int(sum(v is None for v in c.cells.ravel())),
        }


def load_container(path: Path) -> Container:
    return ContainerLoader(Path(path)).load_data()


def save_container(c: Container, path: Path) -> None:
    ContainerLoader(Path(path)).save_data(c)
