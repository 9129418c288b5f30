import os
from dotenv import load_dotenv
from pathlib import Path

# Cargar variables de entorno desde .env
load_dotenv()
# Configuración de rutas
DEFAULT_KB_DIR = Path(os.getenv("XPROV_KB", "kb"))
DEFAULT_RUN_DIR = Path("runs") / "latest"

# Configuración de la aplicación
APP_NAME = "Array Lineage Engine"
APP_VERSION = "1.0.0"
APP_DESCRIPTION = "Captura, aprendizaje y consulta de linaje fino sobre contenedores de arrays"

# Configuración de logging
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Configuración de desarrollo
DEBUG = os.getenv("DEBUG", "False").lower() == "true"

# Configuración de archivos de contenedores
CONTAINER_ENCODING = "utf-8"

# Política de captura por defecto: declared-only, oracle o learn
DEFAULT_CAPTURE_POLICY = os.getenv("XPROV_CAPTURE", "oracle")

# Configuración de aprendizaje de linaje
LEARN_N_SUBSETS = 3
LEARN_SUBSET_SIZE = 3
LEARN_N_PERTURBATIONS = 8
LEARN_RNG_SEED = 42
CONDITION_LABEL_BOUND = 8

# Configuración de ejecución
ORACLE_MAX_WORKERS = int(os.getenv("XPROV_ORACLE_WORKERS", "1"))
EXTERNAL_MAX_WORKERS = int(os.getenv("XPROV_EXTERNAL_WORKERS", "8"))
EXTERNAL_TIMEOUT_SECONDS = 60.0

# Configuración de la base de conocimiento
KB_LOCK_TIMEOUT_SECONDS = 10.0
KB_INDEX_FILE = "index.json"
KB_ENTRIES_DIR = "entries"
KB_TABLES_DIR = "tables"
KB_LOCK_FILE = ".lock"
