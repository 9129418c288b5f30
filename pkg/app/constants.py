# Operaciones incorporadas (todas sobre contenedores 2-D: dim 0 = filas, dim 1 = columnas)
BUILTIN_NAMESPACE = "builtin"
OPERACIONES_BUILTIN = [
    'drop_null_rows',
    'filter_rows',
    'minmax_scale_columns',
    'map_add_constant',
    'sort_by_column',
    'project_columns'
]

# Grafías de las librerías originales que resuelven a una operación incorporada
ALIAS_BUILTIN = {
    "pandas.dropna": "drop_null_rows",
    "duckdb.filter": "filter_rows",
    "sklearn.minmax_scale": "minmax_scale_columns",
    "numpy.add": "map_add_constant",
    "pandas.sort_values": "sort_by_column",
    "pandas.project": "project_columns"
}

# Comparadores admitidos por filter_rows
COMPARADORES = ['<', '>', '=', '≠']
ALIAS_COMPARADORES = {
    '==': '=',
    '!=': '≠',
    '<>': '≠'
}

# Políticas de captura
POLITICAS_CAPTURA = [
    'declared-only',
    'oracle',
    'learn'
]

# Formatos de linaje
MAGIA_COMPRIMIDO = "XPLT1"
PREFIJO_CENTINELA = "⊥#"

# Orden de confianza de los orígenes (menor = más confiable)
RANGO_ORIGEN = {
    'captured_exact': 0,
    'declared': 1,
    'oracle': 2,
    'learnt': 3
}

# Orden de precisión de la completitud (menor = más preciso)
RANGO_COMPLETITUD = {
    'exact': 0,
    'overapprox': 1,
    'unknown': 2
}

# Mensajes de error comunes
MENSAJES_ERROR = {
    'archivo_no_encontrado': 'El archivo no fue encontrado',
    'flujo_invalido': 'El documento de flujo de trabajo no es válido',
    'ejecucion_fallida': 'La ejecución de la operación falló',
    'ruta_invalida': 'La ruta de contenedores no es válida para esta ejecución',
    'indice_invalido': 'El índice de consulta no es válido',
    'objetivo_desconocido': 'El nodo u operación indicado no existe',
    'clave_desconocida': 'La clave no existe en la base de conocimiento',
    'kb_corrupta': 'La base de conocimiento contiene una entrada corrupta',
    'linaje_insuficiente': 'El linaje disponible no permite evaluar la etiqueta'
}
