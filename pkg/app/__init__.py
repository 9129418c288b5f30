# Este archivo hace que la carpeta app sea un paquete de Python 