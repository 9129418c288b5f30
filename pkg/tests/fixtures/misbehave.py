"""Proceso externo defectuoso: fail, garbage o sleep"""
import sys
import time
from pathlib import Path

mode = sys.argv[1]
if mode == "fail":
    sys.stderr.write("boom\n")
    sys.exit(1)
if mode == "garbage":
    Path(sys.argv[-1]).write_text("no es json", encoding="utf-8")
    sys.exit(0)
if mode == "sleep":
    time.sleep(5)
sys.exit(0)
