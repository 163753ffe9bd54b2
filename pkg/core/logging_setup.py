"""
Setup de logging comum para todas as mini apps.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional


def setup_logging(
    log_file: Optional[Path] = None,
    level: int = logging.INFO,
    logger_name: str = ""
) -> logging.Logger:
    """
    Configura logging para console e ficheiro.

    Args:
        log_file: Caminho para ficheiro de log (opcional)
        level: Nível de logging
        logger_name: Nome do logger ("" = root, apanha todos os módulos)

    Returns:
        Logger configurado
    """
    logger = logging.getLogger(logger_name)
    logger.setLevel(level)
    if logger_name:
        logger.propagate = False

    # Remover handlers existentes (para evitar duplicação em re-runs)
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers = []

    # Formato
    fmt = logging.Formatter(
        "[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    )

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(fmt)
    logger.addHandler(console_handler)

    # File handler (se especificado)
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(str(log_file), encoding="utf-8")
        file_handler.setFormatter(fmt)
        logger.addHandler(file_handler)

    return logger


def attach_file_handler(log_file: Path, logger_name: str = "") -> logging.Handler:
    """Acrescenta um ficheiro de log ao logger indicado (usado por cada run)."""
    log_file.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(str(log_file), encoding="utf-8")
    handler.setFormatter(logging.Formatter(
        "[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S"
    ))
    logging.getLogger(logger_name).addHandler(handler)
    return handler


class MetricsLogger:
    """
    Log de métricas em JSON delimitado por linhas.

    Uma linha por registo, chaves ordenadas e sem timestamps: duas execuções
    com a mesma config e seed produzem ficheiros idênticos byte a byte.
    """

    def __init__(self, path: Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a" if append else "w", encoding="utf-8", newline="\n")
        self.lines_written = 0

    def log(self, record: Dict[str, Any]) -> None:
        self._fh.write(json.dumps(record, sort_keys=True, allow_nan=True) + "\n")
        self._fh.flush()
        self.lines_written += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "MetricsLogger":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: Path) -> list:
    """Lê um log de métricas JSONL (linhas vazias são ignoradas)."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            out.append(json.loads(line))
    return out
