"""
Escrita atómica e utilitários de ficheiros.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any

from core.exceptions import OdeInfIOError


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Escreve para ``<path>.tmp`` e renomeia; nunca deixa ficheiros a meio."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


def load_json(path: Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise OdeInfIOError(f"Ficheiro não encontrado: {path}", path=path) from e
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise OdeInfIOError(f"Falha ao ler {path}: {e}", path=path) from e


def sha256_file(path: Path, chunk_size: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            h.update(chunk)
    return h.hexdigest()


def require_path(path: Any, what: str) -> Path:
    """
    Garante que um input existe.

    Raises:
        OdeInfIOError: caminho não configurado ou inexistente (a mensagem nomeia-o)
    """
    if path is None:
        raise OdeInfIOError(f"{what}: caminho não configurado")
    path = Path(path)
    if not path.exists():
        raise OdeInfIOError(f"{what} não encontrado: {path}", path=path)
    return path
