"""
Contentor binário versionado usado pelos shards de dataset e pelos checkpoints.

Layout (little-endian):

    magic         8 bytes
    version       uint16
    endianness    2 bytes ("LE")
    count         uint32   (registos no shard / tensores no checkpoint)
    manifest_len  uint64
    payload_len   uint64   (manifest + blob)
    checksum      32 bytes (sha256 do payload)
    payload       manifest JSON (utf-8) seguido do blob de arrays

O manifest é texto JSON legível; a tabela ``arrays`` indica, para cada array,
offset no blob, forma e dtype.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Type

import numpy as np

from core.exceptions import OdeInfIOError
from core.io_utils import atomic_write_bytes

HEADER = struct.Struct("<8sH2sIQQ32s")
ENDIAN_TAG = b"LE"


@dataclass(frozen=True)
class ContainerErrors:
    """Classes de exceção a usar para cada tipo de falha de formato."""
    format: Type[OdeInfIOError]
    version: Type[OdeInfIOError]
    checksum: Type[OdeInfIOError]


def _le_dtype(arr: np.ndarray) -> np.dtype:
    dt = arr.dtype
    if dt.byteorder == ">" or (dt.byteorder == "=" and np.little_endian is False):
        dt = dt.newbyteorder("<")
    return np.dtype(dt.str.replace(">", "<").replace("=", "<"))


def encode_container(magic: bytes, version: int, count: int, manifest: Dict[str, Any],
                     arrays: Sequence[Tuple[str, np.ndarray]]) -> bytes:
    blob = bytearray()
    table: Dict[str, Dict[str, Any]] = {}
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.astype(_le_dtype(arr), copy=False)
        table[name] = {"offset": len(blob), "shape": list(arr.shape), "dtype": le.dtype.str,
                       "nbytes": le.nbytes}
        blob.extend(le.tobytes(order="C"))
    full_manifest = dict(manifest)
    full_manifest["arrays"] = table
    manifest_bytes = json.dumps(full_manifest, sort_keys=True, indent=1).encode("utf-8")
    payload = manifest_bytes + bytes(blob)
    header = HEADER.pack(magic, version, ENDIAN_TAG, count, len(manifest_bytes), len(payload),
                         hashlib.sha256(payload).digest())
    return header + payload


def write_container(path: Path, magic: bytes, version: int, count: int, manifest: Dict[str, Any],
                    arrays: Sequence[Tuple[str, np.ndarray]], errors: ContainerErrors) -> int:
    data = encode_container(magic, version, count, manifest, arrays)
    try:
        atomic_write_bytes(Path(path), data)
    except OSError as e:
        raise errors.format(f"Falha ao escrever {path}: {e}", path=path) from e
    return len(data)


def read_container(path: Path, magic: bytes, supported_versions: Sequence[int],
                   errors: ContainerErrors) -> Tuple[int, int, Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Lê e valida um contentor.

    Returns:
        (version, count, manifest, arrays)
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError as e:
        raise OdeInfIOError(f"Ficheiro não encontrado: {path}", path=path) from e
    except OSError as e:
        raise OdeInfIOError(f"Falha ao ler {path}: {e}", path=path) from e

    if len(raw) < HEADER.size:
        if raw[:len(magic)] != magic[:len(raw)]:
            raise errors.format(f"{path}: magic inválido", path=path)
        raise errors.checksum(f"{path}: ficheiro truncado ({len(raw)} bytes)", path=path)
    file_magic, version, endian, count, manifest_len, payload_len, checksum = HEADER.unpack_from(raw)
    if file_magic != magic:
        raise errors.format(f"{path}: magic inválido {file_magic!r}", path=path)
    if version not in supported_versions:
        raise errors.version(f"{path}: versão {version} não suportada (suportadas: {list(supported_versions)})",
                             path=path)
    if endian != ENDIAN_TAG:
        raise errors.format(f"{path}: endianness {endian!r} não suportada", path=path)
    payload = raw[HEADER.size:]
    if len(payload) != payload_len or hashlib.sha256(payload).digest() != checksum:
        raise errors.checksum(
            f"{path}: checksum inválido (payload {len(payload)} de {payload_len} bytes)", path=path)
    try:
        manifest = json.loads(payload[:manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise errors.format(f"{path}: manifest ilegível: {e}", path=path) from e
    blob = payload[manifest_len:]
    arrays: Dict[str, np.ndarray] = {}
    for name, info in manifest.get("arrays", {}).items():
        dtype = np.dtype(info["dtype"])
        shape = tuple(info["shape"])
        count_items = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=dtype, count=count_items, offset=int(info["offset"]))
        arrays[name] = arr.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
    return version, count, manifest, arrays
