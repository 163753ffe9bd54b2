"""
Contexto partilhado entre mini apps.
"""

import platform
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from core.io_utils import atomic_write_json

RUN_MANIFEST_NAME = "run_config.json"


def library_versions() -> Dict[str, str]:
    """Versões das bibliotecas que influenciam os resultados numéricos."""
    versions = {"python": platform.python_version()}
    for mod_name in ("numpy", "torch", "scipy"):
        try:
            mod = __import__(mod_name)
            versions[mod_name] = str(getattr(mod, "__version__", "unknown"))
        except ImportError:
            versions[mod_name] = "missing"
    return versions


@dataclass
class AppContext:
    """Contexto partilhado entre mini apps."""

    # Diretórios
    base_dir: Path
    work_dir: Path
    log_dir: Path

    # Reprodutibilidade
    seed: int = 0
    workers: int = 1
    preset: str = "desk"

    # Metadados
    run_id: str = field(default_factory=lambda: datetime.now().strftime("%Y%m%d_%H%M%S"))
    start_time: datetime = field(default_factory=datetime.now)

    # Dados partilhados entre apps (ex.: caminho do dataset, último checkpoint)
    shared_data: Dict[str, Any] = field(default_factory=dict)

    # Output files gerados pelas apps
    output_files: Dict[str, Path] = field(default_factory=dict)

    def get_or_create_workdir(self, subdir: str = "") -> Path:
        """Cria subdiretório em work_dir se não existir."""
        path = self.work_dir / subdir if subdir else self.work_dir
        path.mkdir(parents=True, exist_ok=True)
        return path

    def get_or_create_logdir(self, subdir: str = "") -> Path:
        """Cria subdiretório em log_dir se não existir."""
        path = self.log_dir / subdir if subdir else self.log_dir
        path.mkdir(parents=True, exist_ok=True)
        return path

    def resolve_path(self, value: Optional[Any]) -> Optional[Path]:
        """Caminho da config: relativo a ``base_dir`` se não for absoluto."""
        if value is None:
            return None
        path = Path(value).expanduser()
        return path if path.is_absolute() else self.base_dir / path

    def input_path(self, configured: Optional[Any], shared_key: str) -> Optional[Path]:
        """Input de uma app: o configurado, senão o produzido por uma app anterior do run."""
        path = self.resolve_path(configured)
        if path is None and shared_key in self.shared_data:
            path = Path(self.shared_data[shared_key])
        return path

    def write_run_manifest(self, resolved_config: Dict[str, Any], subdir: str = "",
                           extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        Embute a config resolvida, a seed e as versões no diretório de output.

        Sem timestamps: o ficheiro é idêntico entre execuções reprodutíveis.
        """
        payload: Dict[str, Any] = {
            "config": resolved_config,
            "seed": self.seed,
            "preset": self.preset,
            "versions": library_versions(),
        }
        if extra:
            payload.update(extra)
        path = self.get_or_create_workdir(subdir) / RUN_MANIFEST_NAME
        atomic_write_json(path, payload)
        return path
