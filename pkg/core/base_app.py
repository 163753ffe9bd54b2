"""
Classe base abstrata para todas as mini apps.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

from core.context import AppContext

if TYPE_CHECKING:
    from core.config import RunConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


@dataclass
class AppResult:
    """Resultado da execução de uma mini app."""
    success: bool
    message: str
    data: Optional[Dict[str, Any]] = None
    output_files: Optional[List[Path]] = None
    exit_code: Optional[int] = None

    def __post_init__(self):
        if self.output_files is None:
            self.output_files = []
        if self.exit_code is None:
            self.exit_code = EXIT_OK if self.success else EXIT_FAILURE


class BaseApp(ABC):
    """Classe base abstrata para todas as mini apps."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Nome único da mini app (ex: 'generate', 'bench-vdp-fhn')."""
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        """Descrição da funcionalidade da mini app."""
        pass

    @property
    def version(self) -> str:
        """Versão da mini app."""
        return "1.0.0"

    def validate_config(self, config: "RunConfig") -> Tuple[bool, Optional[str]]:
        """
        Valida a configuração da mini app (pré-condições sobre inputs).

        Returns:
            (is_valid, error_message)
        """
        return True, None

    @abstractmethod
    def run(self, config: "RunConfig", context: AppContext) -> AppResult:
        """
        Executa a mini app.

        Args:
            config: Configuração resolvida do run
            context: Contexto partilhado entre apps

        Returns:
            AppResult com resultado da execução
        """
        pass

    def get_dependencies(self) -> List[str]:
        """
        Lista de nomes de outras mini apps que devem ser executadas antes desta.
        Returns lista vazia se não houver dependências.
        """
        return []

    def cleanup(self, config: "RunConfig", context: AppContext) -> None:
        """
        Cleanup após execução (opcional).
        Útil para libertar recursos temporários, etc.
        """
        pass
