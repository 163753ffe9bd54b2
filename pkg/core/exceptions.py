"""
Exceções personalizadas do framework ODEInf.

Cada exceção traz um ``exit_code`` que o orquestrador usa como código de saída
do processo: 2 = configuração, 3 = IO, 4 = falha numérica.
"""

from typing import Any, Dict, List, Optional


class OdeInfAppError(Exception):
    """Exceção base para erros de mini apps."""
    exit_code = 1


class OdeInfConfigError(OdeInfAppError):
    """Erro de configuração (chave desconhecida, valor inválido)."""
    exit_code = 2


class OdeInfValidationError(OdeInfAppError, ValueError):
    """Violação de contrato de uma operação pública."""
    exit_code = 2


class OdeInfIOError(OdeInfAppError):
    """Erro de leitura/escrita. A mensagem deve nomear o caminho."""
    exit_code = 3

    def __init__(self, message: str, path: Optional[object] = None):
        super().__init__(message)
        self.path = path


class ShardFormatError(OdeInfIOError):
    """Ficheiro de shard com formato inválido (magic, cabeçalho, manifest)."""
    pass


class ShardVersionError(ShardFormatError):
    """Versão de formato de shard não suportada."""
    pass


class ShardChecksumError(ShardFormatError):
    """Checksum não confere (inclui ficheiros truncados)."""
    pass


class CheckpointFormatError(OdeInfIOError):
    """Checkpoint de modelo inválido ou corrompido."""
    pass


class OdeInfNumericalError(OdeInfAppError):
    """Falha numérica (loss não finita, geração impossível, ...)."""
    exit_code = 4


class NonFiniteLossError(OdeInfNumericalError):
    """Loss não finita num passo de treino."""

    def __init__(self, message: str, record_ids: Optional[List[int]] = None):
        super().__init__(message)
        self.record_ids = list(record_ids or [])


class GenerationExhaustedError(OdeInfNumericalError):
    """Contagens de dataset inatingíveis (taxa de rejeição de 100%)."""

    def __init__(self, message: str, statistics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.statistics = dict(statistics or {})
