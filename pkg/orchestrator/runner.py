"""
Orquestrador principal para executar mini apps.
"""

import importlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.base_app import EXIT_CONFIG, EXIT_FAILURE, AppResult, BaseApp
from core.config import RunConfig, load_run_config, run_config_from_dict
from core.context import AppContext
from core.exceptions import OdeInfAppError, OdeInfConfigError

logger = logging.getLogger(__name__)


class AppOrchestrator:
    """Orquestrador de mini apps."""

    def __init__(self, base_dir: Path, context: Optional[AppContext] = None,
                 work_dir: Optional[Path] = None):
        """
        Inicializa o orquestrador.

        Args:
            base_dir: Diretório base do projeto (contém ``apps/``)
            context: Contexto partilhado (opcional, será criado se None)
            work_dir: Diretório de output (``--out``); default ``<base_dir>/runs``
        """
        self.base_dir = Path(base_dir).resolve()

        if context is None:
            work_dir = Path(work_dir) if work_dir is not None else self.base_dir / "runs"
            self.context = AppContext(
                base_dir=self.base_dir,
                work_dir=work_dir,
                log_dir=work_dir / "logs"
            )
        else:
            self.context = context

        self.apps: Dict[str, BaseApp] = {}
        self._load_apps()

    def _load_apps(self):
        """Carrega dinamicamente todas as mini apps do pacote ``apps``."""
        apps_dir = Path(__file__).resolve().parent.parent / "apps"

        if not apps_dir.exists():
            logger.warning(f"Diretório apps não encontrado: {apps_dir}")
            return

        for app_dir in sorted(apps_dir.iterdir()):
            if not app_dir.is_dir():
                continue

            init_file = app_dir / "__init__.py"
            app_file = app_dir / "app.py"

            if not init_file.exists() or not app_file.exists():
                continue

            try:
                module_name = f"apps.{app_dir.name}.app"
                module = importlib.import_module(module_name)

                # Procurar classe que herda de BaseApp definida no próprio módulo
                app_class = None
                for attr_name in dir(module):
                    attr = getattr(module, attr_name)
                    if (isinstance(attr, type) and
                            issubclass(attr, BaseApp) and
                            attr is not BaseApp and
                            attr.__module__ == module.__name__):
                        app_class = attr
                        break

                if app_class:
                    app_instance = app_class()
                    self.apps[app_instance.name] = app_instance
                    logger.debug(f"Mini app carregada: {app_instance.name} v{app_instance.version}")
                else:
                    logger.warning(f"Nenhuma classe BaseApp encontrada em {module_name}")

            except Exception as e:
                logger.error(f"Erro ao carregar app {app_dir.name}: {e}", exc_info=True)

    def list_apps(self) -> Dict[str, Dict[str, Any]]:
        """Lista todas as mini apps disponíveis."""
        return {
            name: {
                "description": app.description,
                "version": app.version,
                "dependencies": app.get_dependencies()
            }
            for name, app in sorted(self.apps.items())
        }

    def run_app(
        self,
        app_name: str,
        config: RunConfig,
        run_dependencies: bool = True
    ) -> AppResult:
        """
        Executa uma mini app específica.

        Exceções do framework viram um AppResult falhado com o ``exit_code``
        da exceção; exceções inesperadas ficam com código 1.
        """
        if app_name not in self.apps:
            return AppResult(
                success=False,
                message=f"App '{app_name}' não encontrada. Apps disponíveis: {', '.join(sorted(self.apps))}",
                exit_code=EXIT_CONFIG
            )

        app = self.apps[app_name]

        is_valid, error = app.validate_config(config)
        if not is_valid:
            return AppResult(
                success=False,
                message=f"Config inválida para '{app_name}': {error}",
                exit_code=EXIT_CONFIG
            )

        if run_dependencies:
            for dep_name in app.get_dependencies():
                logger.info(f"Executando dependência '{dep_name}' para '{app_name}'...")
                dep_result = self.run_app(dep_name, config, run_dependencies=True)
                if not dep_result.success:
                    return AppResult(
                        success=False,
                        message=f"Dependência '{dep_name}' falhou: {dep_result.message}",
                        exit_code=dep_result.exit_code
                    )

        try:
            logger.info(f"Executando mini app: {app_name}")
            result = app.run(config, self.context)

            if result.success:
                logger.info(f"Mini app '{app_name}' executada com sucesso: {result.message}")
                for f in result.output_files:
                    self.context.output_files[f"{app_name}:{Path(f).name}"] = Path(f)
            else:
                logger.error(f"Mini app '{app_name}' falhou: {result.message}")

            return result

        except OdeInfAppError as e:
            logger.error(f"'{app_name}' falhou ({type(e).__name__}): {e}")
            return AppResult(success=False, message=str(e), exit_code=e.exit_code)

        except Exception as e:
            logger.exception(f"Erro ao executar '{app_name}': {e}")
            return AppResult(
                success=False,
                message=f"Erro inesperado: {str(e)}",
                exit_code=EXIT_FAILURE
            )
        finally:
            try:
                app.cleanup(config, self.context)
            except Exception as e:
                logger.warning(f"Erro no cleanup de '{app_name}': {e}")

    def run_workflow(self, workflow_config: Dict[str, Any],
                     base_config: Optional[RunConfig] = None) -> List[AppResult]:
        """
        Executa uma sequência de apps (workflow).

        Args:
            workflow_config:
                {
                    "name": "nome_workflow",
                    "continue_on_error": false,
                    "config": "config/tiny_config.json",
                    "apps": [
                        {"name": "generate"},
                        {"name": "train", "overrides": {"training.steps": 50}}
                    ]
                }
            base_config: config do run (tem precedência sobre ``workflow_config["config"]``)

        Returns:
            Lista de resultados de cada app
        """
        results: List[AppResult] = []
        apps_to_run = workflow_config.get("apps", [])
        continue_on_error = workflow_config.get("continue_on_error", False)

        if base_config is None:
            cfg_path = workflow_config.get("config")
            base_path = (self.base_dir / cfg_path) if cfg_path else None
            base_config = load_run_config(base_path)

        logger.info(f"Iniciando workflow: {workflow_config.get('name', 'unnamed')}")

        for idx, app_entry in enumerate(apps_to_run, start=1):
            app_name = app_entry.get("name")
            if not app_name:
                logger.warning(f"App #{idx} sem nome, ignorando...")
                continue

            overrides = app_entry.get("overrides", {})
            try:
                config = (run_config_from_dict(base_config.to_file_dict(), overrides)
                          if overrides else base_config)
            except OdeInfConfigError as e:
                result = AppResult(success=False, message=f"'{app_name}': {e}", exit_code=e.exit_code)
            else:
                logger.info(f"[{idx}/{len(apps_to_run)}] Executando: {app_name}")
                result = self.run_app(app_name, config)
            results.append(result)

            if not result.success and not continue_on_error:
                logger.error(f"Workflow interrompido devido a falha em '{app_name}'")
                break

        logger.info(f"Workflow concluído. {sum(1 for r in results if r.success)}/{len(results)} apps bem-sucedidas")
        return results
