#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ODEInf - Entry point principal.
Inferência amortizada de campos vetoriais de EDOs: geração de dados,
pré-treino, finetune, inferência e avaliação como mini apps.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.base_app import EXIT_FAILURE, EXIT_OK
from core.exceptions import OdeInfAppError
from core.logging_setup import setup_logging

logger = logging.getLogger(__name__)

APP_COMMANDS = ("generate", "stats", "train", "finetune", "infer", "eval", "bench-vdp-fhn", "plot")
PRESETS = ("desk", "paper", "tiny")

# flag -> chave da config (override com pontos)
PATH_FLAGS = {
    "dataset": "paths.dataset",
    "checkpoint": "paths.checkpoint",
    "context": "paths.context",
    "queries": "paths.queries",
    "validation_context": "paths.validation_context",
    "plot_data": "paths.plot_data",
    "metrics": "paths.metrics",
    "resume": "paths.resume",
}


def add_global_flags(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
    """
    Flags aceites antes ou depois do subcomando. Nos subparsers os defaults
    são suprimidos para não apagarem valores dados antes do subcomando.
    """
    def default(value: Any) -> Any:
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", type=Path, default=default(None), help="Ficheiro de configuração JSON")
    parser.add_argument("--seed", type=int, default=default(None), help="Seed global (sobrepõe a config)")
    parser.add_argument("--out", type=Path, default=default(None),
                        help="Diretório de output (default: <base-dir>/runs)")
    parser.add_argument("--workers", type=int, default=default(None),
                        help="Workers de geração/avaliação (default: todos os cores)")
    parser.add_argument("--preset", choices=PRESETS, default=default(None), help="Preset do modelo")
    parser.add_argument("--verbose", action="store_true", default=default(False), help="Logging verboso")
    parser.add_argument("--base-dir", type=Path, default=default(Path.cwd()),
                        help="Diretório base para caminhos relativos (default: diretório atual)")
    for flag in PATH_FLAGS:
        parser.add_argument(f"--{flag.replace('_', '-')}", dest=flag, default=default(None),
                            help=f"Sobrepõe {PATH_FLAGS[flag]}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    add_global_flags(common, suppress=True)

    parser = argparse.ArgumentParser(
        description="ODEInf - Inferência amortizada de campos vetoriais",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exemplos:
  # Listar mini apps
  python main.py list

  # Dataset pequeno + treino curto
  python main.py generate --config config/tiny_config.json --out runs/tiny
  python main.py train --config config/tiny_config.json --out runs/tiny --dataset runs/tiny/dataset

  # Workflow completo
  python main.py workflow config/example_workflow.json --out runs/wf
        """
    )
    add_global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in APP_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"Executa a mini app '{name}'")
    sub.add_parser("list", parents=[common], help="Lista as mini apps disponíveis")
    wf = sub.add_parser("workflow", parents=[common], help="Executa um workflow JSON")
    wf.add_argument("workflow", type=Path, help="Ficheiro de workflow JSON")
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"seed": args.seed, "workers": args.workers, "model.preset": args.preset}
    for flag, key in PATH_FLAGS.items():
        overrides[key] = getattr(args, flag)
    return {k: v for k, v in overrides.items() if v is not None}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    setup_logging(level=log_level)

    # Import tardio: torch só é carregado depois do logging estar pronto
    from core.config import load_run_config
    from core.io_utils import load_json
    from orchestrator.runner import AppOrchestrator

    base_dir = args.base_dir.resolve()
    out_dir = (args.out if args.out is not None else base_dir / "runs").resolve()
    logger.debug(f"ODEInf iniciado. Base dir: {base_dir}, output: {out_dir}")

    try:
        orchestrator = AppOrchestrator(base_dir, work_dir=out_dir)
    except Exception as e:
        logger.error(f"Erro ao inicializar orquestrador: {e}", exc_info=True)
        return EXIT_FAILURE

    if args.command == "list":
        apps = orchestrator.list_apps()
        print("\nMini Apps disponíveis:")
        print("=" * 60)
        for name, info in apps.items():
            print(f"\n{name} v{info['version']}")
            print(f"  Descrição: {info['description']}")
            if info['dependencies']:
                print(f"  Dependências: {', '.join(info['dependencies'])}")
        print("\n" + "=" * 60)
        return EXIT_OK

    # Configuração (flags da CLI sobrepõem o ficheiro)
    try:
        config_path = args.config
        workflow_config = None
        if args.command == "workflow":
            workflow_config = load_json(args.workflow)
            if config_path is None and workflow_config.get("config"):
                config_path = base_dir / workflow_config["config"]
        config = load_run_config(config_path, collect_overrides(args))
    except OdeInfAppError as e:
        logger.error(f"Erro ao carregar configuração: {e}")
        return e.exit_code

    orchestrator.context.seed = config.seed
    orchestrator.context.workers = config.effective_workers()
    orchestrator.context.preset = config.model.preset

    if workflow_config is not None:
        logger.info(f"Executando workflow: {workflow_config.get('name', 'unnamed')}")
        results = orchestrator.run_workflow(workflow_config, base_config=config)

        success_count = sum(1 for r in results if r.success)
        total_count = len(results)

        print(f"\n{'=' * 60}")
        print(f"Workflow concluído: {success_count}/{total_count} apps bem-sucedidas")
        print(f"{'=' * 60}")

        for idx, result in enumerate(results, start=1):
            status = "✓" if result.success else "✗"
            print(f"{status} [{idx}] {result.message}")

        failed = [r for r in results if not r.success]
        return failed[0].exit_code if failed else EXIT_OK

    result = orchestrator.run_app(args.command, config)

    status = "✓" if result.success else "✗"
    print(f"\n{status} {result.message}")

    if result.output_files:
        print("\nFicheiros gerados:")
        for f in result.output_files:
            print(f"  - {f}")
    if result.data and args.verbose:
        print(json.dumps(result.data, indent=2, default=str, ensure_ascii=False))

    return result.exit_code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrompido pelo utilizador.")
        sys.exit(130)
    except Exception as e:
        logger.exception(f"Erro fatal: {e}")
        sys.exit(EXIT_FAILURE)
