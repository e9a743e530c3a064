"""
CLI Commands - Merges configuration layers and dispatches to the services.

Priority (highest first): flags > --config file (command section over top-level
keys) > SDL_ environment > .env > config.yaml > model defaults.
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Type

import yaml
from pydantic import ValidationError

from core.errors import ConfigError
from workbench.config import Settings, get_settings
from workbench.models.run_config import (
    EncoderParams,
    EvalRunConfig,
    ExportAtomsRunConfig,
    InspectRunConfig,
    OptimizerParams,
    RecoveryRunConfig,
    RunParams,
    SweepRunConfig,
    SyntheticRunConfig,
    TrainRunConfig,
)
from workbench.services.evaluation_service import get_evaluation_service
from workbench.services.export_service import get_export_service
from workbench.services.inspect_service import get_inspect_service
from workbench.services.sweep_service import get_sweep_service
from workbench.services.synthetic_service import get_synthetic_service
from workbench.services.training_service import get_training_service

logger = logging.getLogger(__name__)

RUN_CONFIG_MODELS: Dict[str, Type[RunParams]] = {
    "train": TrainRunConfig,
    "eval": EvalRunConfig,
    "sweep": SweepRunConfig,
    "inspect": InspectRunConfig,
    "export-atoms": ExportAtomsRunConfig,
    "gen-synthetic": SyntheticRunConfig,
    "recovery-score": RecoveryRunConfig,
}

_NAMESPACE_ONLY = {"command", "config_file", "log_level"}


def settings_defaults(command: str, settings: Settings) -> Dict[str, Any]:
    """Settings values that act as defaults for a command's run config."""
    values: Dict[str, Any] = {"seed": settings.seed, "out_dir": settings.out_dir}
    if command not in ("train", "sweep"):
        return values

    hyperparameters = set(EncoderParams.model_fields) | set(OptimizerParams.model_fields)
    values.update({name: getattr(settings, name) for name in hyperparameters if hasattr(settings, name)})
    if command == "train":
        values.update(variant=settings.variant, k=settings.k, p=settings.p)
    else:
        values.update(variants=[settings.variant], ks=[settings.k], ps=[settings.p], workers=settings.sweep_workers)
    return values


def load_config_file(path: Path, command: str) -> Dict[str, Any]:
    """
    Values of a --config YAML file for one command.

    Top-level scalar keys apply to every command; a mapping named after the
    command overrides them.

    Raises:
        ConfigError: If the file is not a YAML mapping
    """
    with open(path, "r") as f:
        try:
            content = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"--config {path}: {e}")
    if not isinstance(content, dict):
        raise ConfigError(f"--config {path}: expected a mapping at the top level")

    values = {key.replace("-", "_"): value for key, value in content.items() if not isinstance(value, dict)}
    section = content.get(command) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"--config {path}: section {command!r} must be a mapping")
    values.update({key.replace("-", "_"): value for key, value in section.items()})
    return values


def build_run_config(command: str, args: argparse.Namespace, settings: Settings = None) -> RunParams:
    """
    Merge all configuration layers into the command's validated run config.

    Raises:
        pydantic.ValidationError: If any merged value violates the model
    """
    model = RUN_CONFIG_MODELS[command]
    settings = settings or get_settings()
    flags = {key: value for key, value in vars(args).items() if key not in _NAMESPACE_ONLY}

    merged = settings_defaults(command, settings)
    config_file = getattr(args, "config_file", None)
    if config_file is not None:
        merged.update(load_config_file(Path(config_file), command))
    merged.update(flags)

    known = {key: value for key, value in merged.items() if key in model.model_fields}
    ignored = sorted(set(merged) - set(known))
    if ignored:
        logger.debug(f"{command}: ignoring parameters {ignored}")
    return model(**known)


def format_validation_error(error: ValidationError) -> str:
    """One line per problem, naming the flag: "--k: k ≥ 1"."""
    lines = []
    for problem in error.errors():
        message = problem["msg"].removeprefix("Value error, ")
        location = problem.get("loc") or ()
        if location:
            lines.append(f"--{str(location[0]).replace('_', '-')}: {message}")
        else:
            lines.append(message)
    return "\n".join(lines)


def cmd_train(config: TrainRunConfig) -> None:
    result = get_training_service().run(config)
    loss = result.final_loss
    print(f"checkpoint: {result.checkpoint}")
    print(f"log: {result.log}")
    print(
        f"final loss: recon={loss.recon:.6g} sparsity_penalty={loss.sparsity_penalty:.6g} "
        f"aux={loss.aux:.6g} total={loss.total:.6g} l0={loss.l0:.4g}"
    )


def cmd_eval(config: EvalRunConfig) -> None:
    result = get_evaluation_service().run(config)
    for k, r2 in sorted(result.r2.items()):
        print(f"r2 (k={k}): {r2:.6f}")
    for name, path in result.files.items():
        print(f"{name}: {path}")


def cmd_sweep(config: SweepRunConfig) -> None:
    print(f"sweep: {get_sweep_service().run(config)}")


def cmd_inspect(config: InspectRunConfig) -> None:
    for index, paths in get_inspect_service().run(config).items():
        print(f"sample {index}: {', '.join(str(p) for p in paths)}")


def cmd_export_atoms(config: ExportAtomsRunConfig) -> None:
    for name, path in get_export_service().run(config).items():
        print(f"{name}: {path}")


def cmd_gen_synthetic(config: SyntheticRunConfig) -> None:
    for name, path in get_synthetic_service().generate(config).items():
        print(f"{name}: {path}")


def cmd_recovery_score(config: RecoveryRunConfig) -> None:
    score = get_synthetic_service().score(config)
    print(f"matched_fraction: {score.matched_fraction:.6f}")
    print(f"mean_best_cosine: {score.mean_best_cosine:.6f}")


HANDLERS: Dict[str, Callable[[Any], None]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
    "export-atoms": cmd_export_atoms,
    "gen-synthetic": cmd_gen_synthetic,
    "recovery-score": cmd_recovery_score,
}
