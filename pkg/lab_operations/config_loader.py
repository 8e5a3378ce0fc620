import json
from enum import Enum
from pathlib import Path

import dacite
from dacite import from_dict
from loguru import logger
from marshmallow import ValidationError

from common.errors import LabError

from .data_definitions import COMMAND_SCHEMAS, SELFSUP_DEFAULTS, CommandName, ConfigError, RunConfig

SEED_REQUIRED = (CommandName.TRAIN, CommandName.GRADSCAN, CommandName.COMPARE)


def parse_override(assignment: str) -> tuple[str, object]:
    """`key=value`; the value is read as JSON when it parses, else kept as a string."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def read_config_file(path: str | Path) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: line {err.lineno} column {err.colno}: {err.msg}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def load_run_config(
    command: CommandName,
    config_path: str | Path | None = None,
    flag_values: dict | None = None,
    overrides: list[str] | None = None,
) -> RunConfig:
    """
    Merge the config file, command-line flags and `--set` overrides (later wins), validate
    against the command's schema and build a RunConfig. Every failure is a ConfigError.
    """
    command = CommandName(command)
    merged: dict = read_config_file(config_path) if config_path else {}
    file_command = merged.get("command")
    if file_command is not None and file_command != command.value:
        raise ConfigError(f"config file is for command {file_command!r}, not {command.value!r}")

    merged.update({key: value for key, value in (flag_values or {}).items() if value is not None})
    for assignment in overrides or []:
        key, value = parse_override(assignment)
        merged[key] = value
    merged["command"] = command.value

    schema = COMMAND_SCHEMAS[command]()
    try:
        validated = schema.load(merged)
    except ValidationError as err:
        raise ConfigError(f"invalid {command.value} configuration: {json.dumps(err.messages, sort_keys=True)}") from err

    if validated.get("mode") == "selfsup":
        for key, value in SELFSUP_DEFAULTS.items():
            validated.setdefault(key, value)
    if command in SEED_REQUIRED and validated.get("seed") is None:
        raise ConfigError(f"--seed is required for {command.value}")

    try:
        run_config = from_dict(data_class=RunConfig, data=validated, config=dacite.Config(cast=[Enum], strict=True))
    except dacite.DaciteError as err:
        raise ConfigError(f"invalid {command.value} configuration: {err}") from err

    try:
        run_config.loss_params()
        run_config.training_spec()
        run_config.probe_config()
    except LabError as err:
        raise ConfigError(f"invalid {command.value} configuration: {err.message}") from err

    logger.debug("Loaded {} configuration: {}", command.value, validated)
    return run_config
