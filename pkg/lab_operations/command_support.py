from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from common.errors import LabError
from dataset_operations.csv_io import load_csv_dataset
from dataset_operations.data_definitions import Dataset, MissingFile
from dataset_operations.generators import make_gaussian_clusters

from .config_loader import load_run_config
from .data_definitions import CommandName, ConfigError, RunConfig

EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3


class LabCommand(BaseCommand):
    """Shared plumbing: config flags, output directory, dataset construction and exit codes."""

    command_name: CommandName
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("-c", "--config", dest="config", default=None, help="Path to a JSON run configuration")
        parser.add_argument("--seed", dest="seed", type=int, default=None, help="Random seed")
        parser.add_argument("-o", "--output-dir", dest="output_dir", default=None, help="Directory for result files")
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override any configuration key; the value is parsed as JSON when possible",
        )

    def flag_values(self, options) -> dict:
        return {"seed": options.get("seed"), "output_dir": options.get("output_dir")}

    def load_config(self, options) -> RunConfig:
        try:
            return load_run_config(self.command_name, options.get("config"), self.flag_values(options), options.get("overrides"))
        except ConfigError as err:
            logger.error("Configuration rejected: {}", err.message)
            raise CommandError(err.message, returncode=EXIT_CONFIG_ERROR) from err

    def output_dir(self, config: RunConfig) -> Path:
        return Path(config.output_dir or settings.TCL_LAB_OUTPUT_DIR)

    def build_dataset(self, config: RunConfig) -> Dataset:
        try:
            if config.dataset_csv:
                return load_csv_dataset(config.dataset_csv)
            return make_gaussian_clusters(config.classes, config.per_class, config.d_in, config.spread, config.seed or 0)
        except MissingFile as err:
            raise CommandError(err.message, returncode=EXIT_IO_ERROR) from err
        except LabError as err:
            raise CommandError(err.message, returncode=EXIT_CONFIG_ERROR) from err

    def run_guarded(self, work):
        """Map library failures onto exit codes: OSError to 3, other lab errors to 2."""
        try:
            return work()
        except OSError as err:
            message = err.message if isinstance(err, LabError) else str(err)
            logger.error("I/O failure: {}", message)
            raise CommandError(message, returncode=EXIT_IO_ERROR) from err
        except LabError as err:
            logger.error("{} failed: {}", self.command_name.value, err.message)
            raise CommandError(err.message, returncode=EXIT_CONFIG_ERROR) from err
