from django.conf import settings

from gradient_analysis_operations.gradient_curves import SweepConfig, k2_refinement_grid, k_sweep, coarse_k1_grid
from lab_operations.command_support import LabCommand
from lab_operations.data_definitions import CommandName
from lab_operations.report_writers import SWEEP_COLUMNS, summary_table, write_sweep_coefficients_csv, write_sweep_csv


class Command(LabCommand):
    help = "Sweep k1/k2 over a frozen seeded batch set and write sweep.csv (and sweep_coefficients.csv)."

    command_name = CommandName.GRADSCAN

    def handle(self, *args, **options):
        config = self.load_config(options)
        dataset = self.build_dataset(config)
        output_dir = self.output_dir(config)

        def work():
            sweep = SweepConfig(
                k1_grid=tuple(config.k1_grid or coarse_k1_grid()),
                k2_grid=tuple(config.k2_grid or k2_refinement_grid()),
                tau=config.tau,
                mode=config.mode,
                n_batches=config.sweep_batches,
                seed=config.seed,
                training=config.training_spec(),
                probe=config.probe_config(),
                train_and_probe=config.train_and_probe,
            )
            rows = k_sweep(sweep, dataset, workers=settings.TCL_LAB_THREADS)
            write_sweep_csv(output_dir / "sweep.csv", rows)
            write_sweep_coefficients_csv(output_dir / "sweep_coefficients.csv", rows)
            return rows

        rows = self.run_guarded(work)
        self.stdout.write(summary_table([{name: getattr(r, name) for name in SWEEP_COLUMNS} for r in rows], SWEEP_COLUMNS))
