import numpy as np
from loguru import logger

from dataset_operations.data_definitions import TrainingMode
from lab_operations.command_support import LabCommand
from lab_operations.data_definitions import CommandName
from lab_operations.report_writers import summary_table, write_compare_csv
from loss_operations.data_definitions import LossKind, LossParams
from training_operations.probe import random_encoder_top1, train_linear_probe
from training_operations.trainer import train_contrastive, train_cross_entropy


class Command(LabCommand):
    help = "Train SupCon, TCL and baselines over several seeds (and batch sizes or view counts); write compare.csv."

    command_name = CommandName.COMPARE

    def handle(self, *args, **options):
        config = self.load_config(options)
        dataset = self.build_dataset(config)
        output_dir = self.output_dir(config)
        seeds = [config.seed + n for n in range(config.seed_count)]
        batch_sizes = config.batch_sizes or [config.batch_size]
        views_grid = config.views_grid or [config.views_per_sample]
        probe = config.probe_config()

        def work():
            rows = []
            for seed in seeds:
                for batch_size in batch_sizes:
                    for views in views_grid:
                        specs = config.training_spec(batch_size=batch_size, views_per_sample=views)
                        for loss_kind in (LossKind.SUPCON, LossKind.TCL):
                            params = config.loss_params() if loss_kind is LossKind.TCL else LossParams(tau=config.tau, k1=0.0, k2=1.0)
                            model, _ = train_contrastive(dataset, config.mode, loss_kind, params, specs, seed)
                            _, top1 = train_linear_probe(model, dataset, seed=seed, config=probe)
                            rows.append({"seed": seed, "batch_size": batch_size, "method": loss_kind.value, "views": views, "top1": top1})
                    specs = config.training_spec(batch_size=batch_size)
                    if config.include_cross_entropy and config.mode is TrainingMode.SUPERVISED:
                        _, _, top1, _ = train_cross_entropy(dataset, specs, seed, train_fraction=config.train_fraction)
                        rows.append({"seed": seed, "batch_size": batch_size, "method": "cross_entropy", "views": None, "top1": top1})
                    if config.include_random_encoder:
                        top1 = random_encoder_top1(dataset, specs.mlp, seed, config=probe)
                        rows.append({"seed": seed, "batch_size": batch_size, "method": "random_encoder", "views": None, "top1": top1})
            write_compare_csv(output_dir / "compare.csv", rows)
            return rows

        rows = self.run_guarded(work)
        methods = sorted({(row["method"], row["views"] or 0) for row in rows})
        means = []
        for method, views in methods:
            scores = [row["top1"] for row in rows if row["method"] == method and (row["views"] or 0) == views]
            means.append({"method": method, "views": views or None, "runs": len(scores), "mean_top1": float(np.mean(scores))})
            logger.info("{} (views={}): mean top-1 {:.2f} over {} runs", method, views or "-", means[-1]["mean_top1"], len(scores))
        self.stdout.write(summary_table(means, ["method", "views", "runs", "mean_top1"]))
