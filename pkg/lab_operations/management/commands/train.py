import arrow
from loguru import logger

from gradient_analysis_operations.gradient_curves import mean_gradient_curves
from lab_operations.command_support import LabCommand
from lab_operations.data_definitions import CommandName
from lab_operations.report_writers import write_gradient_curves_csv, write_metrics_csv, write_trace_json
from training_operations.checkpoint import save_checkpoint
from training_operations.probe import train_linear_probe
from training_operations.trainer import train_contrastive


class Command(LabCommand):
    help = "Contrastive pre-training followed by a linear probe; writes metrics.csv, trace.json, gradient_curves.csv and model.ckpt."

    command_name = CommandName.TRAIN

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--loss", dest="loss", choices=["supcon", "tcl"], default=None, help="Contrastive objective")
        parser.add_argument("--mode", dest="mode", choices=["supervised", "selfsup"], default=None, help="Positive-set construction")
        parser.add_argument("--k1", dest="k1", type=float, default=None, help="TCL k1")
        parser.add_argument("--k2", dest="k2", type=float, default=None, help="TCL k2")
        parser.add_argument("--tau", dest="tau", type=float, default=None, help="Temperature")

    def flag_values(self, options) -> dict:
        return {**super().flag_values(options), **{key: options.get(key) for key in ("loss", "mode", "k1", "k2", "tau")}}

    def handle(self, *args, **options):
        config = self.load_config(options)
        dataset = self.build_dataset(config)
        output_dir = self.output_dir(config)
        started_at = arrow.utcnow()

        def work():
            model, trace = train_contrastive(dataset, config.mode, config.loss, config.loss_params(), config.training_spec(), config.seed)
            probe, top1 = train_linear_probe(model, dataset, seed=config.seed, config=config.probe_config())
            written = [
                write_metrics_csv(output_dir / "metrics.csv", trace, probe.history, top1),
                save_checkpoint(model, output_dir / "model.ckpt"),
            ]
            if trace.gradient_logging and trace.records:
                written.append(write_gradient_curves_csv(output_dir / "gradient_curves.csv", mean_gradient_curves(trace)))
            payload = {
                "started_at": started_at.isoformat(),
                "config": config,
                "trace": trace,
                "probe": {"top1": top1, "history": probe.history},
            }
            written.append(write_trace_json(output_dir / "trace.json", payload))
            return top1, written

        top1, written = self.run_guarded(work)
        for path in written:
            logger.info("Wrote {}", path)
        self.stdout.write(f"{config.mode.value} {config.loss.value}: probe top-1 {top1:.2f}")
