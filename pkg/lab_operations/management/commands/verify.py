from django.conf import settings
from django.core.management.base import CommandError

from lab_operations.command_support import EXIT_VERIFY_FAILED, LabCommand
from lab_operations.data_definitions import FAULT_INJECTIONS, CommandName
from lab_operations.report_writers import summary_table, write_verify_failures_json
from lab_operations.verification_suites import run_verification


class Command(LabCommand):
    help = "Run the gradient oracle, reduction identity, hard-positive/negative and invariant suites; exit 0 iff all pass."

    command_name = CommandName.VERIFY

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--fault-injection", dest="fault_injection", choices=FAULT_INJECTIONS, default=None, help="Corrupt a coefficient on purpose")

    def flag_values(self, options) -> dict:
        return {**super().flag_values(options), "fault_injection": options.get("fault_injection")}

    def handle(self, *args, **options):
        config = self.load_config(options)
        results = self.run_guarded(lambda: run_verification(config, workers=settings.TCL_LAB_THREADS))

        self.stdout.write(summary_table([r.summary_row() for r in results], ["suite", "status", "checked", "worst", "tolerance"]))
        skipped = [r.name for r in results if r.skipped]
        if skipped:
            self.stdout.write(f"Skipped: {', '.join(skipped)}")

        failed = [r for r in results if not r.skipped and not r.passed]
        if not failed:
            self.stdout.write(self.style.SUCCESS("All verification suites passed"))
            return

        failures = [{"suite": r.name, "counterexamples": r.counterexamples} for r in failed]
        path = self.run_guarded(lambda: write_verify_failures_json(self.output_dir(config) / "verify_failures.json", failures))
        names = ", ".join(r.name for r in failed)
        raise CommandError(f"Verification failed: {names} (counterexamples in {path})", returncode=EXIT_VERIFY_FAILED)
