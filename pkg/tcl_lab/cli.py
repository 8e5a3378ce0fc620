import os
import sys


def main():
    """Console entry point: `tcl-lab <command> [options]`."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "tcl_lab.settings")
    from django.core.management import execute_from_command_line

    execute_from_command_line(["tcl-lab", *sys.argv[1:]])


if __name__ == "__main__":
    main()
