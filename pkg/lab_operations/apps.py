from django.apps import AppConfig


class LabOperationsConfig(AppConfig):
    name = "lab_operations"
    verbose_name = "TCL lab commands"
