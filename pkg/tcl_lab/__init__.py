from . import logging_config

__all__ = ("logging_config",)
