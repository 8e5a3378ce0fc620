import os
import sys

from dotenv import find_dotenv, load_dotenv
from loguru import logger

ENV_FILE = find_dotenv(usecwd=True)
if ENV_FILE:
    load_dotenv(ENV_FILE)


def setup_loguru():
    # stderr only: stdout carries command reports
    DISABLE_JSON_LOGGING = (os.getenv("DISABLE_JSON_LOGGING") or "").strip().lower() in {"1", "true", "yes", "on"}
    LOG_LEVEL = (os.getenv("LOG_LEVEL") or "INFO").strip().upper()
    logger.remove()
    if DISABLE_JSON_LOGGING:
        logger.add(sys.stderr, serialize=False, level=LOG_LEVEL)
    else:
        logger.add(sys.stderr, serialize=True, level=LOG_LEVEL)


setup_loguru()
