import os
import tempfile
from pathlib import Path

import pandas as pd
from loguru import logger

from common.errors import LabError

CSV_FLOAT_FORMAT = "%.12g"


class OutputWriteError(LabError, OSError):
    pass


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """Write `payload` to a temp file next to `path`, then rename it into place."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(temp_name, target)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
    except OSError as exc:
        raise OutputWriteError(f"could not write {target}: {exc}") from exc
    logger.debug("Wrote {} bytes to {}", len(payload), target)
    return target


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_csv(path: str | Path, frame: pd.DataFrame, float_format: str = CSV_FLOAT_FORMAT) -> Path:
    # Fixed float format and LF endings keep reruns byte-identical.
    body = frame.to_csv(index=False, sep=",", decimal=".", lineterminator="\n", float_format=float_format, na_rep="")
    return atomic_write_text(path, body)
