import re
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from common.file_operations import atomic_write_csv

from .data_definitions import Dataset, InvalidShape, MissingFile, ParseError

LABEL_COLUMN = "label"
EXACT_FLOAT_FORMAT = "%.17g"
_TOKENIZER_LINE = re.compile(r"line (\d+)")


def _feature_columns(columns: list[str]) -> tuple[list[str], bool]:
    has_label = bool(columns) and columns[-1] == LABEL_COLUMN
    feature_columns = columns[:-1] if has_label else columns
    expected = [f"f{j}" for j in range(len(feature_columns))]
    if not feature_columns or feature_columns != expected:
        raise ParseError(f"header must be f0,...,f{{d-1}}[,label], got {','.join(columns)}", line_number=1)
    return feature_columns, has_label


def _first_bad_row(mask: pd.Series) -> int:
    return int(np.flatnonzero(mask.to_numpy())[0])


def load_csv_dataset(path: str | Path) -> Dataset:
    """
    Read a dataset written as `f0,...,f{d-1}[,label]` rows.

    Line numbers in errors are 1-based file lines, the header being line 1.
    """
    source = Path(path)
    if not source.is_file():
        raise MissingFile(f"dataset file {source} does not exist")
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as exc:
        raise ParseError("file is empty", line_number=1) from exc
    except pd.errors.ParserError as exc:
        match = _TOKENIZER_LINE.search(str(exc))
        raise ParseError(f"malformed row: {exc}", line_number=int(match.group(1)) if match else None) from exc

    feature_columns, has_label = _feature_columns([str(c).strip() for c in frame.columns])
    frame.columns = [*feature_columns, *([LABEL_COLUMN] if has_label else [])]
    if frame.empty:
        raise ParseError("dataset has no rows", line_number=2)

    features = np.empty((len(frame), len(feature_columns)))
    for j, column in enumerate(feature_columns):
        parsed = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = parsed.isna() | ~np.isfinite(parsed.fillna(0.0))
        if bad.any():
            row = _first_bad_row(bad)
            raise ParseError(f"column {column}: {frame[column].iloc[row]!r} is not a finite number", line_number=row + 2)
        # float() parsing keeps the roundtrip exact
        features[:, j] = frame[column].str.strip().astype(np.float64).to_numpy()

    labels = None
    class_count = 0
    if has_label:
        raw = frame[LABEL_COLUMN].str.strip()
        bad = ~raw.str.fullmatch(r"\d+")
        if bad.any():
            row = _first_bad_row(bad)
            raise ParseError(f"label {raw.iloc[row]!r} is not a non-negative integer", line_number=row + 2)
        labels = raw.astype(np.int64).to_numpy()
        class_count = int(labels.max()) + 1

    try:
        dataset = Dataset(features=features, labels=labels, class_count=class_count)
    except InvalidShape as exc:
        raise ParseError(exc.message) from exc
    logger.info("Loaded {} samples with {} features from {} (labels: {})", dataset.size, dataset.dim, source, has_label)
    return dataset


def save_csv_dataset(ds: Dataset, path: str | Path) -> Path:
    frame = pd.DataFrame(ds.features, columns=[f"f{j}" for j in range(ds.dim)])
    if ds.labels is not None:
        frame[LABEL_COLUMN] = ds.labels
    return atomic_write_csv(path, frame, float_format=EXACT_FLOAT_FORMAT)
