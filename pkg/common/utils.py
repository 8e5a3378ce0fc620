import datetime
import json
from dataclasses import asdict, is_dataclass
from enum import Enum

import arrow
import numpy as np


class EnhancedJSONEncoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, (datetime.date, datetime.datetime)):
            return o.isoformat()
        if isinstance(o, arrow.Arrow):
            return o.isoformat()
        if is_dataclass(o):
            return asdict(o)
        if isinstance(o, Enum):
            return o.value
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return super().default(o)


def dumps_json(payload, indent: int | None = 2) -> str:
    return json.dumps(payload, cls=EnhancedJSONEncoder, indent=indent, sort_keys=False)
