from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

JsonData = dict | list | None


# Canonical record envelope for machine-readable CLI output.
#
# Success:
#   {"code": 0, "message": "ok", "data": ...}
# Error (stderr, nonzero exit):
#   {"code": <catalog code>, "message": <human-readable>, "data": null}
#
# meta.ndjson / metrics.ndjson lines are bare objects, not wrapped.


def json_record(*, code: int, message: str, data: JsonData) -> dict:
    return {"code": code, "message": message, "data": data}


def ok_record(data: JsonData = None) -> dict:
    return json_record(code=0, message="ok", data=data)


def error_record(message: str, code: int = 1) -> dict:
    return json_record(code=code, message=message, data=None)


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        if math.isnan(f) or math.isinf(f):
            return str(f)
        return f
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_record(record: dict) -> str:
    return json.dumps(to_jsonable(record), ensure_ascii=False, sort_keys=True)
