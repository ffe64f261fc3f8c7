"""Self-describing JSON model artifacts.

Floats are written with Python's shortest round-trip representation, so a
save/load cycle reproduces parameters bit for bit.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from ..errors import IoFailure, SoftSensorError
from .lstm import LstmModel
from .mlp import MlpModel
from .ridge import RidgeModel

FORMAT_VERSION = 1
FAMILIES = {"ridge": RidgeModel, "mlp": MlpModel, "lstm": LstmModel}


def model_to_dict(model) -> dict:
    return {"format_version": FORMAT_VERSION, **model.to_dict()}


def model_from_dict(d: dict):
    family = d.get("family")
    if family not in FAMILIES:
        raise SoftSensorError(f"unknown model family {family!r}")
    return FAMILIES[family].from_dict(d)


def dumps(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, allow_nan=False)


def loads(text: str):
    return model_from_dict(json.loads(text))


def save_model(model, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(dumps(model), encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return loads(text)
