"""JSON checkpoint format for ModelParameters.

Layout: a config header followed by the parameter blocks in declaration
order, each tagged with its layer kind and array shapes.  Floats are written
with ``repr`` precision, so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .layers import LAYER_TYPES, DenseLayer
from .model import ModelParameters, NetworkConfig

FORMAT = "amopt.model"
VERSION = 1


def _block_dict(block) -> dict:
    out = {"kind": block.kind, "arrays": {}}
    if isinstance(block, DenseLayer):
        out["activation"] = block.activation
    for name, arr in block.items():
        out["arrays"][name] = {"shape": list(arr.shape), "data": arr.ravel().tolist()}
    return out


def _block_from(d: dict):
    cls = LAYER_TYPES.get(d.get("kind"))
    if cls is None:
        raise DataError(f"unknown layer kind {d.get('kind')!r}")
    kw = {name: np.array(a["data"], dtype=np.float64).reshape(a["shape"]) for name, a in d["arrays"].items()}
    if cls is DenseLayer:
        kw["activation"] = d.get("activation", "identity")
    return cls(**kw)


def model_to_dict(model: ModelParameters) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "blocks": [_block_dict(b) for b in model.blocks],
    }


def model_from_dict(d: dict) -> ModelParameters:
    if d.get("format") != FORMAT or d.get("version") != VERSION:
        raise DataError(f"not an {FORMAT} v{VERSION} checkpoint")
    blocks = [_block_from(b) for b in d["blocks"]]
    return ModelParameters(NetworkConfig(**d["config"]), blocks[:-1], blocks[-1])


def save_model(model: ModelParameters, path, extra: dict | None = None) -> None:
    d = model_to_dict(model)
    if extra:
        d["meta"] = extra
    Path(path).write_text(json.dumps(d))


def load_model(path) -> ModelParameters:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    return model_from_dict(d)


def load_meta(path) -> dict:
    return json.loads(Path(path).read_text()).get("meta", {})
