# File: skelfit/workbench/settings.py
"""
Run settings document (JSON, or YAML for .yml/.yaml files). Keys mirror the dataclass
fields; nested blocks ``weights``, ``camera_search`` and ``retarget``:

    {"epochs_total": 200, "seed": 3,
     "weights": {"w_mask": 1e4, "symmetry_normal": [1, 0, 0]},
     "camera_search": {"candidates": 128},
     "retarget": {"max_iterations": 300}}

Missing keys keep their defaults, unknown keys are rejected with their path. CASA_SEED,
when set, replaces ``seed`` after loading.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import yaml

from ..config import config
from ..energy import EnergyWeights
from ..guard import skelfit_guard
from ..log import log
from ..optim.config import CameraSearchConfig, FitConfig
from ..reanimate.retarget import RetargetConfig
from ..exception import InvalidInputException, SchemaException, WorkbenchException

_NESTED = {"weights": EnergyWeights, "camera_search": CameraSearchConfig}


@dataclass(frozen=True)
class Settings:
    fit: FitConfig = field(default_factory=FitConfig)
    retarget: RetargetConfig = field(default_factory=RetargetConfig)


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _coerce(value: Any, default: Any, path: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaException(f"expected true/false, got {value!r}", field=path)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaException(f"expected an integer, got {value!r}", field=path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaException(f"expected a number, got {value!r}", field=path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise SchemaException(f"expected a string, got {value!r}", field=path)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise SchemaException(f"expected {len(default)} values", field=path)
        return tuple(_coerce(v, d, f"{path}[{i}]") for i, (v, d) in enumerate(zip(value, default)))
    raise SchemaException("unsupported setting", field=path)


def build_dataclass(cls, doc: Optional[Mapping[str, Any]], prefix: str = "", nested: Mapping[str, type] = None):
    """``cls`` with fields from ``doc``; nested dataclass blocks resolve through ``nested``"""
    doc = doc or {}
    if not isinstance(doc, Mapping):
        raise SchemaException("expected an object", field=prefix.rstrip(".") or "settings")
    known = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in known:
            raise SchemaException("unknown setting", field=path)
        if nested and key in nested:
            values[key] = build_dataclass(nested[key], value, f"{path}.")
        else:
            values[key] = _coerce(value, _default(known[key]), path)
    return cls(**values)


def settings_from_dict(doc: Optional[Mapping[str, Any]]) -> Settings:
    doc = dict(doc or {})
    retarget_doc = doc.pop("retarget", None)
    fit = build_dataclass(FitConfig, doc, nested=_NESTED)
    retarget = build_dataclass(RetargetConfig, retarget_doc, "retarget.")
    seed = config.seed_override()
    if seed is not None:
        log.info("CASA_SEED overrides seed", fit.seed, "->", seed)
        fit = dataclasses.replace(fit, seed=seed)
    return Settings(fit.validate(), retarget.validate())


def _path_context(path, *args, **kwargs):
    return f"while reading settings '{path}'"


@skelfit_guard(WorkbenchException, context_fn=_path_context)
def load_settings(path: Optional[str] = None) -> Settings:
    """Defaults when ``path`` is None"""
    if path is None:
        return settings_from_dict({})
    if not os.path.isfile(path):
        raise InvalidInputException(f"file not found: {path}", field="config")
    with open(path) as f:
        try:
            if os.path.splitext(path)[1].lower() in (".yml", ".yaml"):
                doc = yaml.safe_load(f)
            else:
                doc = json.load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise SchemaException(f"cannot parse settings: {e}", field=os.path.basename(path))
    log.debug("loaded settings", path)
    return settings_from_dict(doc)
