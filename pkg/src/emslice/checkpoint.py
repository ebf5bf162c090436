"""Versioned checkpoint files: parameter arrays, Adam moments, RNG states.

A checkpoint is a plain ``.npz`` archive: every parameter/moment array under
its trainer-assigned name, plus a ``__meta__`` JSON string holding the schema
version, trainer kind, the full experiment config, counters, and the exact
bit-generator states.  Round trips are bit-exact, so training resumed from a
checkpoint continues the metric stream of an uninterrupted run.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractViolation

SCHEMA_VERSION = 1


def save_checkpoint(path: str | Path, config: dict, state: dict) -> None:
    """Write a trainer state_dict() plus its experiment config to ``path``."""
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "trainer": state["meta"],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, __meta__=np.array(json.dumps(meta)), **state["arrays"])


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Read a checkpoint; returns (config, trainer state_dict)."""
    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise ContractViolation(f"{path} is not an emslice checkpoint")
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise ContractViolation(
                f"unsupported checkpoint schema {meta.get('schema_version')}")
        arrays = {name: archive[name] for name in archive.files
                  if name != "__meta__"}
    return meta["config"], {"arrays": arrays, "meta": meta["trainer"]}
