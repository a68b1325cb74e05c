"""JSON checkpoints: ``{version, d, vocab_hash, dtype, params: [{name, shape, values}]}``."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .numeric import Tensor

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_checkpoint(params: Mapping[str, Tensor], vocab_hash: str = "") -> str:
    first = next(iter(params.values()))
    doc = {
        "version": FORMAT_VERSION,
        "d": int(params["encoder.tok_emb"].shape[1]) if "encoder.tok_emb" in params else None,
        "vocab_hash": vocab_hash,
        "dtype": str(first.dtype),
        "params": [
            {"name": name, "shape": list(t.shape), "values": [float(v) for v in t.data.reshape(-1)]}
            for name, t in params.items()
        ],
    }
    # repr(float) round-trips exactly; -inf marks the fixed CRF mask
    return json.dumps(doc, separators=(",", ":"))


def save_checkpoint(params: Mapping[str, Tensor], path: str | Path, vocab_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps_checkpoint(params, vocab_hash), encoding="utf-8")
    tmp.replace(path)
    return path


def loads_checkpoint(text: str, expect_vocab_hash: str | None = None) -> tuple[dict[str, Tensor], dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc.msg} at char {exc.pos}") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError("corrupt checkpoint: missing version field")
    if str(doc["version"]) != str(FORMAT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {doc['version']!r} (this code reads {FORMAT_VERSION})")
    if expect_vocab_hash is not None and doc.get("vocab_hash") != expect_vocab_hash:
        raise CheckpointError("vocabulary hash does not match the checkpoint")
    dtype = np.dtype(doc.get("dtype", "float64"))
    params: dict[str, Tensor] = {}
    for entry in doc.get("params", []):
        try:
            name, shape, values = entry["name"], tuple(entry["shape"]), entry["values"]
        except (KeyError, TypeError):
            raise CheckpointError("corrupt checkpoint: malformed parameter entry") from None
        if name in params:
            raise CheckpointError(f"duplicate parameter {name!r}")
        if int(np.prod(shape)) != len(values):
            raise CheckpointError(f"shape corruption in {name!r}: shape {list(shape)} vs {len(values)} values")
        params[name] = Tensor(np.array(values, dtype=dtype).reshape(shape), requires_grad=True, name=name)
    if not params:
        raise CheckpointError("checkpoint holds no parameters")
    meta = {k: v for k, v in doc.items() if k != "params"}
    return params, meta


def load_checkpoint(path: str | Path, expect_vocab_hash: str | None = None) -> tuple[dict[str, Tensor], dict]:
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"), expect_vocab_hash)
