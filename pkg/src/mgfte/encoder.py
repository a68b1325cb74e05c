"""Token encoder: embeddings + positions + one residual self-attention layer.

Stands in for a pretrained transformer.  Anything mapping a token list to a
``T x d`` differentiable Tensor can replace :func:`encode`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import numeric as nm
from .numeric import Tensor

PAD, UNK = "<pad>", "<unk>"
ENCODER_KEYS = ("tok_emb", "pos_emb", "wq", "wk", "wv", "wo")


@dataclass(frozen=True)
class Vocabulary:
    itos: tuple[str, ...]

    def __post_init__(self):
        if self.itos[:2] != (PAD, UNK):
            raise ValueError("vocabulary must start with the reserved <pad>, <unk> entries")
        if len(set(self.itos)) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_stoi", {t: i for i, t in enumerate(self.itos)})

    @classmethod
    def build(cls, tokens: Iterable[str]) -> "Vocabulary":
        return cls((PAD, UNK) + tuple(sorted(set(tokens) - {PAD, UNK})))

    def __len__(self) -> int:
        return len(self.itos)

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        unk = 1
        return np.array([self._stoi.get(t, unk) for t in tokens], dtype=np.int64)

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(list(self.itos)).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(list(self.itos), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(tuple(json.loads(Path(path).read_text(encoding="utf-8"))))


def init_encoder_params(
    vocab_size: int, d: int, max_len: int, rng: np.random.Generator, dtype=np.float64
) -> dict[str, Tensor]:
    if d <= 0 or max_len <= 0:
        raise ValueError("d and max_len must be positive")
    bound = 1.0 / np.sqrt(d)
    shapes = {
        "tok_emb": (vocab_size, d),
        "pos_emb": (max_len, d),
        "wq": (d, d),
        "wk": (d, d),
        "wv": (d, d),
        "wo": (d, d),
    }
    return {
        k: Tensor(rng.uniform(-bound, bound, size=s).astype(dtype), requires_grad=True, name=f"encoder.{k}")
        for k, s in shapes.items()
    }


def encode(tokens: Sequence[str], params: Mapping[str, Tensor], vocab: Vocabulary) -> Tensor:
    """Return the ``T x d`` contextual representation of ``tokens``."""
    T = len(tokens)
    max_len = params["pos_emb"].shape[0]
    if T < 1:
        raise ValueError("cannot encode an empty sentence")
    if T > max_len:
        raise ValueError(f"sentence of {T} tokens exceeds max_len={max_len}")
    d = params["tok_emb"].shape[1]
    x = nm.getitem(params["tok_emb"], vocab.ids(tokens)) + params["pos_emb"][:T]
    q = x @ params["wq"]
    k = x @ params["wk"]
    v = x @ params["wv"]
    attn = nm.softmax((q @ k.T) * (1.0 / np.sqrt(d)), axis=-1)
    return x + (attn @ v) @ params["wo"]
