"""Proto-level fusion: cross-attention between query tokens and prototypes."""
from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np

from . import numeric as nm
from .corpus import TAGS
from .numeric import Tensor


def attention(Q: Tensor, P: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Return ``(alpha, token_attn, proto_attn)``.

    ``alpha = Q P^T`` has one row per token and one column per prototype.
    ``token_attn`` normalises each row (a token's weights over prototypes),
    ``proto_attn`` normalises each column (a prototype's weights over tokens).
    Leading batch axes on ``P`` broadcast against ``Q``.
    """
    if Q.shape[-1] != P.shape[-1]:
        raise ValueError(f"feature width mismatch: Q {Q.shape} vs P {P.shape}")
    alpha = Q @ nm.transpose(P)
    return alpha, nm.softmax(alpha, axis=-1), nm.softmax(alpha, axis=-2)


def _gate(x: Tensor, mixed: Tensor, w: Tensor) -> Tensor:
    if x.shape != mixed.shape:
        x = nm.broadcast_to(x, mixed.shape)
    feats = nm.concat([x, mixed, nm.absolute(x - mixed), x * mixed], axis=-1)
    return nm.relu(feats @ w)


def fuse(Q: Tensor, P: Tensor, w: Tensor, w_query: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Fuse query tokens ``Q`` (T x d) with prototypes ``P`` (..., m x d).

    Returns ``(Q_hat, P_hat)`` with the shapes of ``Q`` (batched like ``P``)
    and ``P``.  ``w`` (4d x d) is shared by both sides unless ``w_query`` is
    given.
    """
    d = Q.shape[-1]
    if w.shape != (4 * d, d):
        raise ValueError(f"fusion weight must be {(4 * d, d)}, got {w.shape}")
    if Q.ndim != 2:
        raise ValueError(f"Q must be T x d, got {Q.shape}")
    _, token_attn, proto_attn = attention(Q, P)
    p_mixed = nm.transpose(proto_attn) @ Q
    q_mixed = token_attn @ P
    p_hat = _gate(P, p_mixed, w)
    q_hat = _gate(Q, q_mixed, w if w_query is None else w_query)
    return q_hat, p_hat


def _table(mat: np.ndarray, tokens: Sequence[str], header: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["token", *header])
    for tok, row in zip(tokens, mat):
        writer.writerow([tok, *(f"{v:.6g}" for v in row)])
    return buf.getvalue()


def dump_fusion_matrix(Q: Tensor, P: Tensor, tokens: Sequence[str], tag_names: Sequence[str] = TAGS) -> dict[str, str]:
    """CSV tables of the raw similarities and both attention normalisations.

    Keys: ``alpha``, ``token_attn`` (rows sum to 1), ``proto_attn``
    (columns sum to 1).  One row per token, one column per tag.
    """
    if P.ndim != 2 or len(tokens) != Q.shape[0]:
        raise ValueError("need one token string per row of Q and a single prototype matrix")
    alpha, token_attn, proto_attn = attention(Q, P)
    return {
        "alpha": _table(alpha.data, tokens, tag_names),
        "token_attn": _table(token_attn.data, tokens, tag_names),
        "proto_attn": _table(proto_attn.data, tokens, tag_names),
    }
