"""Relation decoder: match pooled fused query against each relation's prototypes."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import numeric as nm
from .fusion import fuse
from .numeric import Tensor
from .prototype import PrototypeSet


def pool_global(X: Tensor) -> Tensor:
    """Column-wise max and mean over the row axis, concatenated (width 2d)."""
    if X.ndim < 2 or X.shape[-2] == 0:
        raise ValueError(f"pool_global needs at least one row, got shape {X.shape}")
    return nm.concat([nm.max_pool(X, axis=-2), nm.mean(X, axis=-2)], axis=-1)


def relation_matching_score(q_tilde: Tensor, p_tilde: Tensor, w_r: Tensor, v_r: Tensor) -> Tensor:
    """``v_r^T relu([q; p] w_r)``; leading batch axes are kept."""
    if q_tilde.shape[-1] + p_tilde.shape[-1] != w_r.shape[0] or w_r.shape[1] != v_r.shape[0]:
        raise ValueError(
            f"dimension mismatch: q {q_tilde.shape}, p {p_tilde.shape}, W_r {w_r.shape}, V_r {v_r.shape}"
        )
    x = nm.concat([q_tilde, p_tilde], axis=-1)
    single = x.ndim == 1
    if single:
        x = nm.reshape(x, (1, x.shape[0]))
    score = nm.relu(x @ w_r) @ v_r
    score = nm.reshape(score, score.shape[:-1])
    return nm.reshape(score, ()) if single else score


def classify_relation(
    Q: Tensor,
    prototypes: PrototypeSet,
    fusion_w: Tensor,
    w_r: Tensor,
    v_r: Tensor,
    disable_pfm: bool = False,
    support_reps: Sequence[Sequence[Tensor]] | None = None,
    fusion_w_query: Tensor | None = None,
) -> tuple[int, Tensor, tuple[Tensor, Tensor]]:
    """Score the query against all N relations and pick the best one.

    Returns ``(index, scores, (Q_hat, P_hat))`` where ``Q_hat`` is
    ``(N, T, d)`` and ``P_hat`` is ``(N, 5, d)``; the fused pair is reused by
    the entity decoder.  With ``support_reps`` the relation side is matched
    against fused support sentences instead of prototypes (the ablation
    without entity guidance).
    """
    P = prototypes.matrices
    if disable_pfm:
        n = P.shape[0]
        q_hat, p_hat = nm.broadcast_to(Q, (n,) + Q.shape), P
    else:
        q_hat, p_hat = fuse(Q, P, fusion_w, fusion_w_query)

    if support_reps is not None:
        q_tilde, p_tilde = _support_pooled(Q, support_reps, fusion_w, fusion_w_query, disable_pfm)
    else:
        q_tilde, p_tilde = pool_global(q_hat), pool_global(p_hat)
    scores = relation_matching_score(q_tilde, p_tilde, w_r, v_r)
    return int(np.argmax(scores.data)), scores, (q_hat, p_hat)


def _support_pooled(Q, support_reps, w, w_query, disable_pfm):
    q_rows, p_rows = [], []
    for group in support_reps:
        qs, ps = [], []
        for S in group:
            q_hat, s_hat = (Q, S) if disable_pfm else fuse(Q, S, w, w_query)
            qs.append(pool_global(q_hat))
            ps.append(pool_global(s_hat))
        q_rows.append(nm.mean(nm.stack(qs), axis=0))
        p_rows.append(nm.mean(nm.stack(ps), axis=0))
    return nm.stack(q_rows), nm.stack(p_rows)


def relation_loss(scores: Tensor, gold_index: int) -> Tensor:
    """Cross-entropy of the softmax over the N matching scores."""
    n = scores.shape[0]
    if not 0 <= gold_index < n:
        raise ValueError(f"gold index {gold_index} outside 0..{n - 1}")
    return nm.logsumexp(scores, axis=0) - scores[gold_index]
