"""Entity decoder: distance emissions, linear-chain CRF, Viterbi, span recovery.

Transitions live in a 7 x 7 table over the five tags plus START (row 5)
and STOP (column 6).  Entries into START and out of STOP are -inf and are
never read, so they receive no gradient.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import numeric as nm
from .corpus import BO, BS, IO, IS, NUM_TAGS, TAG_INDEX, TAGS, Span
from .numeric import Tensor

START, STOP = NUM_TAGS, NUM_TAGS + 1
N_STATES = NUM_TAGS + 2


def init_transitions(dtype=np.float64, strict_bio: bool = False) -> Tensor:
    """Zero-initialised transition table.

    ``strict_bio`` additionally masks every move into IS/IO that does not
    continue a span of the same role, so decoding can only emit valid BIO.
    """
    table = np.zeros((N_STATES, N_STATES), dtype=dtype)
    table[:, START] = -np.inf
    table[STOP, :] = -np.inf
    table[START, STOP] = -np.inf  # empty sentences do not exist
    if strict_bio:
        for inside, begin in ((IS, BS), (IO, BO)):
            allowed = (begin, inside)
            for prev in range(NUM_TAGS + 1):  # the five tags and START
                if prev not in allowed:
                    table[prev, inside] = -np.inf
    return Tensor(table, requires_grad=True, name="crf.transitions")


def _parts(trans):
    data = trans.data if isinstance(trans, Tensor) else np.asarray(trans)
    return data[START, :NUM_TAGS], data[:NUM_TAGS, :NUM_TAGS], data[:NUM_TAGS, STOP]


def combined_reps(Q: Tensor, Q_hat: Tensor, P: Tensor, P_hat: Tensor) -> tuple[Tensor, Tensor]:
    """Original and fused features side by side: ``[Q; Q_hat]``, ``[P; P_hat]``."""
    if Q.shape != Q_hat.shape or P.shape != P_hat.shape:
        raise ValueError(f"shape mismatch: Q {Q.shape} / Q_hat {Q_hat.shape}, P {P.shape} / P_hat {P_hat.shape}")
    return nm.concat([Q, Q_hat], axis=-1), nm.concat([P, P_hat], axis=-1)


def emission_scores(Q_bar: Tensor, P_bar: Tensor) -> Tensor:
    """``(T, 5)`` matrix of negative squared distances token -> prototype."""
    return -nm.pairwise_sq_euclidean(Q_bar, P_bar)


def crf_log_partition(emissions: Tensor, trans: Tensor) -> Tensor:
    """Forward algorithm in the log domain."""
    emissions = nm.as_tensor(emissions)
    T = emissions.shape[0]
    if T < 1:
        raise ValueError("CRF needs at least one position")
    start = trans[START, :NUM_TAGS]
    pair = trans[:NUM_TAGS, :NUM_TAGS]
    stop = trans[:NUM_TAGS, STOP]
    alpha = start + emissions[0]
    for t in range(1, T):
        alpha = nm.logsumexp(nm.reshape(alpha, (NUM_TAGS, 1)) + pair, axis=0) + emissions[t]
    return nm.logsumexp(alpha + stop, axis=0)


def sequence_score(emissions: Tensor, trans: Tensor, tags: Sequence[int]) -> Tensor:
    emissions = nm.as_tensor(emissions)
    tags = np.asarray(tags, dtype=np.int64)
    T = len(tags)
    score = nm.reduce_sum(emissions[np.arange(T), tags])
    score = score + trans[START, int(tags[0])] + trans[int(tags[-1]), STOP]
    if T > 1:
        score = score + nm.reduce_sum(trans[tags[:-1], tags[1:]])
    return score


def _as_ids(tags) -> list[int]:
    return [TAG_INDEX[t] if isinstance(t, str) else int(t) for t in tags]


def crf_nll(emissions: Tensor, trans: Tensor, gold_tags) -> Tensor:
    """Negative log-likelihood of ``gold_tags`` (names or ids)."""
    gold = _as_ids(gold_tags)
    if len(gold) != emissions.shape[0]:
        raise ValueError(f"gold has {len(gold)} tags for {emissions.shape[0]} positions")
    return crf_log_partition(emissions, trans) - sequence_score(emissions, trans, gold)


def viterbi(emissions, trans) -> tuple[list[int], float]:
    """Best tag-id path and its score.

    Ties resolve to the lexicographically smallest path in tag order: a
    backward max-suffix pass, then a greedy forward pass that keeps the
    lowest tag index still reaching the optimum.
    """
    em = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions, dtype=float)
    start, pair, stop = _parts(trans)
    T = em.shape[0]
    if T < 1:
        raise ValueError("CRF needs at least one position")
    # suffix[t, y]: best score of positions t+1.. given tag y at t (incl. STOP)
    suffix = np.empty((T, NUM_TAGS))
    suffix[T - 1] = stop
    for t in range(T - 2, -1, -1):
        suffix[t] = np.max(pair + (em[t + 1] + suffix[t + 1])[None, :], axis=1)
    first = start + em[0] + suffix[0]
    best = first.max()
    path = [int(np.flatnonzero(first == best)[0])]
    for t in range(1, T):
        cand = pair[path[-1]] + em[t] + suffix[t]
        path.append(int(np.flatnonzero(cand == cand.max())[0]))
    return path, float(best)


def viterbi_decode(emissions, trans) -> list[str]:
    path, _ = viterbi(emissions, trans)
    return [TAGS[i] for i in path]


def tags_to_spans(tags) -> tuple[Span | None, Span | None]:
    """First subject and first object span, reading tags leniently.

    An inside tag that does not continue a same-role run opens a new span
    as though it were the matching begin tag.
    """
    ids = _as_ids(tags)
    found: dict[int, Span] = {}
    for begin, inside in ((BS, IS), (BO, IO)):
        start = None
        for t, tag in enumerate(ids + [-1]):
            continues = tag == inside and start is not None
            if start is not None and not continues:
                found.setdefault(begin, (start, t))
                start = None
            if tag == begin or (tag == inside and start is None):
                start = t
            if begin in found:
                break
    return found.get(BS), found.get(BO)
