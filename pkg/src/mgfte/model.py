"""Parameters and forward passes tying the encoder, fusion and both decoders together."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numeric as nm
from .corpus import AnnotatedSentence, Span, tag_ids
from .encoder import Vocabulary, encode, init_encoder_params
from .entdec import combined_reps, crf_nll, emission_scores, init_transitions, tags_to_spans, viterbi
from .numeric import Tensor
from .prototype import PrototypeSet, compute_entity_prototypes
from .reldec import classify_relation, relation_loss

ModelParams = dict  # name -> Tensor, insertion-ordered


class Mode(enum.Enum):
    TRAIN = "train"  # entity decoder conditioned on the gold relation
    EVAL = "eval"  # entity decoder conditioned on the predicted relation


@dataclass(frozen=True)
class Flags:
    disable_pfm: bool = False
    disable_rge: bool = False
    disable_egr: bool = False
    literal_k: bool = False


def init_params(
    vocab_size: int,
    d: int,
    max_len: int,
    seed: int,
    dtype=np.float64,
    unshare_fusion: bool = False,
    strict_bio: bool = False,
) -> ModelParams:
    rng = np.random.default_rng(seed)
    params = {f"encoder.{k}": v for k, v in init_encoder_params(vocab_size, d, max_len, rng, dtype).items()}
    bound = 1.0 / np.sqrt(d)

    def weight(name, shape):
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True, name=name)

    params["fusion.w"] = weight("fusion.w", (4 * d, d))
    if unshare_fusion:
        params["fusion.w_query"] = weight("fusion.w_query", (4 * d, d))
    params["reldec.w_r"] = weight("reldec.w_r", (4 * d, d))
    params["reldec.v_r"] = weight("reldec.v_r", (d, 1))
    params["crf.transitions"] = init_transitions(dtype, strict_bio)
    return params


def encoder_view(params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    return {k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("encoder.")}


def entity_relation(mode: Mode, predicted: int, gold: int | None = None) -> int:
    """Relation whose prototypes condition entity extraction."""
    if mode is Mode.TRAIN:
        if gold is None:
            raise ValueError("training mode needs the gold relation")
        return gold
    if gold is not None:
        raise ValueError("evaluation mode must not see the gold relation")
    return predicted


@dataclass
class SupportState:
    prototypes: PrototypeSet
    support_reps: list[list[Tensor]]
    relations: list[str]


@dataclass
class QueryForward:
    Q: Tensor
    predicted: int
    scores: Tensor
    q_hat: Tensor  # (N, T, d)
    p_hat: Tensor  # (N, 5, d)


@dataclass
class Prediction:
    relation_index: int
    relation: str
    subject: Span | None
    object: Span | None
    tags: list[int]
    scores: np.ndarray

    @property
    def complete(self) -> bool:
        return self.subject is not None and self.object is not None


def prepare_support(
    params: Mapping[str, Tensor],
    vocab: Vocabulary,
    support: Sequence[Sequence[AnnotatedSentence]],
    relations: Sequence[str],
    flags: Flags = Flags(),
) -> SupportState:
    enc = encoder_view(params)
    reps = [[encode(s.tokens, enc, vocab) for s in group] for group in support]
    protos = compute_entity_prototypes(support, None, literal_k=flags.literal_k, encoded=reps)
    return SupportState(protos, reps, list(relations))


def forward_query(params, vocab, state: SupportState, tokens: Sequence[str], flags: Flags = Flags()) -> QueryForward:
    Q = encode(tokens, encoder_view(params), vocab)
    idx, scores, (q_hat, p_hat) = classify_relation(
        Q,
        state.prototypes,
        params["fusion.w"],
        params["reldec.w_r"],
        params["reldec.v_r"],
        disable_pfm=flags.disable_pfm,
        support_reps=state.support_reps if flags.disable_egr else None,
        fusion_w_query=params.get("fusion.w_query"),
    )
    return QueryForward(Q, idx, scores, q_hat, p_hat)


def emissions_for(fwd: QueryForward, state: SupportState, relation: int) -> Tensor:
    q_bar, p_bar = combined_reps(fwd.Q, fwd.q_hat[relation], state.prototypes[relation], fwd.p_hat[relation])
    return emission_scores(q_bar, p_bar)


def query_loss(
    params,
    vocab,
    state: SupportState,
    sentence: AnnotatedSentence,
    gold_index: int,
    lambda_ent: float = 1.0,
    flags: Flags = Flags(),
) -> Tensor:
    """Relation cross-entropy plus weighted CRF loss under the gold relation."""
    fwd = forward_query(params, vocab, state, sentence.tokens, flags)
    loss = relation_loss(fwd.scores, gold_index)
    if lambda_ent:
        rel = entity_relation(Mode.TRAIN, fwd.predicted, gold_index)
        em = emissions_for(fwd, state, rel)
        loss = loss + crf_nll(em, params["crf.transitions"], tag_ids(sentence)) * lambda_ent
    return loss


def predict_query(params, vocab, state: SupportState, tokens: tuple[str, ...], flags: Flags = Flags()) -> Prediction:
    """Predict a triple from the query tokens alone."""
    if len(tokens) < 2:
        raise ValueError(f"sentence needs at least 2 tokens, got {len(tokens)}")
    fwd = forward_query(params, vocab, state, tokens, flags)
    trans = params["crf.transitions"]
    if flags.disable_rge:
        best = None
        for i in range(state.prototypes.n_way):
            path, score = viterbi(emissions_for(fwd, state, i), trans)
            if best is None or score > best[1]:
                best = (path, score)
        path = best[0]
    else:
        rel = entity_relation(Mode.EVAL, fwd.predicted)
        path, _ = viterbi(emissions_for(fwd, state, rel), trans)
    subj, obj = tags_to_spans(path)
    return Prediction(fwd.predicted, state.relations[fwd.predicted], subj, obj, path, fwd.scores.data.copy())


def set_requires_grad(params: Mapping[str, Tensor], flag: bool) -> None:
    for t in params.values():
        t.requires_grad = flag
        t.grad = None
