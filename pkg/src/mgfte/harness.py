"""Episodic training, micro-F1 evaluation and single-sentence extraction."""
from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import numeric as nm
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    AnnotatedSentence,
    Corpus,
    CorpusError,
    Episode,
    check_sampleable,
    episode_seed,
    parse_corpus,
    parse_sentences,
    sample_episode,
    strip_labels,
)
from .encoder import Vocabulary
from .metrics import Metrics
from .model import Flags, Prediction, init_params, predict_query, prepare_support, query_loss
from .numeric import Tensor
from .optim import Adam

log = logging.getLogger(__name__)

TRAIN_STREAM, EVAL_STREAM = 0, 1
PRECISIONS = {"float64": np.float64, "float32": np.float32}


@dataclass
class TrainConfig:
    n_way: int = 5
    k_shot: int = 5
    q_per_relation: int = 2
    episodes: int = 1000
    eval_episodes: int = 1000
    lr: float = 1e-3
    lambda_ent: float = 1.0
    seed: int = 0
    precision: str = "float64"
    d: int = 64
    max_len: int = 64
    disable_pfm: bool = False
    disable_rge: bool = False
    disable_egr: bool = False
    literal_k: bool = False
    unshare_fusion: bool = False
    cross_domain: bool = False
    freeze_embeddings: bool = False
    strict_bio: bool = False
    train_corpus: str | None = None
    eval_corpus: str | None = None
    vocab_path: str | None = None
    out_dir: str = "runs/default"

    def __post_init__(self):
        for name in ("n_way", "k_shot", "q_per_relation", "d", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.episodes < 0 or self.eval_episodes < 0:
            raise ValueError("episode counts must be nonnegative")
        if self.lambda_ent < 0:
            raise ValueError("lambda_ent must be >= 0")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")

    @property
    def flags(self) -> Flags:
        return Flags(self.disable_pfm, self.disable_rge, self.disable_egr, self.literal_k)

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _coerce(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip() or None


def config_field_types() -> dict[str, str]:
    out = {}
    for f in dataclasses.fields(TrainConfig):
        t = f.type if isinstance(f.type, str) else f.type.__name__
        out[f.name] = t.split(" ")[0]
    return out


def load_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines (``#`` comments allowed) into TrainConfig kwargs."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[config]\n" + text)
    types = config_field_types()
    out = {}
    for key, raw in parser["config"].items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r} in {path}")
        out[key] = _coerce(types[key], raw)
    return out


# ---------------------------------------------------------------- losses

def episode_loss(episode: Episode, params: Mapping[str, Tensor], vocab: Vocabulary, config: TrainConfig) -> Tensor:
    """Mean over queries of relation loss + lambda_ent * CRF loss (gold relation)."""
    if not episode.query:
        raise ValueError("episode has no query sentences")
    flags = config.flags
    state = prepare_support(params, vocab, episode.support, episode.relations, flags)
    total = None
    for q in episode.query:
        loss = query_loss(params, vocab, state, q, episode.gold_index(q), config.lambda_ent, flags)
        total = loss if total is None else total + loss
    return total * (1.0 / len(episode.query))


# ---------------------------------------------------------------- training

def build_vocab(config: TrainConfig, corpora: Sequence[Corpus]) -> Vocabulary:
    if config.vocab_path and Path(config.vocab_path).exists():
        return Vocabulary.load(config.vocab_path)
    tokens: set[str] = set()
    for c in corpora:
        tokens |= c.tokens()
    return Vocabulary.build(tokens)


def _check_disjoint(train: Corpus, evaluation: Corpus) -> None:
    shared = set(train.relations) & set(evaluation.relations)
    if shared:
        raise CorpusError(f"cross-domain mode needs disjoint relation inventories; shared: {sorted(shared)}")


def _load_corpora(config: TrainConfig) -> tuple[Corpus, Corpus | None]:
    if not config.train_corpus:
        raise ValueError("train_corpus is not configured")
    train_c = parse_corpus(config.train_corpus)
    eval_c = parse_corpus(config.eval_corpus) if config.eval_corpus else None
    if config.cross_domain:
        if eval_c is None:
            raise ValueError("cross_domain needs eval_corpus")
        _check_disjoint(train_c, eval_c)
    return train_c, eval_c


def run_dir(config: TrainConfig) -> Path:
    return Path(config.out_dir)


def vocab_file(config: TrainConfig) -> Path:
    return Path(config.vocab_path) if config.vocab_path else run_dir(config) / "vocab.json"


def train(config: TrainConfig, train_corpus: Corpus | None = None, eval_corpus: Corpus | None = None) -> Path:
    """Run ``config.episodes`` Adam steps, one per sampled episode; return the checkpoint path.

    Corpora default to the configured paths.  The vocabulary covers the
    train corpus and, when given, the eval corpus (token strings only).
    """
    if train_corpus is None:
        train_corpus, loaded_eval = _load_corpora(config)
        eval_corpus = eval_corpus or loaded_eval
    elif config.cross_domain and eval_corpus is not None:
        _check_disjoint(train_corpus, eval_corpus)
    check_sampleable(train_corpus, config.n_way, config.k_shot, config.q_per_relation)

    vocab = build_vocab(config, [c for c in (train_corpus, eval_corpus) if c is not None])
    longest = max(len(s.tokens) for c in (train_corpus, eval_corpus) if c is not None for s in c.sentences())
    if longest > config.max_len:
        raise CorpusError(f"sentence of {longest} tokens exceeds max_len={config.max_len}")

    params = init_params(
        len(vocab), config.d, config.max_len, config.seed, config.dtype, config.unshare_fusion, config.strict_bio
    )
    # Frozen token embeddings keep seen and unseen words on the same random
    # init distribution, which matters when eval tokens never get trained.
    trainable = {k: v for k, v in params.items() if not (config.freeze_embeddings and k == "encoder.tok_emb")}
    opt = Adam(trainable, lr=config.lr)
    out = run_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(vocab_file(config))

    with (out / "train_log.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "loss"])
        for i in range(config.episodes):
            ep = sample_episode(
                train_corpus, config.n_way, config.k_shot, config.q_per_relation,
                episode_seed(config.seed, i, TRAIN_STREAM),
            )
            for p in params.values():
                p.grad = None
            loss = episode_loss(ep, params, vocab, config)
            loss.backward()
            opt.step()
            writer.writerow([i, repr(loss.item())])
            if i % 50 == 0:
                log.info("episode %d loss %.4f", i, loss.item())
    return save_checkpoint(params, out / "checkpoint.json", vocab.digest)


# ---------------------------------------------------------------- evaluation

def load_model(checkpoint: str | Path, vocab_path: str | Path | None = None):
    checkpoint = Path(checkpoint)
    vpath = Path(vocab_path) if vocab_path else checkpoint.parent / "vocab.json"
    vocab = Vocabulary.load(vpath)
    params, meta = load_checkpoint(checkpoint, expect_vocab_hash=vocab.digest)
    for t in params.values():
        t.requires_grad = False
    return params, vocab, meta


def _check_shapes(params, config: TrainConfig) -> None:
    d = params["encoder.tok_emb"].shape[1]
    if d != config.d:
        raise ValueError(f"checkpoint has d={d}, config says d={config.d}")


def predict_episode(params, vocab, episode: Episode, flags: Flags) -> list[Prediction]:
    """Predictions for every query of ``episode``; queries are stripped to tokens first."""
    state = prepare_support(params, vocab, episode.support, episode.relations, flags)
    return [predict_query(params, vocab, state, strip_labels(q), flags) for q in episode.query]


def evaluate_episodes(params, vocab, episodes: Sequence[Episode], flags: Flags) -> Metrics:
    metrics = Metrics()
    for ep in episodes:
        m = Metrics()
        for pred, gold in zip(predict_episode(params, vocab, ep, flags), ep.query):
            m.score(pred.relation, pred.subject, pred.object, gold.relation, gold.subject_span, gold.object_span)
        m.episode_triple_f1.append(m.triple.f1)
        metrics.merge(m)
    return metrics


def evaluate(
    checkpoint: str | Path,
    eval_corpus: Corpus | str | Path,
    config: TrainConfig,
    episode_log: str | Path | None = None,
) -> Metrics:
    """Micro-F1 over ``config.eval_episodes`` seeded episodes of ``eval_corpus``."""
    if not isinstance(eval_corpus, Corpus):
        eval_corpus = parse_corpus(eval_corpus)
    if config.cross_domain and config.train_corpus:
        _check_disjoint(parse_corpus(config.train_corpus), eval_corpus)
    check_sampleable(eval_corpus, config.n_way, config.k_shot, config.q_per_relation)
    params, vocab, _ = load_model(checkpoint, config.vocab_path)
    _check_shapes(params, config)
    flags = config.flags
    metrics = Metrics()
    rows = []
    for i in range(config.eval_episodes):
        ep = sample_episode(
            eval_corpus, config.n_way, config.k_shot, config.q_per_relation,
            episode_seed(config.seed, i, EVAL_STREAM),
        )
        m = evaluate_episodes(params, vocab, [ep], flags)
        rows.append([i, m.relation.f1, m.entity.f1, m.triple.f1])
        metrics.merge(m)
    if episode_log:
        with Path(episode_log).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["episode", "relation_f1", "entity_f1", "triple_f1"])
            writer.writerows(rows)
    return metrics


# ---------------------------------------------------------------- extraction

@dataclass
class ExtractedTriple:
    relation: str
    subject: tuple[int, int] | None
    object: tuple[int, int] | None
    scores: dict[str, float] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.subject is not None and self.object is not None

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "subject": list(self.subject) if self.subject else None,
            "object": list(self.object) if self.object else None,
            "complete": self.complete,
            "scores": self.scores,
        }


def support_groups(sentences: Sequence[AnnotatedSentence]) -> tuple[list[str], list[tuple[AnnotatedSentence, ...]]]:
    if not sentences:
        raise CorpusError("empty support set")
    corpus = Corpus.from_sentences(sentences)
    rels = corpus.relations
    sizes = {len(corpus.groups[r]) for r in rels}
    if len(sizes) != 1:
        raise CorpusError(f"support must hold the same number of sentences per relation, got sizes {sorted(sizes)}")
    return rels, [corpus.groups[r] for r in rels]


def extract(
    checkpoint: str | Path,
    support: str | Path | Sequence[AnnotatedSentence],
    tokens: Sequence[str],
    config: TrainConfig | None = None,
) -> ExtractedTriple:
    config = config or TrainConfig()
    if len(tokens) < 2:
        raise ValueError(f"sentence needs at least 2 tokens, got {len(tokens)}")
    if isinstance(support, (str, Path)):
        with Path(support).open(encoding="utf-8") as fh:
            support = parse_sentences(fh)
    rels, groups = support_groups(list(support))
    params, vocab, _ = load_model(checkpoint, config.vocab_path)
    state = prepare_support(params, vocab, groups, rels, config.flags)
    pred = predict_query(params, vocab, state, tuple(tokens), config.flags)
    return ExtractedTriple(pred.relation, pred.subject, pred.object,
                           {r: float(s) for r, s in zip(rels, pred.scores)})


def micro_episode(seed: int = 0, d: int = 8) -> tuple[Episode, dict[str, Tensor], Vocabulary]:
    """Seeded 2-way 1-shot episode with short sentences and 64-bit params (gradient checks)."""
    from .corpus import generate_synthetic_corpus

    corpus = generate_synthetic_corpus(2, 3, 60, (5, 6), (1, 2), seed=seed, domain="micro")
    ep = sample_episode(corpus, 2, 1, 1, episode_seed(seed, 0))
    vocab = Vocabulary.build(corpus.tokens())
    params = init_params(len(vocab), d, 6, seed, np.float64)
    rng = np.random.default_rng(seed + 1)
    # nonzero transitions so every CRF table entry is exercised
    trans = params["crf.transitions"].data
    finite = np.isfinite(trans)
    trans[finite] = rng.normal(scale=0.5, size=finite.sum())
    return ep, params, vocab


def run_gradcheck(seed: int = 0, d: int = 8, flags: Flags = Flags(), lambda_ent: float = 1.0) -> nm.GradCheckReport:
    ep, params, vocab = micro_episode(seed, d)
    cfg = TrainConfig(n_way=2, k_shot=1, q_per_relation=1, d=d, max_len=6, lambda_ent=lambda_ent,
                      disable_pfm=flags.disable_pfm, disable_rge=flags.disable_rge,
                      disable_egr=flags.disable_egr, literal_k=flags.literal_k)
    return nm.grad_check(lambda p: episode_loss(ep, p, vocab, cfg), params)
