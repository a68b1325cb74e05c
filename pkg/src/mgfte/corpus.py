"""Annotated sentences, BIO tags, JSONL ingestion and episode sampling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TAGS = ("BS", "IS", "BO", "IO", "O")
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
BS, IS, BO, IO, O = range(5)
NUM_TAGS = len(TAGS)

Span = tuple[int, int]


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatedSentence:
    tokens: tuple[str, ...]
    relation: str
    subject_span: Span
    object_span: Span

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "subject_span", tuple(int(v) for v in self.subject_span))
        object.__setattr__(self, "object_span", tuple(int(v) for v in self.object_span))
        n = len(self.tokens)
        if n < 2:
            raise CorpusError(f"sentence needs at least 2 tokens, got {n}")
        for role, (s, e) in (("subject", self.subject_span), ("object", self.object_span)):
            if not 0 <= s < e <= n:
                raise CorpusError(f"span out of range: {role} [{s},{e}) over {n} tokens")
        (s1, e1), (s2, e2) = self.subject_span, self.object_span
        if s1 < e2 and s2 < e1:
            raise CorpusError(f"overlapping spans: subject [{s1},{e1}) and object [{s2},{e2})")

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "relation": self.relation,
            "subject": list(self.subject_span),
            "object": list(self.object_span),
        }


def strip_labels(sentence: AnnotatedSentence | Sequence[str]) -> tuple[str, ...]:
    """Token-only view of a query; all the prediction path ever receives."""
    if isinstance(sentence, AnnotatedSentence):
        return sentence.tokens
    return tuple(sentence)


@dataclass(frozen=True)
class Corpus:
    groups: Mapping[str, tuple[AnnotatedSentence, ...]]
    domain: str = ""

    def __post_init__(self):
        if not self.groups:
            raise CorpusError("empty corpus")
        for rel, group in self.groups.items():
            if not group:
                raise CorpusError(f"relation {rel!r} has no sentences")
            for s in group:
                if s.relation != rel:
                    raise CorpusError(f"sentence labelled {s.relation!r} filed under {rel!r}")

    @classmethod
    def from_sentences(cls, sentences: Iterable[AnnotatedSentence], domain: str = "") -> "Corpus":
        groups: dict[str, list[AnnotatedSentence]] = {}
        for s in sentences:
            groups.setdefault(s.relation, []).append(s)
        return cls({r: tuple(g) for r, g in groups.items()}, domain)

    @property
    def relations(self) -> list[str]:
        return sorted(self.groups)

    def sentences(self) -> list[AnnotatedSentence]:
        return [s for r in self.relations for s in self.groups[r]]

    def tokens(self) -> set[str]:
        return {t for s in self.sentences() for t in s.tokens}

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())


def derive_bio_tags(sentence: AnnotatedSentence) -> list[str]:
    tags = ["O"] * len(sentence.tokens)
    for (start, end), b, i in ((sentence.subject_span, "BS", "IS"), (sentence.object_span, "BO", "IO")):
        tags[start] = b
        for t in range(start + 1, end):
            tags[t] = i
    return tags


def tag_ids(sentence: AnnotatedSentence) -> np.ndarray:
    return np.array([TAG_INDEX[t] for t in derive_bio_tags(sentence)], dtype=np.int64)


# ---------------------------------------------------------------- JSONL

def _sentence_from_record(rec) -> AnnotatedSentence:
    if not isinstance(rec, dict):
        raise CorpusError("expected a JSON object")
    missing = [k for k in ("tokens", "relation", "subject", "object") if k not in rec]
    if missing:
        raise CorpusError(f"missing keys {missing}")
    tokens, subj, obj = rec["tokens"], rec["subject"], rec["object"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusError("tokens must be a list of strings")
    for role, span in (("subject", subj), ("object", obj)):
        if not (isinstance(span, list) and len(span) == 2 and all(isinstance(v, int) for v in span)):
            # nested lists mean several triples in one sentence
            raise CorpusError(f"{role} must be a single [start, end] pair; multi-triple sentences are not supported")
    return AnnotatedSentence(tuple(tokens), str(rec["relation"]), tuple(subj), tuple(obj))


def parse_sentences(lines: Iterable[str]) -> list[AnnotatedSentence]:
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON, line {lineno}: {exc.msg}") from None
        try:
            out.append(_sentence_from_record(rec))
        except CorpusError as exc:
            raise CorpusError(f"{exc}, line {lineno}") from None
    return out


def parse_corpus(path: str | Path, domain: str | None = None) -> Corpus:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        sentences = parse_sentences(fh)
    if not sentences:
        raise CorpusError(f"empty corpus: {path}")
    return Corpus.from_sentences(sentences, domain if domain is not None else path.stem)


def write_corpus(corpus: Corpus | Iterable[AnnotatedSentence], path: str | Path) -> None:
    sentences = corpus.sentences() if isinstance(corpus, Corpus) else list(corpus)
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- episodes

@dataclass(frozen=True)
class Episode:
    n_way: int
    k_shot: int
    support: tuple[tuple[AnnotatedSentence, ...], ...]
    query: tuple[AnnotatedSentence, ...]
    relation_index: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.support) != self.n_way:
            raise CorpusError(f"expected {self.n_way} support groups, got {len(self.support)}")
        for i, group in enumerate(self.support):
            if len(group) != self.k_shot:
                raise CorpusError(f"support group {i} has {len(group)} sentences, expected {self.k_shot}")
            rel = self.relations[i]
            if any(s.relation != rel for s in group):
                raise CorpusError(f"support group {i} mixes relations")
        for q in self.query:
            if q.relation not in self.relation_index:
                raise CorpusError(f"query relation {q.relation!r} not among the episode's relations")

    @property
    def relations(self) -> list[str]:
        return sorted(self.relation_index, key=self.relation_index.__getitem__)

    def gold_index(self, sentence: AnnotatedSentence) -> int:
        return self.relation_index[sentence.relation]


def episode_seed(master_seed: int, index: int, stream: int = 0) -> list[int]:
    """Counter-based seed: episode ``index`` of ``stream`` never depends on the others."""
    return [int(master_seed), int(stream), int(index)]


def sample_episode(
    corpus: Corpus,
    n_way: int,
    k_shot: int,
    q_per_relation: int,
    seed: int | Sequence[int],
) -> Episode:
    if n_way < 1 or k_shot < 1 or q_per_relation < 0:
        raise CorpusError(f"invalid episode shape: n_way={n_way}, k_shot={k_shot}, q={q_per_relation}")
    relations = corpus.relations
    if len(relations) < n_way:
        raise CorpusError(f"corpus has {len(relations)} relations, cannot sample {n_way}-way episodes")
    need = k_shot + q_per_relation
    rng = np.random.default_rng(seed)
    chosen = [relations[i] for i in rng.choice(len(relations), size=n_way, replace=False)]
    support, query = [], []
    for rel in chosen:
        group = corpus.groups[rel]
        if len(group) < need:
            raise CorpusError(f"relation {rel!r} has {len(group)} sentences, need {need} (k_shot + queries)")
        perm = rng.permutation(len(group))
        support.append(tuple(group[j] for j in perm[:k_shot]))
        query.extend(group[j] for j in perm[k_shot:need])
    query = [query[j] for j in rng.permutation(len(query))]
    return Episode(n_way, k_shot, tuple(support), tuple(query), {r: i for i, r in enumerate(chosen)})


def check_sampleable(corpus: Corpus, n_way: int, k_shot: int, q_per_relation: int) -> None:
    """Raise unless every n_way draw from ``corpus`` is satisfiable."""
    need = k_shot + q_per_relation
    ok = [r for r in corpus.relations if len(corpus.groups[r]) >= need]
    if len(corpus.relations) < n_way:
        raise CorpusError(f"corpus has {len(corpus.relations)} relations, cannot sample {n_way}-way episodes")
    if len(ok) < len(corpus.relations):
        short = sorted(set(corpus.relations) - set(ok))
        raise CorpusError(f"relations {short} have fewer than {need} sentences")


def split_corpus(corpus: Corpus, n_heldout: int, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Hold out ``n_heldout`` sentences of every relation (same relations on both sides)."""
    rng = np.random.default_rng(seed)
    train, held = {}, {}
    for rel in corpus.relations:
        group = corpus.groups[rel]
        if len(group) <= n_heldout:
            raise CorpusError(f"relation {rel!r} has only {len(group)} sentences")
        perm = rng.permutation(len(group))
        held[rel] = tuple(group[j] for j in sorted(perm[:n_heldout]))
        train[rel] = tuple(group[j] for j in sorted(perm[n_heldout:]))
    return Corpus(train, corpus.domain + "-train"), Corpus(held, corpus.domain + "-heldout")


# ---------------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SyntheticLayout:
    """Vocabulary partition used by the generator."""

    cues: tuple[tuple[str, ...], ...]
    subj_head: tuple[tuple[str, ...], ...]
    subj_tail: tuple[tuple[str, ...], ...]
    obj_head: tuple[tuple[str, ...], ...]
    obj_tail: tuple[tuple[str, ...], ...]
    distractors: tuple[str, ...]


def synthetic_layout(
    n_relations: int,
    vocab_size: int,
    domain: str = "syn",
    cues_per_relation: int = 3,
    entity_pool: int = 4,
    min_distractors: int = 4,
    word_seed: int | None = None,
    vocab_prefix: str | None = None,
) -> SyntheticLayout:
    block = cues_per_relation + 4 * entity_pool
    n_distract = vocab_size - n_relations * block
    if n_distract < min_distractors:
        raise CorpusError(
            f"infeasible vocabulary partition: {n_relations} relations x {block} reserved tokens "
            f"+ {min_distractors} distractors exceeds vocab_size={vocab_size}"
        )
    prefix = domain if vocab_prefix is None else vocab_prefix
    words = [f"{prefix}.w{i}" for i in range(vocab_size)]
    if word_seed is not None:
        words = [words[j] for j in np.random.default_rng(word_seed).permutation(vocab_size)]

    def take(r, offset, size):
        start = r * block + offset
        return tuple(words[start : start + size])

    e = entity_pool
    c = cues_per_relation
    return SyntheticLayout(
        cues=tuple(take(r, 0, c) for r in range(n_relations)),
        subj_head=tuple(take(r, c, e) for r in range(n_relations)),
        subj_tail=tuple(take(r, c + e, e) for r in range(n_relations)),
        obj_head=tuple(take(r, c + 2 * e, e) for r in range(n_relations)),
        obj_tail=tuple(take(r, c + 3 * e, e) for r in range(n_relations)),
        distractors=tuple(words[n_relations * block :]),
    )


def generate_synthetic_corpus(
    n_relations: int,
    sentences_per_relation: int,
    vocab_size: int,
    length_range: tuple[int, int],
    entity_length_range: tuple[int, int],
    seed: int,
    domain: str = "syn",
    cues_per_sentence: int = 2,
    **layout_kw,
) -> Corpus:
    """Sentences whose relation and entity spans are recoverable from token identity.

    Each relation owns a block of cue words and four entity pools (subject
    head/tail, object head/tail).  Entities start with a head word and
    continue with tail words; the remaining positions hold cue words of the
    relation and words from a shared distractor pool.  Ranges are inclusive.
    """
    if n_relations < 1 or sentences_per_relation < 1:
        raise CorpusError("n_relations and sentences_per_relation must be positive")
    lo, hi = length_range
    elo, ehi = entity_length_range
    if not (1 <= elo <= ehi and lo <= hi):
        raise CorpusError(f"bad ranges: length {length_range}, entity length {entity_length_range}")
    if lo < 2 * ehi + 1:
        raise CorpusError(f"min sentence length {lo} cannot hold two entities of length {ehi} plus context")
    layout = synthetic_layout(n_relations, vocab_size, domain=domain, **layout_kw)
    rng = np.random.default_rng(seed)
    groups = {}
    for r in range(n_relations):
        rel = f"{domain}:R{r}"
        sentences = []
        for _ in range(sentences_per_relation):
            length = int(rng.integers(lo, hi + 1))
            ls, lo_ = (int(v) for v in rng.integers(elo, ehi + 1, size=2))
            subj = [layout.subj_head[r][rng.integers(len(layout.subj_head[r]))]] + [
                layout.subj_tail[r][j] for j in rng.integers(len(layout.subj_tail[r]), size=ls - 1)
            ]
            obj = [layout.obj_head[r][rng.integers(len(layout.obj_head[r]))]] + [
                layout.obj_tail[r][j] for j in rng.integers(len(layout.obj_tail[r]), size=lo_ - 1)
            ]
            n_fill = length - ls - lo_
            n_cue = min(cues_per_sentence, n_fill)
            fill = [layout.cues[r][j] for j in rng.integers(len(layout.cues[r]), size=n_cue)]
            fill += [layout.distractors[j] for j in rng.integers(len(layout.distractors), size=n_fill - n_cue)]
            units: list = [("S", subj), ("O", obj)] + [("-", [w]) for w in fill]
            units = [units[j] for j in rng.permutation(len(units))]
            tokens, spans = [], {}
            for kind, words in units:
                if kind != "-":
                    spans[kind] = (len(tokens), len(tokens) + len(words))
                tokens.extend(words)
            sentences.append(AnnotatedSentence(tuple(tokens), rel, spans["S"], spans["O"]))
        groups[rel] = tuple(sentences)
    return Corpus(groups, domain)
