import math

import numpy as np
import pytest

from mgfte import harness, model
from mgfte.corpus import (
    AnnotatedSentence,
    CorpusError,
    Episode,
    generate_synthetic_corpus,
    sample_episode,
    write_corpus,
)
from mgfte.encoder import Vocabulary
from mgfte.harness import TrainConfig, episode_loss, evaluate, extract, load_config_file, micro_episode, train
from mgfte.model import Mode, entity_relation, forward_query, init_params, prepare_support
from mgfte.optim import Adam
from mgfte.reldec import relation_loss

SMALL = dict(n_way=3, k_shot=2, q_per_relation=2, d=8, max_len=12, eval_episodes=4)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(4, 8, 120, (7, 10), (1, 2), seed=5)


def cfg(tmp_path, **kw):
    return TrainConfig(**{**SMALL, "out_dir": str(tmp_path), **kw})


class TestEpisodeLoss:
    def test_lambda_zero_is_relation_loss(self):
        ep, params, vocab = micro_episode(seed=2)
        c = TrainConfig(n_way=2, k_shot=1, q_per_relation=1, d=8, max_len=6, lambda_ent=0.0)
        state = prepare_support(params, vocab, ep.support, ep.relations)
        ref = np.mean([relation_loss(forward_query(params, vocab, state, q.tokens).scores, ep.gold_index(q)).item()
                       for q in ep.query])
        assert episode_loss(ep, params, vocab, c).item() == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    def test_uniform_case(self, lam):
        corpus = generate_synthetic_corpus(5, 3, 120, (7, 9), (1, 2), seed=1)
        vocab = Vocabulary.build(corpus.tokens())
        params = init_params(len(vocab), 4, 9, seed=0)
        for name, t in params.items():
            t.data[np.isfinite(t.data)] = 0.0  # equal scores, zero emissions, zero transitions
        ep = sample_episode(corpus, 5, 1, 1, 0)
        c = TrainConfig(n_way=5, k_shot=1, q_per_relation=1, d=4, max_len=9, lambda_ent=lam)
        expected = np.mean([math.log(5) + lam * len(q.tokens) * math.log(5) for q in ep.query])
        assert episode_loss(ep, params, vocab, c).item() == pytest.approx(expected, rel=1e-12)

    def test_fixed_episode_descends(self):
        ep, params, vocab = micro_episode(seed=0)
        c = TrainConfig(n_way=2, k_shot=1, q_per_relation=1, d=8, max_len=6)
        opt = Adam(params, lr=1e-2)
        first = None
        for _ in range(50):
            opt.zero_grad()
            loss = episode_loss(ep, params, vocab, c)
            first = loss.item() if first is None else first
            loss.backward()
            opt.step()
        assert episode_loss(ep, params, vocab, c).item() < first


class TestTrain:
    def test_byte_identical(self, tmp_path, corpus):
        a = train(cfg(tmp_path / "a", episodes=4), corpus)
        b = train(cfg(tmp_path / "b", episodes=4), corpus)
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a" / "train_log.csv").read_text() == (tmp_path / "b" / "train_log.csv").read_text()
        ma = evaluate(a, corpus, cfg(tmp_path / "a")).to_dict()
        mb = evaluate(b, corpus, cfg(tmp_path / "b")).to_dict()
        assert ma == mb

    def test_zero_episodes_is_init(self, tmp_path, corpus):
        c = cfg(tmp_path, episodes=0)
        path = train(c, corpus)
        params, vocab, _ = harness.load_model(path)
        ref = init_params(len(vocab), c.d, c.max_len, c.seed)
        for k in ref:
            assert params[k].data.tobytes() == ref[k].data.tobytes()

    def test_log_per_episode(self, tmp_path, corpus):
        train(cfg(tmp_path, episodes=3), corpus)
        rows = (tmp_path / "train_log.csv").read_text().splitlines()
        assert rows[0] == "episode,loss" and len(rows) == 4

    def test_infeasible_before_any_step(self, tmp_path, corpus):
        with pytest.raises(CorpusError):
            train(cfg(tmp_path, n_way=6, episodes=3), corpus)
        assert not (tmp_path / "checkpoint.json").exists()

    def test_cross_domain_disjoint(self, tmp_path, corpus):
        with pytest.raises(CorpusError, match="disjoint"):
            train(cfg(tmp_path, cross_domain=True, episodes=1), corpus, corpus)

    def test_freeze_embeddings(self, tmp_path, corpus):
        path = train(cfg(tmp_path, episodes=2, freeze_embeddings=True), corpus)
        params, vocab, _ = harness.load_model(path)
        ref = init_params(len(vocab), 8, 12, 0)
        assert params["encoder.tok_emb"].data.tobytes() == ref["encoder.tok_emb"].data.tobytes()
        assert params["fusion.w"].data.tobytes() != ref["fusion.w"].data.tobytes()

    def test_shape_mismatch_rejected(self, tmp_path, corpus):
        path = train(cfg(tmp_path, episodes=0), corpus)
        with pytest.raises(ValueError, match="d=8"):
            evaluate(path, corpus, cfg(tmp_path, d=16))


def test_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("n_way = 3\nlr = 0.01  # faster\ndisable_pfm = yes\ntrain_corpus = x.jsonl\n")
    values = load_config_file(p)
    assert values == {"n_way": 3, "lr": 0.01, "disable_pfm": True, "train_corpus": "x.jsonl"}
    p.write_text("nway = 3\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config_file(p)


def test_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(n_way=0)
    with pytest.raises(ValueError):
        TrainConfig(lambda_ent=-1.0)


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    out = tmp_path_factory.mktemp("ex")
    path = train(TrainConfig(**{**SMALL, "out_dir": str(out), "episodes": 30, "lr": 1e-2}), corpus)
    support = [s for r in corpus.relations[:3] for s in corpus.groups[r][:2]]
    write_corpus(support, out / "support.jsonl")
    return path, out / "support.jsonl"


class TestExtract:

    def test_well_formed(self, trained, corpus):
        path, support = trained
        sent = corpus.groups[corpus.relations[0]][5]
        t = extract(path, support, sent.tokens, TrainConfig(**SMALL))
        assert t.relation in corpus.relations[:3]
        for span in (t.subject, t.object):
            assert span is None or 0 <= span[0] < span[1] <= len(sent.tokens)
        assert set(t.scores) == set(corpus.relations[:3])

    def test_deterministic(self, trained, corpus):
        path, support = trained
        toks = corpus.groups[corpus.relations[1]][6].tokens
        assert extract(path, support, toks).to_dict() == extract(path, support, toks).to_dict()

    def test_one_token(self, trained):
        path, support = trained
        with pytest.raises(ValueError, match="at least 2 tokens"):
            extract(path, support, ["solo"])

    def test_unequal_support(self, trained, tmp_path, corpus):
        path, _ = trained
        bad = [corpus.groups[corpus.relations[0]][0]] + list(corpus.groups[corpus.relations[1]][:2])
        write_corpus(bad, tmp_path / "bad.jsonl")
        with pytest.raises(CorpusError, match="same number"):
            extract(path, tmp_path / "bad.jsonl", ["a", "b"])


class TestModeSplit:
    def test_mode_guards(self):
        assert entity_relation(Mode.TRAIN, 0, 3) == 3
        assert entity_relation(Mode.EVAL, 2) == 2
        with pytest.raises(ValueError):
            entity_relation(Mode.TRAIN, 0)
        with pytest.raises(ValueError):
            entity_relation(Mode.EVAL, 0, 1)

    def test_training_uses_gold(self, monkeypatch):
        ep, params, vocab = micro_episode(seed=1)
        seen = []
        real = model.entity_relation
        monkeypatch.setattr(model, "entity_relation", lambda *a: seen.append(a) or real(*a))
        episode_loss(ep, params, vocab, TrainConfig(n_way=2, k_shot=1, q_per_relation=1, d=8, max_len=6))
        assert [(m, g) for m, _, g in seen] == [(Mode.TRAIN, ep.gold_index(q)) for q in ep.query]

    def test_eval_sees_tokens_only(self, monkeypatch):
        ep, params, vocab = micro_episode(seed=1)
        received = []
        real = harness.predict_query
        monkeypatch.setattr(harness, "predict_query", lambda p, v, s, toks, f: received.append(toks) or real(p, v, s, toks, f))
        harness.predict_episode(params, vocab, ep, model.Flags())
        assert received and all(type(t) is tuple and all(isinstance(x, str) for x in t) for t in received)

    def test_garbage_gold_changes_nothing(self):
        ep, params, vocab = micro_episode(seed=3)
        other = {r: ep.relations[1 - i] for i, r in enumerate(ep.relations)}
        garbled = tuple(
            AnnotatedSentence(q.tokens, other[q.relation], (len(q.tokens) - 1, len(q.tokens)), (0, 1)) for q in ep.query
        )
        ep2 = Episode(ep.n_way, ep.k_shot, ep.support, garbled, ep.relation_index)
        a = harness.predict_episode(params, vocab, ep, model.Flags())
        b = harness.predict_episode(params, vocab, ep2, model.Flags())
        assert [(p.relation, p.subject, p.object) for p in a] == [(p.relation, p.subject, p.object) for p in b]
