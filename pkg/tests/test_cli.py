import json

import pytest

from mgfte.cli import main
from mgfte.corpus import parse_corpus, write_corpus


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workdir(tmp_path, capsys):
    corpus = tmp_path / "c.jsonl"
    code, _, _ = run(capsys, "synth", "--relations", 3, "--per-relation", 6, "--vocab-size", 100,
                     "--min-len", 7, "--max-len", 9, "--max-entity", 2, "--seed", 4, "-o", corpus)
    assert code == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"n_way = 3\nk_shot = 2\nq_per_relation = 1\nd = 8\nmax_len = 10\n"
                   f"eval_episodes = 2\ntrain_corpus = {corpus}\nout_dir = {tmp_path / 'run'}\n")
    return tmp_path, corpus, cfg


def test_synth_stdout(capsys):
    code, out, _ = run(capsys, "synth", "--relations", 2, "--per-relation", 3, "--vocab-size", 60,
                       "--min-len", 6, "--max-len", 7, "--max-entity", 2)
    assert code == 0
    rows = [json.loads(line) for line in out.splitlines()]
    assert len(rows) == 6 and {r["relation"] for r in rows} == {"syn:R0", "syn:R1"}


def test_train_eval_extract_dump(capsys, workdir):
    tmp, corpus, cfg = workdir
    code, out, _ = run(capsys, "train", "--config", cfg, "--episodes", 2)
    assert code == 0
    ckpt = json.loads(out)["checkpoint"]

    code, out, _ = run(capsys, "eval", "--config", cfg, "--checkpoint", ckpt, "--eval-corpus", corpus,
                       "--episode-log", tmp / "ep.csv")
    assert code == 0
    metrics = json.loads(out)
    assert metrics["n_episodes"] == 2 and set(metrics) >= {"entity", "relation", "triple"}
    assert len((tmp / "ep.csv").read_text().splitlines()) == 3

    c = parse_corpus(corpus)
    write_corpus([s for r in c.relations for s in c.groups[r][:2]], tmp / "sup.jsonl")
    query = c.groups[c.relations[0]][4].tokens
    code, out, _ = run(capsys, "extract", "--config", cfg, "--checkpoint", ckpt, "--support", tmp / "sup.jsonl",
                       "--tokens", *query)
    assert code == 0 and json.loads(out)["relation"] in c.relations

    code, out, _ = run(capsys, "dump-fusion", "--config", cfg, "--checkpoint", ckpt, "--support", tmp / "sup.jsonl",
                       "--sentence", " ".join(query), "--relation", c.relations[2], "--csv-dir", tmp / "fz")
    assert code == 0 and json.loads(out)["relation"] == c.relations[2]
    lines = (tmp / "fz" / "token_attn.csv").read_text().splitlines()
    assert lines[0] == "token,BS,IS,BO,IO,O" and len(lines) == len(query) + 1


def test_flags_override_config(capsys, workdir):
    tmp, corpus, cfg = workdir
    code, _, err = run(capsys, "train", "--config", cfg, "--episodes", 1, "--n-way", 9)
    assert code != 0
    assert "9-way" in json.loads(err)["message"]


def test_gradcheck(capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", 1)
    report = json.loads(out)
    assert code == 0 and report["passed"] and report["max_rel_error"] < 1e-4


@pytest.mark.parametrize("argv", [["frobnicate"], ["train", "--n-way", "x"], ["eval"]])
def test_usage_errors_one_line(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert len(err.strip().splitlines()) == 1 and json.loads(err)["error"] == "usage"


def test_runtime_error_one_line(capsys, workdir, tmp_path):
    _, corpus, _ = workdir
    code, _, err = run(capsys, "eval", "--checkpoint", tmp_path / "missing.json", "--eval-corpus", corpus,
                       "--n-way", 3, "--k-shot", 1)
    assert code == 1
    assert len(err.strip().splitlines()) == 1 and json.loads(err)["error"]
