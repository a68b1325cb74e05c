"""Micro precision / recall / F1 over entity spans, relations and triples."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __iadd__(self, other: "Counts") -> "Counts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class Metrics:
    entity: Counts = field(default_factory=Counts)
    relation: Counts = field(default_factory=Counts)
    triple: Counts = field(default_factory=Counts)
    n_queries: int = 0
    episode_triple_f1: list[float] = field(default_factory=list)

    def score(self, pred_relation, pred_subject, pred_object, gold_relation, gold_subject, gold_object) -> None:
        """Add one query.  Missing predicted spans are ``None``."""
        self.n_queries += 1
        if pred_relation == gold_relation:
            self.relation.tp += 1
        else:
            self.relation.fp += 1
            self.relation.fn += 1

        for pred, gold in ((pred_subject, gold_subject), (pred_object, gold_object)):
            if pred is None:
                self.entity.fn += 1
            elif tuple(pred) == tuple(gold):
                self.entity.tp += 1
            else:
                self.entity.fp += 1
                self.entity.fn += 1

        if pred_subject is None or pred_object is None:
            self.triple.fn += 1
        elif (pred_relation == gold_relation and tuple(pred_subject) == tuple(gold_subject)
              and tuple(pred_object) == tuple(gold_object)):
            self.triple.tp += 1
        else:
            self.triple.fp += 1
            self.triple.fn += 1

    def merge(self, other: "Metrics") -> None:
        self.entity += other.entity
        self.relation += other.relation
        self.triple += other.triple
        self.n_queries += other.n_queries
        self.episode_triple_f1.extend(other.episode_triple_f1)

    @property
    def mean_episode_triple_f1(self) -> float:
        e = self.episode_triple_f1
        return sum(e) / len(e) if e else 0.0

    def to_dict(self) -> dict:
        return {
            "entity": self.entity.to_dict(),
            "relation": self.relation.to_dict(),
            "triple": self.triple.to_dict(),
            "n_queries": self.n_queries,
            "n_episodes": len(self.episode_triple_f1),
            "mean_episode_triple_f1": self.mean_episode_triple_f1,
        }
