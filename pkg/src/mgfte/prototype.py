"""Per-relation entity prototypes: mean support-token vector for each tag."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import numeric as nm
from .corpus import NUM_TAGS, AnnotatedSentence, tag_ids
from .numeric import Tensor


@dataclass
class PrototypeSet:
    matrices: Tensor  # (N, 5, d), tag order BS, IS, BO, IO, O
    counts: np.ndarray  # (N, 5) support tokens per tag

    @property
    def n_way(self) -> int:
        return self.matrices.shape[0]

    def __getitem__(self, i: int) -> Tensor:
        return self.matrices[i]


def compute_entity_prototypes(
    support: Sequence[Sequence[AnnotatedSentence]],
    encoder_fn: Callable[[AnnotatedSentence], Tensor],
    literal_k: bool = False,
    encoded: Sequence[Sequence[Tensor]] | None = None,
) -> PrototypeSet:
    """Prototype of tag ``l`` under relation ``i`` = mean of its support token vectors.

    Tags absent from a relation's support get the zero vector; ``counts``
    records how many tokens backed each prototype.  Pass ``encoded`` to
    reuse already computed support representations.
    """
    if encoded is None:
        encoded = [[encoder_fn(s) for s in group] for group in support]
    d = encoded[0][0].shape[1]
    zero = Tensor(np.zeros(d, dtype=encoded[0][0].dtype))
    counts = np.zeros((len(support), NUM_TAGS), dtype=np.int64)
    per_relation = []
    for i, (group, reps) in enumerate(zip(support, encoded)):
        rows = nm.concat(list(reps), axis=0)
        tags = np.concatenate([tag_ids(s) for s in group])
        protos = []
        for tag in range(NUM_TAGS):
            (idx,) = np.nonzero(tags == tag)
            counts[i, tag] = len(idx)
            if not len(idx):
                protos.append(zero)
            elif literal_k:
                protos.append(nm.reduce_sum(rows[idx], axis=0) * (1.0 / len(group)))
            else:
                protos.append(nm.mean(rows[idx], axis=0))
        per_relation.append(nm.stack(protos, axis=0))
    return PrototypeSet(nm.stack(per_relation, axis=0), counts)
