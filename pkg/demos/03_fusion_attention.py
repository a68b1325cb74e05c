"""
Looking inside the fusion attention
===================================

The fusion step scores every query token against the five entity prototypes
(BS, IS, BO, IO, O) of one relation.  After training, subject and object
tokens should lean on the matching prototype.  This prints the row-softmax
table, the same one ``mgfte dump-fusion`` writes as CSV.
"""

import tempfile

import numpy as np

from mgfte import TrainConfig, generate_synthetic_corpus, train
from mgfte.corpus import derive_bio_tags
from mgfte.fusion import attention
from mgfte.harness import load_model
from mgfte.model import forward_query, prepare_support

corpus = generate_synthetic_corpus(5, 30, 200, (8, 12), (1, 2), seed=3)
config = TrainConfig(n_way=5, k_shot=5, episodes=150, d=32, out_dir=tempfile.mkdtemp())
params, vocab, _ = load_model(train(config, corpus))

relations = corpus.relations
support = [corpus.groups[r][:5] for r in relations]
state = prepare_support(params, vocab, support, relations)
query = corpus.groups[relations[2]][7]
fwd = forward_query(params, vocab, state, query.tokens)
print("predicted relation:", relations[fwd.predicted], "| gold:", query.relation)

_, token_attn, _ = attention(fwd.Q, state.prototypes[fwd.predicted])
np.set_printoptions(precision=2, suppress=True)
print(f"{'token':>10} {'gold':>4}   BS   IS   BO   IO    O")
for tok, tag, row in zip(query.tokens, derive_bio_tags(query), token_attn.data):
    print(f"{tok:>10} {tag:>4}  " + " ".join(f"{v:.2f}" for v in row))
