"""Mutually guided few-shot relational triple extraction on a numpy autodiff core."""
from .corpus import (
    TAGS,
    AnnotatedSentence,
    Corpus,
    CorpusError,
    Episode,
    derive_bio_tags,
    generate_synthetic_corpus,
    parse_corpus,
    sample_episode,
)
from .harness import TrainConfig, episode_loss, evaluate, extract, train
from .metrics import Counts, Metrics

__version__ = "0.1.0"
