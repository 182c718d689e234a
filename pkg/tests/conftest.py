"""Shared model/corpus builders for the test suite."""

import pytest

from polywsd.data import build_vocab
from polywsd.encoder import EncoderConfig
from polywsd.fusion import FusionConfig
from polywsd.model import build_model
from polywsd.synthetic import synthetic_corpus


def tiny_model(corpus, inventory, seed=0, d_model=8, poly_m=2, n_heads=2, max_seq_len=12):
    vocab = build_vocab(corpus, inventory, min_freq=1)
    encoder_config = EncoderConfig(
        vocab_size=vocab.size,
        d_model=d_model,
        n_layers=1,
        n_heads=n_heads,
        d_ff=2 * d_model,
        max_seq_len=max_seq_len,
    )
    fusion_config = FusionConfig(d_model=d_model, poly_m=poly_m, n_heads=n_heads)
    return build_model(encoder_config, encoder_config, fusion_config, vocab, seed=seed)


@pytest.fixture
def small_world():
    """A 12-instance corpus over 4 lemmas with a freshly built tiny model."""
    corpus, inventory = synthetic_corpus(n_lemmas=4, senses_per_lemma=3, n_instances=12, seed=1)
    model = tiny_model(corpus, inventory, seed=0)
    return corpus, inventory, model
