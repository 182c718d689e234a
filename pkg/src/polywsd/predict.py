"""Sense prediction: score every candidate gloss and pick the argmax.

The context is encoded once per instance (full context, target row sliced
out), each candidate gloss is encoded once, and the highest-scoring sense
wins. Ties break toward the lowest inventory index, which is the
first-sense prior. The frequency and first-sense baselines live here too.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import CorpusInstance, SenseInventory
from .errors import ContractError
from .fusion import score_pair
from .model import WsdModel, context_codes, gloss_codes


@dataclass
class CandidateScores:
    """Per-sense match scores, inventory-ordered; chosen_index is the argmax
    with ties broken toward the lowest index."""

    sense_ids: list[str]
    scores: list[float]
    chosen_index: int


@dataclass
class Prediction:
    instance_id: str
    sense_id: str
    gloss: list[str]
    score: float


Predictor = Callable[[CorpusInstance], Prediction]


def score_candidates(
    instance: CorpusInstance, inventory: SenseInventory, model: WsdModel
) -> CandidateScores:
    senses = inventory.candidates(instance.lemma, instance.pos)
    word = context_codes(model, instance.tokens, instance.target_index)
    scores = [score_pair(word, gloss_codes(model, s.gloss)).item() for s in senses]
    if not all(np.isfinite(scores)):
        raise ContractError(f"instance {instance.id!r}: non-finite candidate score")
    chosen = int(np.argmax(scores))  # argmax returns the first maximum
    return CandidateScores(sense_ids=[s.id for s in senses], scores=scores, chosen_index=chosen)


def predict(instance: CorpusInstance, inventory: SenseInventory, model: WsdModel) -> Prediction:
    ranked = score_candidates(instance, inventory, model)
    senses = inventory.candidates(instance.lemma, instance.pos)
    best = senses[ranked.chosen_index]
    return Prediction(
        instance_id=instance.id,
        sense_id=best.id,
        gloss=best.gloss,
        score=ranked.scores[ranked.chosen_index],
    )


def predict_corpus(
    instances: list[CorpusInstance], inventory: SenseInventory, model: WsdModel
) -> list[Prediction]:
    return [predict(inst, inventory, model) for inst in instances]


def mfs_predictor(
    training_corpus: list[CorpusInstance], inventory: SenseInventory
) -> Predictor:
    """Most-frequent-sense baseline from gold-labelled training counts.

    Ties and unseen (lemma, pos) keys fall back toward the inventory order,
    so an unseen word gets its first listed sense.
    """
    counts: dict[tuple[str, str], Counter] = {}
    for inst in training_corpus:
        if inst.gold is not None:
            counts.setdefault((inst.lemma, inst.pos), Counter())[inst.gold] += 1

    def predictor(instance: CorpusInstance) -> Prediction:
        senses = inventory.candidates(instance.lemma, instance.pos)
        seen = counts.get((instance.lemma, instance.pos), Counter())
        best_index = 0
        best_count = seen.get(senses[0].id, 0)
        for j, sense in enumerate(senses[1:], start=1):
            if seen.get(sense.id, 0) > best_count:
                best_index, best_count = j, seen.get(sense.id, 0)
        best = senses[best_index]
        return Prediction(
            instance_id=instance.id, sense_id=best.id, gloss=best.gloss, score=float(best_count)
        )

    return predictor


def first_sense_predictor(inventory: SenseInventory) -> Predictor:
    """Always the first listed sense; inventory order encodes sense priority."""

    def predictor(instance: CorpusInstance) -> Prediction:
        first = inventory.candidates(instance.lemma, instance.pos)[0]
        return Prediction(instance_id=instance.id, sense_id=first.id, gloss=first.gloss, score=0.0)

    return predictor
