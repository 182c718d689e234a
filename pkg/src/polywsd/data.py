"""Corpus, sense-inventory, and vocabulary ingestion, plus the word tokenizer.

File formats (all UTF-8):

* corpus: one JSON object per line with fields ``id``, ``tokens`` (array of
  strings), ``target_index`` (int), ``lemma``, ``pos``, and optional ``gold``.
* inventory: one JSON object per line with fields ``lemma``, ``pos``, and
  ``senses`` (ordered array of ``{"id": ..., "gloss": [...]}``); the listed
  order encodes first-sense priority.
* gold keys: lines of ``instance_id<SPACE>sense_id``.
* predictions: lines of ``instance_id<TAB>sense_id``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError, InventoryError, ScoringError

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV")

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
_RESERVED = ("<pad>", "<unk>", "<cls>", "<sep>")


@dataclass
class CorpusInstance:
    """One disambiguation item: a tagged target word inside its context."""

    id: str
    tokens: list[str]
    target_index: int
    lemma: str
    pos: str
    gold: str | None = None

    def __post_init__(self):
        if self.pos not in POS_TAGS:
            raise DataError(f"instance {self.id!r}: pos {self.pos!r} not in {POS_TAGS}")
        if not self.tokens:
            raise DataError(f"instance {self.id!r}: empty token list")
        if not 0 <= self.target_index < len(self.tokens):
            raise DataError(
                f"instance {self.id!r}: target_index {self.target_index} out of range "
                f"for {len(self.tokens)} tokens"
            )


@dataclass
class SenseEntry:
    """A sense id with its gloss text."""

    id: str
    gloss: list[str]

    def __post_init__(self):
        if not self.gloss:
            raise DataError(f"sense {self.id!r}: empty gloss")


class SenseInventory:
    """Ordered candidate senses per (lemma, pos); order is first-sense priority."""

    def __init__(self):
        self._entries: dict[tuple[str, str], list[SenseEntry]] = {}

    def add(self, lemma: str, pos: str, senses: list[SenseEntry]) -> None:
        key = (lemma, pos)
        if key in self._entries:
            raise DataError(f"duplicate inventory entry for {key}")
        seen = set()
        for sense in senses:
            if sense.id in seen:
                raise DataError(f"duplicate sense id {sense.id!r} under {key}")
            seen.add(sense.id)
        if not senses:
            raise DataError(f"inventory entry {key} lists no senses")
        self._entries[key] = senses

    def candidates(self, lemma: str, pos: str) -> list[SenseEntry]:
        try:
            return self._entries[(lemma, pos)]
        except KeyError:
            raise InventoryError(f"no senses for lemma {lemma!r} with pos {pos!r}") from None

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def gloss_of(self, lemma: str, pos: str, sense_id: str) -> list[str]:
        for sense in self.candidates(lemma, pos):
            if sense.id == sense_id:
                return sense.gloss
        raise InventoryError(f"sense {sense_id!r} not listed for ({lemma!r}, {pos!r})")


@dataclass
class Vocab:
    """Token-to-id map with fixed reserved ids 0..3 (pad, unk, cls, sep)."""

    token_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.token_to_id) + len(_RESERVED)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def tokens_in_id_order(self) -> list[str]:
        return sorted(self.token_to_id, key=self.token_to_id.__getitem__)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocab":
        return cls({tok: i + len(_RESERVED) for i, tok in enumerate(tokens)})


# ---------------------------------------------------------------------------
# Loading and saving
# ---------------------------------------------------------------------------


def _read_records(path) -> list[tuple[int, dict]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            records.append((lineno, obj))
    return records


def load_corpus(path) -> list[CorpusInstance]:
    instances = []
    for lineno, obj in _read_records(path):
        try:
            instances.append(
                CorpusInstance(
                    id=str(obj["id"]),
                    tokens=[str(t) for t in obj["tokens"]],
                    target_index=int(obj["target_index"]),
                    lemma=str(obj["lemma"]),
                    pos=str(obj["pos"]),
                    gold=None if obj.get("gold") is None else str(obj["gold"]),
                )
            )
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return instances


def save_corpus(path, instances: list[CorpusInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            record = {
                "id": inst.id,
                "tokens": inst.tokens,
                "target_index": inst.target_index,
                "lemma": inst.lemma,
                "pos": inst.pos,
            }
            if inst.gold is not None:
                record["gold"] = inst.gold
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_inventory(path) -> SenseInventory:
    inventory = SenseInventory()
    for lineno, obj in _read_records(path):
        try:
            senses = [
                SenseEntry(id=str(s["id"]), gloss=[str(w) for w in s["gloss"]])
                for s in obj["senses"]
            ]
            inventory.add(str(obj["lemma"]), str(obj["pos"]), senses)
        except KeyError as exc:
            raise DataError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    return inventory


def save_inventory(path, inventory: SenseInventory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (lemma, pos), senses in inventory.items():
            record = {
                "lemma": lemma,
                "pos": pos,
                "senses": [{"id": s.id, "gloss": s.gloss} for s in senses],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_gold_keys(path) -> dict[str, str]:
    gold: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ScoringError(f"{path}:{lineno}: expected 'id sense_id'")
            if parts[0] in gold:
                raise ScoringError(f"{path}:{lineno}: duplicate gold id {parts[0]!r}")
            gold[parts[0]] = parts[1]
    return gold


def save_gold_keys(path, gold: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for instance_id, sense_id in gold.items():
            fh.write(f"{instance_id} {sense_id}\n")


def load_predictions(path) -> dict[str, str]:
    preds: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ScoringError(f"{path}:{lineno}: expected 'id<TAB>sense_id'")
            if parts[0] in preds:
                raise ScoringError(f"{path}:{lineno}: duplicate prediction id {parts[0]!r}")
            preds[parts[0]] = parts[1]
    return preds


def save_predictions(path, predictions: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for instance_id, sense_id in predictions.items():
            fh.write(f"{instance_id}\t{sense_id}\n")


# ---------------------------------------------------------------------------
# Vocabulary and tokenization
# ---------------------------------------------------------------------------


def build_vocab(
    corpus: list[CorpusInstance], inventory: SenseInventory, min_freq: int = 1
) -> Vocab:
    """Count corpus tokens plus all gloss tokens; keep those at or above min_freq.

    Ids >= 4 are assigned by descending frequency, ties broken lexicographically,
    so identical inputs always produce the identical mapping.
    """
    if min_freq < 1:
        raise DataError(f"min_freq must be >= 1, got {min_freq}")
    counts: Counter[str] = Counter()
    for inst in corpus:
        counts.update(inst.tokens)
    for _, senses in inventory.items():
        for sense in senses:
            counts.update(sense.gloss)
    kept = sorted(
        (tok for tok, n in counts.items() if n >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocab.from_tokens(kept)


def _window(n: int, target_index: int, capacity: int) -> tuple[int, int]:
    """Start/stop of a capacity-sized window over n words that keeps the target."""
    if n <= capacity:
        return 0, n
    start = max(0, min(target_index - capacity // 2, n - capacity))
    return start, start + capacity


def lookup_ids(words: list[str], vocab: Vocab) -> list[int]:
    return [vocab.id(w) for w in words]


def content_ids(words: list[str], vocab: Vocab, capacity: int) -> list[int]:
    """Map words to ids, tail-truncated to at most ``capacity`` entries."""
    return lookup_ids(words[:capacity], vocab)


def content_ids_around(
    words: list[str], target_index: int, vocab: Vocab, capacity: int
) -> tuple[list[int], int]:
    """Map words to ids, centrally truncated so the target word survives.

    Returns the ids and the target's index within the kept window.
    """
    if not 0 <= target_index < len(words):
        raise DataError(f"target_index {target_index} out of range for {len(words)} words")
    start, stop = _window(len(words), target_index, capacity)
    return lookup_ids(words[start:stop], vocab), target_index - start


def tokenize(
    words: list[str], vocab: Vocab, max_len: int, target_index: int | None = None
) -> list[int]:
    """Wrap word ids in start/end markers, truncated to fit ``max_len``.

    With ``target_index`` the truncation window is centered so the target word
    is always retained; otherwise the tail is dropped. Use ``tokenize_context``
    when the target's post-truncation position is needed.
    """
    if max_len < 3:
        raise DataError(f"max_len must be >= 3, got {max_len}")
    if target_index is None:
        inner = content_ids(words, vocab, max_len - 2)
    else:
        inner, _ = content_ids_around(words, target_index, vocab, max_len - 2)
    return [CLS_ID] + inner + [SEP_ID]


def tokenize_context(
    words: list[str], target_index: int, vocab: Vocab, max_len: int
) -> tuple[list[int], int]:
    """As ``tokenize`` with central truncation; also reports the target's new
    word-level index inside the kept window."""
    if max_len < 3:
        raise DataError(f"max_len must be >= 3, got {max_len}")
    inner, new_target = content_ids_around(words, target_index, vocab, max_len - 2)
    return [CLS_ID] + inner + [SEP_ID], new_target
