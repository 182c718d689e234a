"""Batch contrastive training and the all-candidates ablation regime.

The contrastive step encodes each batch item's context and its gold gloss
only; the gold glosses of the other items serve as that item's negatives.
Stacking both sides gives a b x b score matrix whose diagonal holds the
correct-pair scores; the loss is the mean negative log of the row-softmaxed
diagonal. Off-diagonal cells whose gloss text is identical to the row's own
gloss are false negatives and are masked out of the softmax.

The ablation regime scores every candidate sense of every item instead,
which costs sum(m_i) gloss encodes per step against b for the contrastive
step; both report their encoder-forward counts for cost accounting.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import CorpusInstance, SenseInventory
from .errors import BatchError, ConfigError, DataError, TrainingError
from .model import WsdModel, bind_flat, context_codes, flat_parameter_vector, gloss_codes
from .tensor import Tape, Tensor, backward, finite_diff_check

MODE_CONTRASTIVE = "bcl"
MODE_ALL_CANDIDATES = "all-candidates"
MODES = (MODE_CONTRASTIVE, MODE_ALL_CANDIDATES)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int
    epochs: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 for contrastive training, got {self.batch_size}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        for name in ("learning_rate", "beta1", "beta2", "eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")


@dataclass
class Batch:
    """Aligned instances and their gold-sense gloss texts."""

    instances: list[CorpusInstance]
    gold_glosses: list[list[str]]

    def __post_init__(self):
        if len(self.instances) < 2:
            raise BatchError(f"contrastive batches need >= 2 items, got {len(self.instances)}")
        if len(self.gold_glosses) != len(self.instances):
            raise BatchError(
                f"{len(self.instances)} instances but {len(self.gold_glosses)} glosses"
            )

    def __len__(self) -> int:
        return len(self.instances)


@dataclass
class ScoreMatrix:
    """b x b word-vs-gloss scores with the derived softmax views."""

    scores: Tensor
    mask: np.ndarray
    probs: Tensor | None = None
    diag_probs: Tensor | None = None


@dataclass
class LossValue:
    """Scalar loss tensor plus the per-example negative-log-prob breakdown."""

    total: Tensor
    per_example: np.ndarray

    @property
    def value(self) -> float:
        return self.total.item()


@dataclass
class ForwardCounts:
    context: int = 0
    gloss: int = 0

    def __add__(self, other: "ForwardCounts") -> "ForwardCounts":
        return ForwardCounts(self.context + other.context, self.gloss + other.gloss)


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss: float
    context_forwards: int
    gloss_forwards: int
    elapsed: float


@dataclass
class RunMetrics:
    """Per-step records of one training run, consumed by the cost accounting."""

    mode: str
    fingerprint: str
    device_count: int = 1
    records: list[StepRecord] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def context_forwards(self) -> int:
        return sum(r.context_forwards for r in self.records)

    @property
    def gloss_forwards(self) -> int:
        return sum(r.gloss_forwards for r in self.records)


def duplicate_gloss_mask(gold_glosses: list[list[str]]) -> np.ndarray:
    """True at (i, j), i != j, where gloss j is textually identical to gloss i.

    Those cells would penalize a correct match if left in the softmax.
    """
    b = len(gold_glosses)
    keys = [tuple(g) for g in gold_glosses]
    mask = np.zeros((b, b), dtype=bool)
    for i in range(b):
        for j in range(b):
            if i != j and keys[i] == keys[j]:
                mask[i, j] = True
    return mask


def fusion_matrix(
    word_codes_list: list[Tensor],
    gloss_codes_list: list[Tensor],
    mask: np.ndarray | None = None,
) -> ScoreMatrix:
    """Stack both sides and score all pairs: cell (i, j) = score_pair(word_i, gloss_j)."""
    if len(word_codes_list) != len(gloss_codes_list):
        raise BatchError(
            f"{len(word_codes_list)} word codes vs {len(gloss_codes_list)} gloss codes"
        )
    if not word_codes_list:
        raise BatchError("empty batch")
    poly_m, d = word_codes_list[0].shape
    flat = poly_m * d
    words = T.concat([T.reshape(c, (1, flat)) for c in word_codes_list], axis=0)
    glosses = T.concat([T.reshape(c, (1, flat)) for c in gloss_codes_list], axis=0)
    scores = T.scale(T.matmul(words, T.transpose(glosses)), 1.0 / poly_m)
    b = len(word_codes_list)
    if mask is None:
        mask = np.zeros((b, b), dtype=bool)
    return ScoreMatrix(scores=scores, mask=mask)


def bcl_loss(sm: ScoreMatrix) -> LossValue:
    """Mean negative log-probability of the diagonal under the masked row softmax.

    Fills ``sm.probs`` and ``sm.diag_probs`` as a side effect.
    """
    if sm.mask.diagonal().any():
        raise RuntimeError("internal error: a diagonal cell is masked")
    log_probs = T.row_log_softmax(sm.scores, mask=sm.mask)
    sm.probs = T.row_softmax(sm.scores, mask=sm.mask)
    sm.diag_probs = T.diagonal(sm.probs)
    diag_log = T.diagonal(log_probs)
    total = T.neg(T.mean_all(diag_log))
    return LossValue(total=total, per_example=-diag_log.data.copy())


class Adam:
    """Standard Adam with bias correction; deterministic given grads."""

    def __init__(
        self,
        params: list[Tensor],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @classmethod
    def from_config(cls, params: list[Tensor], config: TrainConfig) -> "Adam":
        return cls(params, config.learning_rate, config.beta1, config.beta2, config.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def _clip_gradients(params: list[Tensor], clip_norm: float | None) -> None:
    if clip_norm is None:
        return
    total = np.sqrt(
        sum(float((p.grad**2).sum()) for p in params if p.grad is not None)
    )
    if total > clip_norm:
        ratio = clip_norm / total
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * ratio


def _check_finite(loss: LossValue, model: WsdModel, context: str) -> None:
    if not np.isfinite(loss.per_example).all():
        raise TrainingError(
            f"non-finite loss at {context}: per-example terms {loss.per_example.tolist()}, "
            f"parameter norm {model.parameter_norm():.6g}"
        )


def bcl_forward(batch: Batch, model: WsdModel) -> tuple[ScoreMatrix, LossValue, ForwardCounts]:
    """Contrastive forward pass: b context encodes, b gloss encodes."""
    words = [context_codes(model, inst.tokens, inst.target_index) for inst in batch.instances]
    glosses = [gloss_codes(model, g) for g in batch.gold_glosses]
    sm = fusion_matrix(words, glosses, mask=duplicate_gloss_mask(batch.gold_glosses))
    loss = bcl_loss(sm)
    return sm, loss, ForwardCounts(context=len(batch), gloss=len(batch))


def train_step(
    batch: Batch,
    model: WsdModel,
    optimizer: Adam,
    clip_norm: float | None = None,
    context: str = "step",
) -> tuple[LossValue, ForwardCounts]:
    """One contrastive step: forward, backward, Adam update (params mutate in place)."""
    tape = Tape()
    with tape:
        _, loss, counts = bcl_forward(batch, model)
    _check_finite(loss, model, context)
    optimizer.zero_grad()
    backward(loss.total, tape)
    _clip_gradients(optimizer.params, clip_norm)
    optimizer.step()
    return loss, counts


def all_candidates_forward(
    batch: Batch, inventory: SenseInventory, model: WsdModel
) -> tuple[LossValue, ForwardCounts]:
    """Score every candidate sense per item; cross-entropy against the gold index."""
    poly_m = model.fusion_config.poly_m
    flat = poly_m * model.fusion_config.d_model
    per_losses = []
    gloss_count = 0
    for inst in batch.instances:
        senses = inventory.candidates(inst.lemma, inst.pos)
        sense_ids = [s.id for s in senses]
        if inst.gold is None or inst.gold not in sense_ids:
            raise DataError(
                f"instance {inst.id!r}: gold sense {inst.gold!r} not in its candidate set"
            )
        gold_index = sense_ids.index(inst.gold)
        word = T.reshape(context_codes(model, inst.tokens, inst.target_index), (1, flat))
        gloss_stack = T.concat(
            [T.reshape(gloss_codes(model, s.gloss), (1, flat)) for s in senses], axis=0
        )
        gloss_count += len(senses)
        scores = T.scale(T.matmul(word, T.transpose(gloss_stack)), 1.0 / poly_m)
        log_probs = T.row_log_softmax(scores)
        one_hot = np.zeros((1, len(senses)))
        one_hot[0, gold_index] = 1.0
        per_losses.append(T.neg(T.sum_all(T.mul(log_probs, Tensor(one_hot)))))
    stacked = T.concat([T.reshape(nll, (1,)) for nll in per_losses], axis=0)
    total = T.mean_all(stacked)
    counts = ForwardCounts(context=len(batch), gloss=gloss_count)
    return LossValue(total=total, per_example=stacked.data.copy()), counts


def train_all_candidates_step(
    batch: Batch,
    inventory: SenseInventory,
    model: WsdModel,
    optimizer: Adam,
    clip_norm: float | None = None,
    context: str = "step",
) -> tuple[LossValue, ForwardCounts]:
    tape = Tape()
    with tape:
        loss, counts = all_candidates_forward(batch, inventory, model)
    _check_finite(loss, model, context)
    optimizer.zero_grad()
    backward(loss.total, tape)
    _clip_gradients(optimizer.params, clip_norm)
    optimizer.step()
    return loss, counts


def check_bcl_gradients(batch: Batch, model: WsdModel, h: float = 1e-4) -> float:
    """Max relative error of the full contrastive-loss gradient against central
    differences, taken over every model parameter."""
    flat = flat_parameter_vector(model)

    def f(p: Tensor) -> Tensor:
        bound = bind_flat(model, p)
        _, loss, _ = bcl_forward(batch, bound)
        return loss.total

    return finite_diff_check(f, Tensor(flat), h=h)


def make_batches(
    corpus: list[CorpusInstance],
    inventory: SenseInventory,
    batch_size: int,
    seed: int,
    epoch: int,
) -> list[Batch]:
    """Seeded per-epoch shuffle into batches; a final partial batch of < 2 is dropped."""
    labelled = [inst for inst in corpus if inst.gold is not None]
    if not labelled:
        return []
    order = np.random.default_rng([seed, epoch]).permutation(len(labelled))
    shuffled = [labelled[i] for i in order]
    batches = []
    for start in range(0, len(shuffled), batch_size):
        chunk = shuffled[start : start + batch_size]
        if len(chunk) < 2:
            break
        glosses = []
        for inst in chunk:
            try:
                glosses.append(inventory.gloss_of(inst.lemma, inst.pos, inst.gold))
            except Exception as exc:
                raise DataError(f"instance {inst.id!r}: {exc}") from None
        batches.append(Batch(instances=chunk, gold_glosses=glosses))
    return batches


def steps_per_epoch(corpus_size: int, batch_size: int) -> int:
    full, remainder = divmod(corpus_size, batch_size)
    return full + (1 if remainder >= 2 else 0)


def train(
    model: WsdModel,
    optimizer: Adam,
    corpus: list[CorpusInstance],
    inventory: SenseInventory,
    config: TrainConfig,
    mode: str = MODE_CONTRASTIVE,
    start_step: int = 0,
    max_steps: int | None = None,
    fingerprint: str = "",
    device_count: int = 1,
) -> RunMetrics:
    """Run the training loop; batch order is a pure function of (seed, epoch),
    so a run resumed at ``start_step`` replays the uninterrupted schedule."""
    if mode not in MODES:
        raise ConfigError(f"unknown training mode {mode!r}; expected one of {MODES}")
    metrics = RunMetrics(mode=mode, fingerprint=fingerprint, device_count=device_count)
    run_start = time.perf_counter()
    step = 0
    for epoch in range(config.epochs):
        for batch_index, batch in enumerate(
            make_batches(corpus, inventory, config.batch_size, config.seed, epoch)
        ):
            if step < start_step:
                step += 1
                continue
            if max_steps is not None and step >= max_steps:
                metrics.wall_seconds = time.perf_counter() - run_start
                return metrics
            step_start = time.perf_counter()
            where = f"epoch {epoch}, batch {batch_index}"
            if mode == MODE_CONTRASTIVE:
                loss, counts = train_step(batch, model, optimizer, config.clip_norm, where)
            else:
                loss, counts = train_all_candidates_step(
                    batch, inventory, model, optimizer, config.clip_norm, where
                )
            metrics.records.append(
                StepRecord(
                    step=step,
                    epoch=epoch,
                    loss=loss.value,
                    context_forwards=counts.context,
                    gloss_forwards=counts.gloss,
                    elapsed=time.perf_counter() - step_start,
                )
            )
            step += 1
    metrics.wall_seconds = time.perf_counter() - run_start
    return metrics
