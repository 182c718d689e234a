"""Poly-code attention fusion of a target word's local and global semantics.

The target-word row is replicated into ``poly_m`` query codes which attend
over the full context embedding through multi-head scaled dot-product
attention, yielding a fixed ``poly_m x d_model`` representation. A gloss is
represented by replicating its start-marker row into the same shape, so
word and gloss sides are directly comparable: their match score is the
Frobenius inner product of the two code matrices divided by ``poly_m``
(invariant to the ``poly_m`` setting; any constant factor leaves every
argmax unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class FusionConfig:
    d_model: int
    poly_m: int
    n_heads: int

    def __post_init__(self):
        if self.poly_m < 1:
            raise ConfigError(f"poly_m must be >= 1, got {self.poly_m}")
        if self.n_heads < 1:
            raise ConfigError(f"n_heads must be >= 1, got {self.n_heads}")
        if self.d_model < 1 or self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class HeadParams:
    """Query/key/value projections for one attention head."""

    wq: Tensor
    wk: Tensor
    wv: Tensor


@dataclass
class FusionParams:
    heads: list[HeadParams]
    w_o: Tensor

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for i, head in enumerate(self.heads):
            yield f"{prefix}head{i}.wq", head.wq
            yield f"{prefix}head{i}.wk", head.wk
            yield f"{prefix}head{i}.wv", head.wv
        yield f"{prefix}w_o", self.w_o


def rebind_fusion(params: FusionParams, supply: Iterator[Tensor]) -> FusionParams:
    """Rebuild the structure drawing tensors from ``supply`` in named_tensors order."""
    heads = [
        HeadParams(wq=next(supply), wk=next(supply), wv=next(supply)) for _ in params.heads
    ]
    return FusionParams(heads=heads, w_o=next(supply))


def init_fusion(config: FusionConfig, rng: np.random.Generator) -> FusionParams:
    from .encoder import glorot  # shared initializer

    d, dh = config.d_model, config.head_dim
    heads = [
        HeadParams(
            wq=Tensor(glorot(rng, d, dh), requires_grad=True),
            wk=Tensor(glorot(rng, d, dh), requires_grad=True),
            wv=Tensor(glorot(rng, d, dh), requires_grad=True),
        )
        for _ in range(config.n_heads)
    ]
    w_o = Tensor(glorot(rng, config.n_heads * dh, d), requires_grad=True)
    return FusionParams(heads=heads, w_o=w_o)


def replicate_query(r: Tensor, poly_m: int) -> Tensor:
    """Stack poly_m copies of the target-word vector into query codes."""
    return T.replicate_rows(r, poly_m)


def replicate_gloss(r_gloss: Tensor, poly_m: int) -> Tensor:
    """Stack poly_m copies of the gloss vector to match the word-side shape."""
    return T.replicate_rows(r_gloss, poly_m)


def attention_head(queries: Tensor, keys: Tensor, values: Tensor, head: HeadParams) -> Tensor:
    """One head of scaled dot-product attention over the context rows.

    Each query row's attention weights sum to 1.
    """
    if keys.shape != values.shape:
        raise ShapeError(f"keys {keys.shape} and values {values.shape} must match")
    d_model = queries.shape[1]
    if head.wq.shape[0] != d_model or head.wk.shape[0] != d_model or head.wv.shape[0] != d_model:
        raise ShapeError(
            f"head projections expect width {head.wq.shape[0]}, inputs have {d_model}"
        )
    d_k = head.wq.shape[1]
    logits = T.scale(
        T.matmul(T.matmul(queries, head.wq), T.transpose(T.matmul(keys, head.wk))),
        1.0 / np.sqrt(d_k),
    )
    return T.matmul(T.row_softmax(logits), T.matmul(values, head.wv))


def fuse_heads(heads: Sequence[Tensor], w_o: Tensor) -> Tensor:
    """Concatenate head outputs along the feature axis and project to d_model."""
    if not heads:
        raise ConfigError("fuse_heads needs at least one head")
    width = sum(h.shape[1] for h in heads)
    if width != w_o.shape[0]:
        raise ConfigError(
            f"{len(heads)} heads concatenate to width {width}, "
            f"but the output projection expects {w_o.shape[0]}"
        )
    return T.matmul(T.concat(list(heads), axis=1), w_o)


def fuse_context(encoded: Tensor, target: Tensor, params: FusionParams, config: FusionConfig) -> Tensor:
    """Full word-side fusion: replicated target queries attend over the context."""
    queries = replicate_query(target, config.poly_m)
    outputs = [attention_head(queries, encoded, encoded, head) for head in params.heads]
    return fuse_heads(outputs, params.w_o)


def fuse_gloss(cls_vector: Tensor, config: FusionConfig) -> Tensor:
    """Gloss-side counterpart: replication only, no attention."""
    return replicate_gloss(cls_vector, config.poly_m)


def score_pair(word_codes: Tensor, gloss_codes: Tensor) -> Tensor:
    """Match score: mean over codes of the per-code inner product (scalar tensor)."""
    if word_codes.shape != gloss_codes.shape:
        raise ShapeError(
            f"code shapes differ: {word_codes.shape} vs {gloss_codes.shape}"
        )
    poly_m = word_codes.shape[0]
    return T.scale(T.sum_all(T.mul(word_codes, gloss_codes)), 1.0 / poly_m)
