"""The full model: two independent encoders plus the fusion projections.

The context side encodes the whole sentence and fuses the target-word row
with its context into poly_m codes; the gloss side encodes a definition and
replicates its start-marker row. Both phases (training and prediction) use
the same full-context path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Vocab, content_ids, content_ids_around
from .encoder import (
    EncoderConfig,
    EncoderParams,
    cls_representation,
    encode,
    init_encoder,
    rebind_encoder,
    target_representation,
)
from .errors import ConfigError
from .fusion import (
    FusionConfig,
    FusionParams,
    fuse_context,
    fuse_gloss,
    init_fusion,
    rebind_fusion,
)
from .tensor import Tensor


@dataclass
class WsdModel:
    context_config: EncoderConfig
    gloss_config: EncoderConfig
    fusion_config: FusionConfig
    vocab: Vocab
    context: EncoderParams
    gloss: EncoderParams
    fusion: FusionParams

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = list(self.context.named_tensors("context."))
        named.extend(self.gloss.named_tensors("gloss."))
        named.extend(self.fusion.named_tensors("fusion."))
        return named

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_norm(self) -> float:
        return float(np.sqrt(sum(float((t.data**2).sum()) for t in self.parameters())))


def build_model(
    context_config: EncoderConfig,
    gloss_config: EncoderConfig,
    fusion_config: FusionConfig,
    vocab: Vocab,
    seed: int,
) -> WsdModel:
    """Seeded construction; the two encoders never share parameters."""
    if not (context_config.d_model == gloss_config.d_model == fusion_config.d_model):
        raise ConfigError(
            f"d_model mismatch: context {context_config.d_model}, "
            f"gloss {gloss_config.d_model}, fusion {fusion_config.d_model}"
        )
    if context_config.vocab_size != vocab.size or gloss_config.vocab_size != vocab.size:
        raise ConfigError(
            f"encoder vocab_size must equal the vocabulary size {vocab.size}"
        )
    rng = np.random.default_rng(seed)
    return WsdModel(
        context_config=context_config,
        gloss_config=gloss_config,
        fusion_config=fusion_config,
        vocab=vocab,
        context=init_encoder(context_config, rng),
        gloss=init_encoder(gloss_config, rng),
        fusion=init_fusion(fusion_config, rng),
    )


def context_codes(model: WsdModel, tokens: list[str], target_index: int) -> Tensor:
    """Fused poly_m x d_model codes for a target word in its context."""
    ids, window_target = content_ids_around(
        tokens, target_index, model.vocab, model.context_config.max_seq_len - 2
    )
    encoded = encode(model.context, ids)
    target = target_representation(encoded, window_target)
    return fuse_context(encoded, target, model.fusion, model.fusion_config)


def gloss_codes(model: WsdModel, gloss_tokens: list[str]) -> Tensor:
    """Replicated poly_m x d_model codes for a sense gloss."""
    ids = content_ids(gloss_tokens, model.vocab, model.gloss_config.max_seq_len - 2)
    encoded = encode(model.gloss, ids)
    return fuse_gloss(cls_representation(encoded), model.fusion_config)


def randomize_parameters(model: WsdModel, seed: int, scale: float = 0.2) -> None:
    """Overwrite every parameter with seeded normal draws of the given scale.

    The training initializer leaves embedding rows nearly collapsed, which
    makes the loss surface extremely curved right at init; gradient checks
    run at these well-scaled random points instead, where central
    differences at h=1e-4 are far from their truncation limit.
    """
    rng = np.random.default_rng(seed)
    for _, tensor in model.named_parameters():
        tensor.data = rng.normal(scale=scale, size=tensor.shape)


def flat_parameter_vector(model: WsdModel) -> np.ndarray:
    """All parameters concatenated into one float64 vector (named order)."""
    return np.concatenate([t.data.ravel() for t in model.parameters()])


def bind_flat(model: WsdModel, flat: Tensor) -> WsdModel:
    """A structural copy of ``model`` whose parameters are carved out of ``flat``.

    Gradients of anything computed through the copy flow back to ``flat``,
    which is what the whole-model finite-difference check needs.
    """
    offset = 0
    carved: list[Tensor] = []
    for tensor in model.parameters():
        carved.append(T.reshape(T.segment(flat, offset, offset + tensor.size), tensor.shape))
        offset += tensor.size
    if offset != flat.size:
        raise ConfigError(f"flat vector has {flat.size} entries, model needs {offset}")
    supply = iter(carved)
    return WsdModel(
        context_config=model.context_config,
        gloss_config=model.gloss_config,
        fusion_config=model.fusion_config,
        vocab=model.vocab,
        context=rebind_encoder(model.context, supply),
        gloss=rebind_encoder(model.gloss, supply),
        fusion=rebind_fusion(model.fusion, supply),
    )
