"""Versioned binary checkpoints with bit-exact tensor round trips.

Layout (all integers little-endian):

    magic   4 bytes  b"PWCK"
    version u32
    hlen    u64      length of the JSON header
    header  hlen bytes of UTF-8 JSON: configs, vocab tokens (id order),
                     run seed, step counter, parameter manifest
                     (names + shapes), optional optimizer hyperparameters
    blobs            one u64 length + raw little-endian float64 payload per
                     parameter in manifest order, then (if optimizer state
                     is present) the first- and second-moment blobs in the
                     same order

Writes go to a temp file in the target directory and are renamed into
place, so a crash never leaves a half-written checkpoint at the final path.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .data import Vocab
from .encoder import EncoderConfig
from .errors import CheckpointError
from .fusion import FusionConfig
from .model import WsdModel, build_model
from .training import Adam

MAGIC = b"PWCK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: WsdModel
    optimizer: Adam | None
    seed: int
    step: int


def _tensor_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(
    path, model: WsdModel, optimizer: Adam | None, seed: int, step: int
) -> None:
    named = model.named_parameters()
    header = {
        "context_config": asdict(model.context_config),
        "gloss_config": asdict(model.gloss_config),
        "fusion_config": asdict(model.fusion_config),
        "vocab": model.vocab.tokens_in_id_order(),
        "seed": int(seed),
        "step": int(step),
        "params": [
            {"name": name, "shape": list(tensor.shape)} for name, tensor in named
        ],
        "optimizer": None
        if optimizer is None
        else {
            "learning_rate": optimizer.learning_rate,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "t": optimizer.t,
        },
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            for _, tensor in named:
                blob = _tensor_bytes(tensor.data)
                fh.write(struct.pack("<Q", len(blob)))
                fh.write(blob)
            if optimizer is not None:
                for state in (optimizer.m, optimizer.v):
                    for arr in state:
                        blob = _tensor_bytes(arr)
                        fh.write(struct.pack("<Q", len(blob)))
                        fh.write(blob)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_blob(fh, shape, what: str) -> np.ndarray:
    (nbytes,) = struct.unpack("<Q", _read_exact(fh, 8, f"{what} length"))
    expected = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
    if nbytes != expected:
        raise CheckpointError(f"{what}: blob of {nbytes} bytes, expected {expected}")
    raw = _read_exact(fh, nbytes, what)
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} is incompatible with "
                f"supported version {FORMAT_VERSION}"
            )
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

        try:
            context_config = EncoderConfig(**header["context_config"])
            gloss_config = EncoderConfig(**header["gloss_config"])
            fusion_config = FusionConfig(**header["fusion_config"])
            vocab = Vocab.from_tokens(header["vocab"])
            manifest = header["params"]
            seed = int(header["seed"])
            step = int(header["step"])
            optimizer_header = header["optimizer"]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"incomplete checkpoint header: {exc}") from None

        model = build_model(context_config, gloss_config, fusion_config, vocab, seed=seed)
        named = model.named_parameters()
        if [entry["name"] for entry in manifest] != [name for name, _ in named]:
            raise CheckpointError("checkpoint parameter manifest does not match the model")
        for entry, (name, tensor) in zip(manifest, named):
            arr = _read_blob(fh, tuple(entry["shape"]), f"parameter {name}")
            if arr.shape != tensor.shape:
                raise CheckpointError(
                    f"parameter {name}: stored shape {arr.shape}, model has {tensor.shape}"
                )
            tensor.data = np.ascontiguousarray(arr)

        optimizer = None
        if optimizer_header is not None:
            optimizer = Adam(
                model.parameters(),
                learning_rate=optimizer_header["learning_rate"],
                beta1=optimizer_header["beta1"],
                beta2=optimizer_header["beta2"],
                eps=optimizer_header["eps"],
            )
            optimizer.t = int(optimizer_header["t"])
            optimizer.m = [
                np.ascontiguousarray(_read_blob(fh, t.shape, f"first moment of {n}"))
                for n, t in named
            ]
            optimizer.v = [
                np.ascontiguousarray(_read_blob(fh, t.shape, f"second moment of {n}"))
                for n, t in named
            ]
        if fh.read(1):
            raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(model=model, optimizer=optimizer, seed=seed, step=step)
