"""Checkpoint format: bit-exact round trips, version gating, resume parity."""

import struct

import numpy as np
import pytest

from polywsd.checkpoint import FORMAT_VERSION, MAGIC, load_checkpoint, save_checkpoint
from polywsd.errors import CheckpointError
from polywsd.synthetic import synthetic_corpus
from polywsd.training import Adam, TrainConfig, train

from conftest import tiny_model


def _trained_world(steps=3):
    corpus, inventory = synthetic_corpus(n_lemmas=3, senses_per_lemma=2, n_instances=10, seed=2)
    model = tiny_model(corpus, inventory, seed=6)
    config = TrainConfig(batch_size=4, epochs=4, learning_rate=1e-3, seed=6)
    optimizer = Adam.from_config(model.parameters(), config)
    train(model, optimizer, corpus, inventory, config, max_steps=steps)
    return corpus, inventory, model, optimizer, config


class TestRoundTrip:
    def test_tensors_bytewise_equal(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, optimizer, seed=config.seed, step=3)
        loaded = load_checkpoint(path)
        assert loaded.seed == config.seed and loaded.step == 3
        for (name_a, t_a), (name_b, t_b) in zip(
            model.named_parameters(), loaded.model.named_parameters()
        ):
            assert name_a == name_b
            assert t_a.data.tobytes() == t_b.data.tobytes()
        assert loaded.model.vocab.token_to_id == model.vocab.token_to_id

    def test_optimizer_state_bit_exact(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, optimizer, seed=config.seed, step=3)
        loaded = load_checkpoint(path)
        assert loaded.optimizer.t == optimizer.t
        for a, b in zip(optimizer.m, loaded.optimizer.m):
            assert a.tobytes() == b.tobytes()
        for a, b in zip(optimizer.v, loaded.optimizer.v):
            assert a.tobytes() == b.tobytes()

    def test_save_is_deterministic(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, model, optimizer, seed=config.seed, step=3)
        save_checkpoint(p2, model, optimizer, seed=config.seed, step=3)
        assert p1.read_bytes() == p2.read_bytes()

    def test_without_optimizer(self, tmp_path):
        _, _, model, _, config = _trained_world()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, None, seed=config.seed, step=0)
        assert load_checkpoint(path).optimizer is None


class TestRejection:
    def test_version_bump_rejected(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, optimizer, seed=config.seed, step=3)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(path)
        assert "version" in str(err.value)

    def test_truncated_file_rejected(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, model, optimizer, seed=config.seed, step=3)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(path)
        assert "truncated" in str(err.value)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_no_temp_files_left_behind(self, tmp_path):
        _, _, model, optimizer, config = _trained_world()
        save_checkpoint(tmp_path / "model.ckpt", model, optimizer, seed=config.seed, step=3)
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert leftovers == []
        assert MAGIC == (tmp_path / "model.ckpt").read_bytes()[:4]


class TestResume:
    def test_resume_matches_uninterrupted_next_step_loss(self, tmp_path):
        corpus, inventory = synthetic_corpus(n_lemmas=3, senses_per_lemma=2, n_instances=10, seed=2)
        config = TrainConfig(batch_size=4, epochs=4, learning_rate=1e-3, seed=6)

        # run A: straight through k+1 steps
        model_a = tiny_model(corpus, inventory, seed=6)
        opt_a = Adam.from_config(model_a.parameters(), config)
        metrics_a = train(model_a, opt_a, corpus, inventory, config, max_steps=4)
        uninterrupted_loss = metrics_a.records[3].loss

        # run B: k steps, checkpoint, reload, one more step
        model_b = tiny_model(corpus, inventory, seed=6)
        opt_b = Adam.from_config(model_b.parameters(), config)
        train(model_b, opt_b, corpus, inventory, config, max_steps=3)
        path = tmp_path / "resume.ckpt"
        save_checkpoint(path, model_b, opt_b, seed=config.seed, step=3)
        loaded = load_checkpoint(path)
        metrics_b = train(
            loaded.model, loaded.optimizer, corpus, inventory, config,
            start_step=loaded.step, max_steps=4,
        )
        assert len(metrics_b.records) == 1
        resumed_loss = metrics_b.records[0].loss
        assert np.float64(resumed_loss).tobytes() == np.float64(uninterrupted_loss).tobytes()
