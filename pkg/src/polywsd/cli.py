"""Command-line entry point: train, predict, eval, bench, gradcheck, baseline, synth."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    build_vocab,
    load_corpus,
    load_inventory,
    save_corpus,
    save_gold_keys,
    save_inventory,
    save_predictions,
)
from .encoder import EncoderConfig
from .errors import DataError, PolyWsdError
from .evaluation import compare_costs, config_fingerprint, save_metrics, score_f1
from .fusion import FusionConfig
from .model import build_model, randomize_parameters
from .predict import first_sense_predictor, mfs_predictor, predict_corpus
from .synthetic import gold_keys, synthetic_corpus
from .training import (
    MODE_ALL_CANDIDATES,
    MODE_CONTRASTIVE,
    MODES,
    Adam,
    TrainConfig,
    check_bcl_gradients,
    make_batches,
    train,
)

DEFAULT_CONFIG = {
    "encoder": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_seq_len": 16},
    "fusion": {"poly_m": 2, "n_heads": 2},
    "train": {"batch_size": 8, "epochs": 20, "learning_rate": 1e-3, "min_freq": 1},
}


def _load_config(path) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    for section in ("encoder", "fusion", "train"):
        merged[section].update(config.get(section, {}))
    return merged


def _file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _build_world(args, config):
    corpus = load_corpus(args.corpus)
    inventory = load_inventory(args.inventory)
    vocab = build_vocab(corpus, inventory, min_freq=config["train"].get("min_freq", 1))
    encoder_section = dict(config["encoder"])
    encoder_section.pop("vocab_size", None)
    encoder_config = EncoderConfig(vocab_size=vocab.size, **encoder_section)
    fusion_config = FusionConfig(d_model=encoder_config.d_model, **config["fusion"])
    train_section = {
        k: v for k, v in config["train"].items() if k not in ("min_freq",) and v is not None
    }
    train_config = TrainConfig(seed=args.seed, **train_section)
    fingerprint = config_fingerprint(
        asdict(encoder_config),
        asdict(fusion_config),
        {k: v for k, v in asdict(train_config).items()},
        _file_digest(args.corpus),
        _file_digest(args.inventory),
    )
    return corpus, inventory, vocab, encoder_config, fusion_config, train_config, fingerprint


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    corpus, inventory, vocab, enc_cfg, fus_cfg, train_cfg, fingerprint = _build_world(args, config)
    model = build_model(enc_cfg, enc_cfg, fus_cfg, vocab, seed=train_cfg.seed)
    optimizer = Adam.from_config(model.parameters(), train_cfg)
    metrics = train(
        model,
        optimizer,
        corpus,
        inventory,
        train_cfg,
        mode=args.mode,
        fingerprint=fingerprint,
        device_count=args.device_count,
    )
    steps = len(metrics.records)
    save_checkpoint(args.out, model, optimizer, seed=train_cfg.seed, step=steps)
    metrics_path = args.metrics if args.metrics else f"{args.out}.metrics.jsonl"
    save_metrics(metrics_path, metrics)
    final_loss = metrics.records[-1].loss if metrics.records else float("nan")
    print(
        f"trained {steps} steps ({args.mode}); final loss {final_loss:.6f}; "
        f"context forwards {metrics.context_forwards}, gloss forwards {metrics.gloss_forwards}; "
        f"wall {metrics.wall_seconds:.2f}s; checkpoint -> {args.out}"
    )
    return 0


def _cmd_predict(args) -> int:
    loaded = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.corpus)
    inventory = load_inventory(args.inventory)
    predictions = predict_corpus(corpus, inventory, loaded.model)
    out = {}
    for pred in predictions:
        if pred.instance_id in out:
            raise DataError(f"duplicate instance id {pred.instance_id!r} in corpus")
        out[pred.instance_id] = pred.sense_id
    save_predictions(args.out, out)
    print(f"wrote {len(out)} predictions -> {args.out}")
    return 0


def _format_report(report) -> str:
    lines = [
        f"gold {report.counts.total_gold}, attempted {report.counts.attempted}, "
        f"correct {report.counts.correct}",
        f"precision {report.precision:.6f}",
        f"recall {report.recall:.6f}",
        f"micro_f1 {report.micro_f1:.6f}",
    ]
    for pos, f1 in report.per_pos.items():
        counts = report.per_pos_counts[pos]
        lines.append(f"{pos} f1 {f1:.6f} ({counts.correct}/{counts.total_gold})")
    return "\n".join(lines)


def _cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus) if args.corpus else None
    report = score_f1(args.predictions, args.gold, corpus)
    print(_format_report(report))
    if args.out:
        payload = {
            "micro_f1": report.micro_f1,
            "precision": report.precision,
            "recall": report.recall,
            "counts": asdict(report.counts),
            "per_pos": report.per_pos,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config(args.config)
    corpus, inventory, vocab, enc_cfg, fus_cfg, train_cfg, fingerprint = _build_world(args, config)
    os.makedirs(args.out_dir, exist_ok=True)
    runs = {}
    for mode in (MODE_CONTRASTIVE, MODE_ALL_CANDIDATES):
        model = build_model(enc_cfg, enc_cfg, fus_cfg, vocab, seed=train_cfg.seed)
        optimizer = Adam.from_config(model.parameters(), train_cfg)
        metrics = train(
            model,
            optimizer,
            corpus,
            inventory,
            train_cfg,
            mode=mode,
            fingerprint=fingerprint,
            device_count=args.device_count,
        )
        save_metrics(os.path.join(args.out_dir, f"metrics_{mode}.jsonl"), metrics)
        save_checkpoint(
            os.path.join(args.out_dir, f"model_{mode}.ckpt"),
            model,
            optimizer,
            seed=train_cfg.seed,
            step=len(metrics.records),
        )
        runs[mode] = metrics
    comparison = compare_costs(runs[MODE_CONTRASTIVE], runs[MODE_ALL_CANDIDATES])
    for report in (comparison.run, comparison.baseline):
        print(
            f"{report.mode}: gloss forwards {report.gloss_forwards}, "
            f"context forwards {report.context_forwards}, "
            f"wall {report.wall_seconds:.2f}s, device-hours {report.device_hours:.6f}"
        )
    print(f"gloss-forward reduction: {comparison.gloss_forward_reduction:.4%}")
    print(f"wall-clock reduction: {comparison.wall_clock_reduction:.4%}")
    return 0


def _cmd_gradcheck(args) -> int:
    config = _load_config(args.config)
    encoder_section = dict(config["encoder"])
    if args.config is None:
        # small default so the check stays quick
        encoder_section.update({"d_model": 8, "d_ff": 16, "max_seq_len": 12})
    corpus, inventory = synthetic_corpus(
        n_lemmas=3, senses_per_lemma=2, n_instances=6, seed=args.seed
    )
    vocab = build_vocab(corpus, inventory, min_freq=1)
    encoder_section.pop("vocab_size", None)
    enc_cfg = EncoderConfig(vocab_size=vocab.size, **encoder_section)
    fus_cfg = FusionConfig(d_model=enc_cfg.d_model, **config["fusion"])
    model = build_model(enc_cfg, enc_cfg, fus_cfg, vocab, seed=args.seed)
    randomize_parameters(model, seed=args.seed)
    batch = make_batches(corpus, inventory, batch_size=3, seed=args.seed, epoch=0)[0]
    error = check_bcl_gradients(batch, model, h=1e-4)
    n_params = sum(t.size for t in model.parameters())
    print(f"checked {n_params} parameters; max relative error {error:.3e} (threshold 1e-4)")
    if error >= 1e-4:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    print("gradient check passed")
    return 0


def _cmd_baseline(args) -> int:
    corpus = load_corpus(args.corpus)
    inventory = load_inventory(args.inventory)
    if args.method == "mfs":
        train_path = args.train_corpus if args.train_corpus else args.corpus
        predictor = mfs_predictor(load_corpus(train_path), inventory)
    else:
        predictor = first_sense_predictor(inventory)
    out = {}
    for inst in corpus:
        if inst.id in out:
            raise DataError(f"duplicate instance id {inst.id!r} in corpus")
        out[inst.id] = predictor(inst).sense_id
    save_predictions(args.out, out)
    print(f"wrote {len(out)} {args.method} predictions -> {args.out}")
    return 0


def _cmd_synth(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    corpus, inventory = synthetic_corpus(
        n_lemmas=args.lemmas,
        senses_per_lemma=args.senses,
        n_instances=args.instances,
        seed=args.seed,
    )
    save_corpus(os.path.join(args.out_dir, "corpus.jsonl"), corpus)
    save_inventory(os.path.join(args.out_dir, "inventory.jsonl"), inventory)
    save_gold_keys(os.path.join(args.out_dir, "gold.key"), gold_keys(corpus))
    print(
        f"wrote {len(corpus)} instances over {args.lemmas} lemmas "
        f"({args.senses} senses each) -> {args.out_dir}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polywsd",
        description="Train, run, and evaluate the gloss-matching sense disambiguator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--inventory", required=True)
    p_train.add_argument("--config", default=None, help="JSON config file")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument(
        "--metrics", default=None,
        help="metrics log output path (default: <checkpoint>.metrics.jsonl)",
    )
    p_train.add_argument("--mode", choices=MODES, default=MODE_CONTRASTIVE)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--device-count", type=int, default=1)
    p_train.set_defaults(handler=_cmd_train)

    p_predict = sub.add_parser("predict", help="predict senses with a trained checkpoint")
    p_predict.add_argument("--checkpoint", required=True)
    p_predict.add_argument("--corpus", required=True)
    p_predict.add_argument("--inventory", required=True)
    p_predict.add_argument("--out", required=True)
    p_predict.set_defaults(handler=_cmd_predict)

    p_eval = sub.add_parser("eval", help="score predictions against gold keys")
    p_eval.add_argument("--predictions", required=True)
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--corpus", default=None, help="corpus for the per-POS breakdown")
    p_eval.add_argument("--out", default=None, help="optional JSON report path")
    p_eval.set_defaults(handler=_cmd_eval)

    p_bench = sub.add_parser("bench", help="train both regimes and compare costs")
    p_bench.add_argument("--corpus", required=True)
    p_bench.add_argument("--inventory", required=True)
    p_bench.add_argument("--config", default=None)
    p_bench.add_argument("--out-dir", required=True)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--device-count", type=int, default=1)
    p_bench.set_defaults(handler=_cmd_bench)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the full loss")
    p_grad.add_argument("--config", default=None)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(handler=_cmd_gradcheck)

    p_base = sub.add_parser("baseline", help="run the mfs or first-sense baseline")
    p_base.add_argument("--method", choices=("mfs", "s1"), required=True)
    p_base.add_argument("--corpus", required=True, help="corpus to predict on")
    p_base.add_argument("--train-corpus", default=None, help="labelled corpus for mfs counts")
    p_base.add_argument("--inventory", required=True)
    p_base.add_argument("--out", required=True)
    p_base.set_defaults(handler=_cmd_baseline)

    p_synth = sub.add_parser("synth", help="write a synthetic corpus, inventory, and gold keys")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--lemmas", type=int, default=10)
    p_synth.add_argument("--senses", type=int, default=3)
    p_synth.add_argument("--instances", type=int, default=50)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(handler=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (PolyWsdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
