"""Command-line interface.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .audio import AudioFormatError, read_wav, write_wav
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import MODEL_NAMES, ConfigError, load_config
from .corpus import (SplitSpec, default_split_spec, ingest_corpus, split, synth_fixture,
                     write_fixture)
from .melgan import NonFiniteLossError
from .pipeline import PairCache, file_digest, prepare_pair

log = logging.getLogger("whisperconv")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def write_run_manifest(outdir, command, args, config=None, seed=None):
    import torch

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "args": {k: str(v) for k, v in vars(args).items() if k != "func"},
        "config_hash": config.hash() if config is not None else None,
        "config": config.values if config is not None else None,
        "seed": seed if seed is not None else (config["seed"] if config is not None else None),
        "versions": {"whisperconv": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "torch": torch.__version__},
        "created": datetime.now(timezone.utc).isoformat(),
    }
    path = outdir / f"run_manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _config(args):
    try:
        return load_config(args.config, args.set or ())
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


# fixture ------------------------------------------------------------------

def cmd_fixture(args):
    pairs = synth_fixture(args.speakers, args.utts, args.seed)
    manifest = write_fixture(args.outdir, pairs)
    write_run_manifest(args.outdir, "fixture", args, seed=args.seed)
    print(f"wrote {len(pairs)} pairs and {manifest}")
    return EXIT_OK


# prepare ------------------------------------------------------------------

def _pairs(cfg):
    root, manifest = Path(cfg["paths.corpus_root"]), Path(cfg["paths.manifest"])
    if not manifest.is_absolute() and not manifest.is_file():
        manifest = root / manifest
    if not manifest.is_file():
        raise DataError(f"manifest not found: {manifest}")
    try:
        return root, manifest, ingest_corpus(root, manifest, check_audio=False)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def cmd_prepare(args):
    cfg = _config(args)
    root, manifest, pairs = _pairs(cfg)
    cache = PairCache(cfg.workdir)
    stft, vad = cfg.stft(), cfg.vad()
    feature_keys = {k: v for k, v in cfg.values.items() if k.split(".")[0] in ("stft", "vad", "preprocess")}
    failures, done, skipped = [], 0, 0
    for pair in pairs:
        try:
            fingerprint = json.dumps({"w": file_digest(pair.whispered), "n": file_digest(pair.normal),
                                      "cfg": feature_keys}, sort_keys=True)
            if not args.force and cache.is_current(pair.pair_id, fingerprint):
                skipped += 1
                continue
            w, n = pair.load()
            prepared = prepare_pair(w, n, stft, vad, cfg["preprocess.target_peak"])
            cache.store(pair.pair_id, prepared, fingerprint,
                        {"speaker_id": pair.speaker_id, "utt_id": pair.utt_id, "sex": pair.sex})
            done += 1
        except (AudioFormatError, ValueError, OSError) as exc:
            failures.append((pair.pair_id, str(exc)))
            print(f"FAILED {pair.pair_id}: {exc}", file=sys.stderr)
    write_run_manifest(cfg.workdir, "prepare", args, cfg)
    print(f"prepared {done}, up to date {skipped}, failed {len(failures)}")
    return EXIT_DATA if failures else EXIT_OK


# train --------------------------------------------------------------------

def _training_data(cfg, stft):
    cache = PairCache(cfg.workdir)
    ids = cache.pair_ids()
    if not ids:
        raise DataError(f"no prepared pairs under {cache.root}; run 'prepare' first")
    metas = [json.loads((cache.entry(i) / "meta.json").read_text()) for i in ids]
    test = cfg["split.test_speakers"]
    if test == "auto":
        from .corpus import UtterancePair

        spec = default_split_spec([UtterancePair(m["speaker_id"], m["utt_id"], None, None, m.get("sex", ""))
                                   for m in metas])
    else:
        spec = SplitSpec(tuple(test or ()))
    test_ids = set(spec.test_speakers)
    X, y = [], []
    for pid, meta in zip(ids, metas):
        if meta.get("speaker_id") in test_ids:
            continue
        mel, normal, _ = cache.load(pid, stft)
        X.append(mel)
        y.append(normal)
    if not X:
        raise DataError("training split is empty")
    return X, y


def cmd_train(args):
    cfg = _config(args)
    if args.model not in MODEL_NAMES:
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(MODEL_NAMES)}")
    if args.steps is not None:
        cfg.values["train.n_steps"] = args.steps
    stft = cfg.stft()
    X, y = _training_data(cfg, stft)
    run_dir = cfg.workdir / "runs" / args.model
    run_dir.mkdir(parents=True, exist_ok=True)
    latest = run_dir / "checkpoint_latest.pt"
    log_path = run_dir / "train_log.jsonl"
    if args.resume and latest.is_file():
        est = load_checkpoint(latest)
        est.set_params(n_steps=cfg["train.n_steps"], warm_start=True)
        _truncate_log(log_path, est.step_)
        print(f"resuming {args.model} from step {est.step_}")
    else:
        est = cfg.estimator(args.model)
        log_path.write_text("")
    every = int(cfg["train.checkpoint_every"])
    t0 = time.perf_counter()
    with open(log_path, "a") as fh:
        def callback(model, record):
            fh.write(json.dumps({**record, "wall_time": round(time.perf_counter() - t0, 4)}) + "\n")
            if model.step_ % every == 0 or model.step_ == model.n_steps:
                fh.flush()
                save_checkpoint(run_dir / f"checkpoint_{model.step_:07d}.pt", model)
                save_checkpoint(latest, model)
        try:
            est.fit(X, y, callback=callback)
        except NonFiniteLossError as exc:
            print(f"numerical failure: {exc}; last good checkpoint kept at {latest}", file=sys.stderr)
            return EXIT_NUMERIC
    write_run_manifest(run_dir, "train", args, cfg)
    print(f"trained {args.model} to step {est.step_}; checkpoint {latest}")
    return EXIT_OK


def _truncate_log(path, step):
    if not path.is_file():
        return
    rows = [line for line in path.read_text().splitlines() if line.strip()]
    kept = [r for r in rows if json.loads(r)["step"] <= step]
    path.write_text("".join(r + "\n" for r in kept))


# convert ------------------------------------------------------------------

def cmd_convert(args):
    try:
        est = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise DataError(str(exc)) from exc
    if args.vocoder_model:
        from .vocoder import TorchScriptVocoder

        est.set_params(vocoder=TorchScriptVocoder(args.vocoder_model, est._stft()))
    clip = read_wav(args.wav_in)
    out = est.convert(clip)
    Path(args.wav_out).parent.mkdir(parents=True, exist_ok=True)
    write_wav(args.wav_out, out)
    write_run_manifest(Path(args.wav_out).parent, "convert", args, seed=None)
    print(f"wrote {args.wav_out} ({out.duration:.3f} s)")
    return EXIT_OK


# evaluate -----------------------------------------------------------------

def _read_rows(path, required):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if rows and not set(required) <= set(rows[0]):
        raise DataError(f"{path} needs columns {', '.join(required)}")
    return rows


def cmd_evaluate(args):
    from .metrics import evaluate_testset, write_report

    if args.pairs:
        rows = _read_rows(args.pairs, ("utt_id", "converted_path", "normal_path"))
        base = Path(args.pairs).parent
        items = [(r["utt_id"], base / r["converted_path"], base / r["normal_path"]) for r in rows]
    elif args.converted_dir and args.normal_dir:
        items = [(p.stem, p, Path(args.normal_dir) / p.name)
                 for p in sorted(Path(args.converted_dir).glob("*.wav"))]
    else:
        raise UsageError("give --pairs or both --converted-dir and --normal-dir")
    if not items:
        raise DataError("nothing to evaluate")
    loaded = ((u, read_wav(c), read_wav(n)) for u, c, n in items)
    rows, report = evaluate_testset(loaded)
    csv_path, json_path = write_report(rows, report, args.out)
    write_run_manifest(args.out, "evaluate", args)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


# embed-eval ---------------------------------------------------------------

def _backend(args):
    from .embed_eval import SpectralStubBackend, Wav2Vec2Backend

    if args.backend == "stub":
        return SpectralStubBackend(seed=args.seed)
    if args.backend == "wav2vec2":
        if not args.model_path:
            raise UsageError("--backend wav2vec2 needs --model-path")
        try:
            return Wav2Vec2Backend(args.model_path)
        except (ImportError, FileNotFoundError) as exc:
            raise DataError(str(exc)) from exc
    raise UsageError(f"unknown backend {args.backend!r}")


def cmd_embed_eval(args):
    from .embed_eval import (distance_report, embed, group_by_source, project_2d,
                             write_distance_csv, write_embedding_cache, write_projection_csv)

    rows = _read_rows(args.list, ("utt_id", "source", "path"))
    base = Path(args.list).parent
    backend = _backend(args)
    vectors = [embed(read_wav(base / r["path"]), backend, args.layer, args.pool, r["source"], r["utt_id"])
               for r in rows]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_embedding_cache(out / "embeddings.bin", vectors)
    summary, dist_rows = distance_report(*group_by_source(vectors), mode=args.mode)
    write_distance_csv(out / "distances.csv", dist_rows)
    (out / "distance_summary.json").write_text(json.dumps(summary, indent=2))
    try:
        coords = project_2d(vectors, args.perplexity, args.seed)
        write_projection_csv(out / "projection.csv", coords, vectors)
    except ValueError as exc:
        print(f"projection skipped: {exc}", file=sys.stderr)
    write_run_manifest(out, "embed-eval", args, seed=args.seed)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# plot ---------------------------------------------------------------------

def cmd_plot(args):
    from . import plots

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "pitch":
        from .metrics import extract_f0

        if not args.normal:
            raise UsageError("pitch plot needs --normal")
        tracks = {"normal": extract_f0(read_wav(args.normal))}
        for item in args.converted or ():
            label, _, path = item.partition("=")
            if not path:
                label, path = Path(item).stem, item
            tracks[label] = extract_f0(read_wav(path))
        plots.pitch_plot(tracks, out / "pitch.png", out / "pitch.csv", args.title)
    else:
        if args.projection:
            coords, sources, utts = plots.read_projection_csv(args.projection)
        elif args.embeddings:
            from .embed_eval import project_2d, read_embedding_cache

            vectors = read_embedding_cache(args.embeddings)
            coords = project_2d(vectors, args.perplexity, args.seed)
            sources, utts = [v.source for v in vectors], [v.utt_id for v in vectors]
        else:
            raise UsageError("tsne plot needs --projection or --embeddings")
        plots.projection_plot(coords, sources, out / "tsne.png", out / "tsne.csv", utts)
    write_run_manifest(out, "plot", args)
    print(f"wrote plot to {out}")
    return EXIT_OK


# entry point ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="whisperconv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="YAML file of dotted keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        return p

    p = sub.add_parser("fixture", help="write a synthetic paired corpus")
    p.add_argument("outdir")
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--utts", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixture)

    p = with_config(sub.add_parser("prepare", help="trim, extract features and align all pairs"))
    p.add_argument("--force", action="store_true", help="recompute up-to-date entries")
    p.set_defaults(func=cmd_prepare)

    p = with_config(sub.add_parser("train", help="train a conversion model on the prepared cache"))
    p.add_argument("--model", required=True, help=", ".join(MODEL_NAMES))
    p.add_argument("--steps", type=int, help="total training steps (overrides train.n_steps)")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert a whispered WAV")
    p.add_argument("checkpoint")
    p.add_argument("wav_in")
    p.add_argument("wav_out")
    p.add_argument("--vocoder-model", help="TorchScript vocoder for sc-vqvae+wg checkpoints")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("evaluate", help="F0 RMSE / correlation and MCD report")
    p.add_argument("--pairs", help="CSV with utt_id, converted_path, normal_path")
    p.add_argument("--converted-dir")
    p.add_argument("--normal-dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed-eval", help="embedding cosine distances and 2-D projection")
    p.add_argument("--list", required=True, help="CSV with utt_id, source, path")
    p.add_argument("--backend", default="stub", choices=["stub", "wav2vec2"])
    p.add_argument("--model-path")
    p.add_argument("--layer", type=int, default=2)
    p.add_argument("--pool", default="mean", choices=["mean", "max"])
    p.add_argument("--mode", default="matched", choices=["matched", "all_pairs"])
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed_eval)

    p = sub.add_parser("plot", help="pitch-contour or embedding-projection figure")
    p.add_argument("kind", choices=["pitch", "tsne"])
    p.add_argument("--normal")
    p.add_argument("--converted", action="append", metavar="LABEL=WAV")
    p.add_argument("--title")
    p.add_argument("--projection")
    p.add_argument("--embeddings")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    warnings.simplefilter("default")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, AudioFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
