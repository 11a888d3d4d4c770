"""``mtlue`` command line: data preparation, training, evaluation and analyses.

Every subcommand writes its outputs plus a manifest (config hash, input
hashes, library versions). Failures exit nonzero with a single stderr line
``mtlue: error[<category>]: <message>``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import AnalysisError, crossgroup_grid, genre_feature_sets, overlap_matrix
from .baselines import UserEmbeddings
from .classify import ClassifyError
from .cluster import ClusterError, evaluate_clustering
from .config import ConfigError, RunConfig, resolve
from .corpus import (
    CorpusError,
    anonymize,
    generate_synthetic,
    load_reviews,
    preprocess,
    save_reviews,
)
from .pipeline import PERSONALIZE_FIXTURE, classify_experiment, user_embeddings
from .sgns import NumericError
from .store import EmbeddingFileError, load_embeddings, save_embeddings
from .trainer import SamplingError, train
from .vocab import VocabError, build_entity_index, build_vocab

log = logging.getLogger("mtlue")

# exception type -> (category, exit status)
ERROR_CATEGORIES = (
    (ConfigError, "config", 2),
    (CorpusError, "input", 3),
    (EmbeddingFileError, "format", 4),
    (VocabError, "format", 4),
    (NumericError, "numeric", 5),
    (SamplingError, "sampling", 5),
    (ClusterError, "evaluation", 6),
    (ClassifyError, "evaluation", 6),
    (AnalysisError, "evaluation", 6),
    (OSError, "io", 7),
)


class JsonLines(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "logger": record.name, "message": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, sort_keys=True)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import numba
    import scipy
    import sklearn

    return {"mtlue": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "numba": numba.__version__}


def write_manifest(path, command: str, cfg: RunConfig, inputs, outputs) -> None:
    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
        "versions": _versions(),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _existing(cfg: RunConfig, name: str) -> Path:
    cfg.require(name)
    p = Path(getattr(cfg, name))
    if not p.is_file():
        raise ConfigError(f"{name} path {p} does not exist")
    return p


def _out_file(cfg: RunConfig) -> Path:
    cfg.require("output")
    p = Path(cfg.output)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _out_dir(cfg: RunConfig) -> Path:
    cfg.require("output")
    p = Path(cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _file_manifest(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _load_prepared(path: Path, cfg: RunConfig):
    """Reviews as written by ``ingest`` or ``synth``; preprocessing is idempotent."""
    return preprocess(load_reviews(path, cfg.dataset_kind, strict=not cfg.lenient))


def _user_vectors(cfg: RunConfig) -> UserEmbeddings:
    f = load_embeddings(_existing(cfg, "embeddings"))
    if f.kind != "user":
        raise ConfigError(f"embeddings file holds {f.kind} vectors, expected user vectors")
    return UserEmbeddings(cfg.label or "mtl", f.ids, f.vectors)


def _progress_writer(fh):
    def emit(record):
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        log.info("epoch %d %s mean_loss=%.6f", record["epoch"], record["task"], record["mean_loss"],
                 extra={"fields": record})
    return emit


def cmd_ingest(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "input")
    cfg.require("salt")
    raw = load_reviews(src, cfg.dataset_kind, strict=not cfg.lenient)
    if raw.n_skipped:
        log.warning("skipped %d malformed records", raw.n_skipped, extra={"fields": {"skipped": raw.n_skipped}})
    out = _out_file(cfg)
    save_reviews(anonymize(preprocess(raw), cfg.salt), out)
    write_manifest(_file_manifest(out), "ingest", cfg, [src], [out])


def cmd_synth(cfg: RunConfig, args) -> None:
    kwargs = dict(PERSONALIZE_FIXTURE) if cfg.fixture == "personalize" else {}
    for name in ("n_users", "n_items", "n_genres", "docs_per_user", "vocab_per_genre", "noise_rate"):
        if getattr(cfg, name) is not None:
            kwargs[name] = getattr(cfg, name)
    seed = cfg.seed if cfg.seed is not None else 42
    out = _out_file(cfg)
    save_reviews(generate_synthetic(seed=seed, **kwargs), out)
    write_manifest(_file_manifest(out), "synth", cfg, [], [out])


def cmd_train(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    tc = cfg.train_config()
    reviews = _load_prepared(src, cfg)
    out = _out_dir(cfg)
    vocab = build_vocab(reviews)
    index = build_entity_index(reviews, vocab, tc.n_user_vocab)
    with open(out / "progress.jsonl", "w", encoding="utf-8") as fh:
        res = train(reviews, vocab, index, tc, _progress_writer(fh))
    vocab.save(out / "vocab.txt")
    index.save(out / "entities.txt")
    save_embeddings("word", vocab.id_to_token, res.word.vectors, out / "word.vec")
    save_embeddings("user", index.user_ids, res.user.vectors, out / "user.vec")
    save_embeddings("item", index.item_ids, res.item.vectors, out / "item.vec")
    outputs = [out / n for n in ("progress.jsonl", "vocab.txt", "entities.txt", "word.vec", "user.vec", "item.vec")]
    write_manifest(out / "manifest.json", "train", cfg, [src], outputs)


def cmd_train_baseline(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    out = _out_dir(cfg)
    with open(out / "progress.jsonl", "w", encoding="utf-8") as fh:
        emb, _ = user_embeddings(args.method, reviews, cfg.train_config(), _progress_writer(fh))
    save_embeddings("user", emb.user_ids, emb.vectors, out / "user.vec")
    write_manifest(out / "manifest.json", f"train-baseline {args.method}", cfg, [src],
                   [out / "user.vec", out / "progress.jsonl"])


def cmd_eval_cluster(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    emb = _user_vectors(cfg)
    index = build_entity_index(reviews, build_vocab(reviews))
    report = evaluate_clustering(emb, index, cfg.ks, cfg.eval_seed)
    out = _out_file(cfg)
    out.write_text(report.to_text(), encoding="utf-8")
    write_manifest(_file_manifest(out), "eval-cluster", cfg, [src, Path(cfg.embeddings)], [out])


def cmd_eval_classify(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    inputs = [src]
    emb = None
    if args.mode == "personalized" and cfg.embeddings is not None:
        emb = _user_vectors(cfg)
        inputs.append(Path(cfg.embeddings))
    tc = cfg.train_config()
    outcome = classify_experiment(reviews, cfg.eval_seed, tc, emb, args.mode == "personalized",
                                  cfg.split_ratios, cfg.max_features, average=cfg.average)
    report = outcome.personalized if args.mode == "personalized" else outcome.plain
    report.dataset = cfg.label or Path(src).stem
    out = _out_file(cfg)
    out.write_text(report.to_text(), encoding="utf-8")
    write_manifest(_file_manifest(out), f"eval-classify {args.mode}", cfg, inputs, [out])


def cmd_analyze_overlap(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    matrix = overlap_matrix(genre_feature_sets(reviews, cfg.top_k, cfg.mi_target))
    out = _out_file(cfg)
    out.write_text(matrix.to_csv(), encoding="utf-8")
    write_manifest(_file_manifest(out), "analyze-overlap", cfg, [src], [out])


def cmd_analyze_crossgroup(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    matrix = crossgroup_grid(reviews, cfg.eval_seed, max_features=cfg.max_features, average=cfg.average)
    out = _out_file(cfg)
    out.write_text(matrix.to_csv(), encoding="utf-8")
    write_manifest(_file_manifest(out), "analyze-crossgroup", cfg, [src], [out])


def project_2d(vectors: np.ndarray) -> np.ndarray:
    """Mean-centred coordinates on the top two principal components.

    Each component's sign is fixed so its largest-magnitude loading is
    positive, which keeps the output deterministic.
    """
    X = np.asarray(vectors, dtype=np.float64)
    X = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    comps = vt[:2]
    signs = np.sign(comps[np.arange(len(comps)), np.argmax(np.abs(comps), axis=1)])
    comps = comps * np.where(signs == 0, 1.0, signs)[:, None]
    out = X @ comps.T
    if out.shape[1] < 2:
        out = np.hstack([out, np.zeros((len(out), 2 - out.shape[1]))])
    return out


def cmd_export_2d(cfg: RunConfig, args) -> None:
    src = _existing(cfg, "reviews")
    reviews = _load_prepared(src, cfg)
    emb = _user_vectors(cfg)
    index = build_entity_index(reviews, build_vocab(reviews))
    coords = project_2d(emb.vectors)
    lines = ["user_id,pc1,pc2,genres"]
    for u, (x, y) in zip(emb.user_ids, coords):
        genres = "|".join(sorted(index.user_genres(index.user_to_id[u]))) if u in index.user_to_id else ""
        lines.append(f"{u},{x:.9g},{y:.9g},{genres}")
    out = _out_file(cfg)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(_file_manifest(out), "export-2d", cfg, [src, Path(cfg.embeddings)], [out])


COMMANDS = {
    "ingest": (cmd_ingest, "load, preprocess and anonymize a raw review file"),
    "synth": (cmd_synth, "write a seeded synthetic corpus"),
    "train": (cmd_train, "train word, user and item vectors jointly"),
    "train-baseline": (cmd_train_baseline, "train baseline user vectors"),
    "eval-cluster": (cmd_eval_cluster, "spectral clustering scored by pairwise genre F1"),
    "eval-classify": (cmd_eval_classify, "sentiment classification, plain or personalized"),
    "analyze-overlap": (cmd_analyze_overlap, "per-genre top-feature overlap matrix"),
    "analyze-crossgroup": (cmd_analyze_crossgroup, "train-on-one-genre, test-on-another F1 grid"),
    "export-2d": (cmd_export_2d, "2-D principal-component projection of user vectors"),
}
EXPORT_2D_HELP = (
    "Project user vectors onto their top two principal components after mean-centring and "
    "write user_id,pc1,pc2,genres as CSV. This is a linear projection, not t-SNE; feed the "
    "CSV to any plotting tool (or run t-SNE there) to visualise genre separation."
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (JSON or key = value lines)")
    common.add_argument("--log-level", default="warning", choices=["debug", "info", "warning", "error"])
    for f in fields(RunConfig):
        if f.name == "config_version":
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "lenient":
            common.add_argument(flag, action="store_const", const="true", default=None, dest=f.name,
                                help="skip malformed records instead of failing")
        else:
            common.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())

    parser = argparse.ArgumentParser(prog="mtlue", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mtlue {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        kwargs = {"help": help_text, "parents": [common]}
        if name == "export-2d":
            kwargs["description"] = EXPORT_2D_HELP
        p = sub.add_parser(name, **kwargs)
        if name == "train-baseline":
            p.add_argument("method", choices=["word2user", "user2vec", "random"])
        elif name == "eval-classify":
            p.add_argument("mode", choices=["plain", "personalized"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLines())
    log.handlers[:] = [handler]
    log.setLevel(args.log_level.upper())
    log.propagate = False

    cli_values = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}
    try:
        cfg = resolve(args.config, cli_values)
        if cfg.threads > 1:
            log.warning("threads > 1 makes training nondeterministic")
        COMMANDS[args.command][0](cfg, args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one parsable line
        category, status = "internal", 1
        for kind, cat, code in ERROR_CATEGORIES:
            if isinstance(exc, kind):
                category, status = cat, code
                break
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"mtlue: error[{category}]: {message}", file=sys.stderr)
        if category == "internal":
            log.debug("traceback", exc_info=True)
        return status
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
