"""Command-line front end: ingest, assoc, train, score, sweep, shift, rerun.

Every command writes a run manifest next to its primary output. The manifest
records the fully resolved argument vector, so ``xpasc rerun MANIFEST``
replays the run.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .association import Method, build_matrices, load_matrices, save_matrices
from .corpus import (
    DATA_FILE,
    META_FILE,
    CorpusError,
    count_cooccurrences,
    filter_unmatched,
    load_corpus,
    save_corpus,
)
from .models import (
    ABSTAIN,
    CheckpointError,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    majority_vote_labels,
    nll,
    save_checkpoint,
    train_bow_softmax,
    train_knowman,
)
from .score import (
    ConfigurationError,
    lambda_sweep,
    shift_analysis,
    training_accuracy,
    xpasc,
    xpasc_scaled,
)

log = logging.getLogger("xpasc")

MANIFEST_NAME = "manifest.json"


class CommandError(Exception):
    """A run that cannot produce its output; reported as a one-line diagnostic."""


# ---------------------------------------------------------------------------
# manifests

def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def input_digests(*paths) -> dict[str, str]:
    """sha256 of each input file; a corpus directory contributes both of its files."""
    out = {}
    for p in paths:
        p = Path(p)
        files = [p / META_FILE, p / DATA_FILE] if p.is_dir() else [p]
        for f in files:
            out[str(f)] = file_digest(f)
    return out


def manifest_path_for(out: Path) -> Path:
    return out / MANIFEST_NAME if out.is_dir() else out.with_name(out.name + ".manifest.json")


def write_manifest(args: argparse.Namespace, inputs: dict[str, str], outputs: Sequence[Path],
                   target: Path) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose", "argv")}
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config,
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": [str(p) for p in outputs],
    }
    target.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# helpers shared by commands

def train_config(args: argparse.Namespace, lam: float | None = None, seed: int | None = None):
    return TrainConfig(lam=args.lam if lam is None else lam, lr=args.lr, lr_disc=args.lr_disc,
                       epochs=args.epochs, batch_size=args.batch, hidden=args.hidden,
                       seed=args.seed if seed is None else seed)


def load_model_for(corpus, path):
    try:
        return load_checkpoint(path, corpus.vocabulary.digest())
    except CheckpointError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def load_matrices_for(corpus, path):
    matrices = load_matrices(path)
    want, got = corpus.vocabulary.digest(), matrices.digest()
    if want != got:
        raise ConfigurationError(
            f"vocabulary digest mismatch: matrices {got} vs corpus {want} ({path})")
    return matrices


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> list[Path]:
    corpus = load_corpus(args.meta, args.data)
    filtered, stats = filter_unmatched(corpus)
    out = Path(args.out)
    save_corpus(filtered, out)
    stats_path = out / "stats.json"
    dump_json(stats.to_json(), stats_path)
    print(f"original={stats.original} filtered={stats.filtered} retained={stats.retained:.4f}")
    return [out / META_FILE, out / DATA_FILE, stats_path]


def cmd_assoc(args) -> list[Path]:
    corpus = load_corpus(args.corpus)
    matrices = build_matrices(count_cooccurrences(corpus), args.method,
                              class_names=corpus.meta.class_names,
                              lf_names=[lf.name for lf in corpus.meta.lfs])
    out = ensure_parent(Path(args.out))
    save_matrices(matrices, out)
    print(f"{args.method}: {matrices.C.shape[0]} classes x {matrices.L.shape[0]} LFs "
          f"x {len(matrices.features)} features")
    return [out]


def cmd_train(args) -> list[Path]:
    corpus = load_corpus(args.corpus)
    config = train_config(args)
    if args.model == "mv-bow":
        labels = majority_vote_labels(corpus, args.tie, args.seed)
        model = train_bow_softmax(corpus, labels, config)
        keep = labels != ABSTAIN
        X = corpus.presence_matrix()[keep]
        loss = nll(model.logits(X), labels[keep])
        metric = float((model.predict_proba(X).argmax(1) == labels[keep]).mean())
    else:
        model = train_knowman(corpus, config, reversal=not args.no_reversal)
        loss = nll(model.logits(corpus.presence_matrix()), corpus.weak_labels())
        metric = training_accuracy(model, corpus)
    out = ensure_parent(Path(args.out))
    save_checkpoint(model, out)
    print(f"loss={loss:.6f} train_accuracy={metric:.4f}")
    return [out]


def cmd_score(args) -> list[Path]:
    corpus = load_corpus(args.corpus)
    model = load_model_for(corpus, args.model)
    matrices = load_matrices_for(corpus, args.assoc)
    if args.scaled:
        # the scaled variant is defined on NPMI, rebuilt from the corpus counts
        report = xpasc_scaled(corpus, model, count_cooccurrences(corpus), args.gamma)
    else:
        report = xpasc(corpus, model, matrices, args.gamma)
    report.model_id = file_digest(args.model)
    report.seed = model.config.seed if model.config else None
    out = ensure_parent(Path(args.out))
    dump_json(report.to_json(), out)
    print(repr(report.score))
    return [out]


def cmd_sweep(args) -> list[Path]:
    corpus = load_corpus(args.corpus)
    base = train_config(args, lam=0.0, seed=0)
    report = lambda_sweep(corpus, args.lambdas, args.seeds, base, args.assoc_method, args.gamma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, summary_path = out / "sweep.csv", out / "summary.json"
    report.write_csv(csv_path)
    dump_json(report.to_json(), summary_path)
    for lam in report.lambdas:
        mean = report.means[lam]
        print(f"lambda={lam:g} mean_xpasc={'failed' if mean is None else f'{mean:.6f}'}")
    print(f"spearman_rho={report.spearman}")
    if all(c.failed for c in report.cells):
        raise CommandError("every sweep cell failed")
    return [csv_path, summary_path]


def cmd_shift(args) -> list[Path]:
    corpus = load_corpus(args.corpus)
    model_a = load_model_for(corpus, args.model_a)
    model_b = load_model_for(corpus, args.model_b)
    matrices = load_matrices_for(corpus, args.assoc)
    report = shift_analysis(corpus, model_a, model_b, matrices)
    out = ensure_parent(Path(args.out))
    dump_json(report.to_json(), out)
    print(" ".join(f"{k}={v}" for k, v in report.counts.items()))
    return [out]


# ---------------------------------------------------------------------------
# argument parsing

def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def add_train_flags(p: argparse.ArgumentParser, with_lambda: bool = True) -> None:
    d = TrainConfig()
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
        p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--lr-disc", type=float, default=d.lr_disc)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--batch", type=int, default=d.batch_size)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xpasc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="drop unmatched instances and report filter stats")
    p.add_argument("--meta", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("assoc", help="build class and LF association matrices")
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", required=True, choices=[m.value for m in Method])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assoc)

    p = sub.add_parser("train", help="train a majority-vote BoW or a KnowMAN model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, choices=["mv-bow", "knowman"])
    add_train_flags(p)
    p.add_argument("--tie", choices=["random", "abstain"], default="random")
    p.add_argument("--no-reversal", action="store_true",
                   help="cut the discriminator-to-extractor path (diagnostic)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="compute XPASC for a trained model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--assoc", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--scaled", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="train and score a lambda x seed grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lambdas", type=float_list, required=True)
    p.add_argument("--seeds", type=int_list, required=True)
    p.add_argument("--assoc-method", choices=[m.value for m in Method], default="chi2")
    p.add_argument("--gamma", type=float, default=1.0)
    add_train_flags(p, with_lambda=False)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("shift", help="compare top features of two models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--assoc", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift)

    p = sub.add_parser("rerun", help="replay a run from its manifest")
    p.add_argument("manifest")
    return parser


INPUTS = {
    "ingest": ("meta", "data"),
    "assoc": ("corpus",),
    "train": ("corpus",),
    "score": ("corpus", "model", "assoc"),
    "sweep": ("corpus",),
    "shift": ("corpus", "model_a", "model_b", "assoc"),
}


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "rerun":
        raw = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        return run(raw["argv"])
    args.argv = list(argv)
    try:
        inputs = input_digests(*(getattr(args, k) for k in INPUTS[args.command]))
        outputs = args.func(args)
    except (CommandError, CorpusError, ConfigurationError, TrainingError, CheckpointError,
            FileNotFoundError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"xpasc {args.command}: error: {msg}", file=sys.stderr)
        return 1
    write_manifest(args, inputs, outputs, manifest_path_for(Path(args.out)))
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
