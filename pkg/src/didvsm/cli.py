"""Command line driver: one subcommand per pipeline stage plus ``run-pipeline``.

Stages communicate through files in the output directory: fitted models as
MVDM containers and matrices as MVF1 files. ``run-pipeline`` simply runs the
stages in order against that directory, so re-running any single stage from
its serialized inputs reproduces the chained result.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import acoustic, classifier, container, corpus, discriminant, evaluation, fusion, phonotactic
from .config import PipelineConfig, dump_config, load_config
from .corpus import Dataset, SynthConfig
from .errors import DataError, DidError, MissingStageInput
from .systems import SYSTEM_NAMES

log = logging.getLogger("didvsm")

# artifact name -> (file name, producing subcommand)
ARTIFACTS = {
    "vocab": ("vocab.mvdm", "build-vocab"),
    "projector": ("projector.mvdm", "featurize-phono"),
    "xp_train": ("xp_train.mvf", "featurize-phono"),
    "xp_test": ("xp_test.mvf", "featurize-phono"),
    "ubm": ("ubm.mvdm", "train-ubm"),
    "tv": ("tv.mvdm", "train-tv"),
    "xa_train": ("xa_train.mvf", "extract-ivectors"),
    "xa_test": ("xa_test.mvf", "extract-ivectors"),
    "cca": ("cca.mvdm", "fit-cca"),
    "zc_train": ("zc_train.mvf", "fit-cca"),
    "zc_test": ("zc_test.mvf", "fit-cca"),
    "results": ("results.json", "evaluate"),
    "report": ("report.txt", "evaluate"),
}
for _space in ("zc", "xa"):
    ARTIFACTS[f"lda_{_space}"] = (f"lda_{_space}.mvdm", "fit-lda-wccn")
    ARTIFACTS[f"wccn_{_space}"] = (f"wccn_{_space}.mvdm", "fit-lda-wccn")
    ARTIFACTS[f"{_space}_lw_train"] = (f"{_space}_lw_train.mvf", "fit-lda-wccn")
    ARTIFACTS[f"{_space}_lw_test"] = (f"{_space}_lw_test.mvf", "fit-lda-wccn")

# classifier systems: slug -> (report name, feature matrices concatenated)
CLF_SYSTEMS = {
    "xp": (SYSTEM_NAMES[0], ("xp",)),
    "xa": (SYSTEM_NAMES[1], ("xa",)),
    "zc": (SYSTEM_NAMES[2], ("zc",)),
    "zc_lw": (SYSTEM_NAMES[3], ("zc_lw",)),
    "xa_lw": (SYSTEM_NAMES[4], ("xa_lw",)),
    "ab": (SYSTEM_NAMES[5], ("zc_lw", "xa_lw")),
}
SCORE_SYSTEM = SYSTEM_NAMES[6]
PRIMARY = {"feature": SYSTEM_NAMES[2], "concat": SYSTEM_NAMES[5], "score": SCORE_SYSTEM}
for _slug in CLF_SYSTEMS:
    ARTIFACTS[f"softmax_{_slug}"] = (f"softmax_{_slug}.mvdm", "train-clf")
    ARTIFACTS[f"proba_{_slug}"] = (f"proba_{_slug}.mvf", "train-clf")


class StageContext:
    """Resolves stage inputs/outputs and checks artifact provenance."""

    def __init__(self, cfg: PipelineConfig, overrides=None, force: bool = False):
        self.cfg = cfg
        self.out = Path(cfg.path(cfg.run.out_dir))
        self.overrides = dict(overrides or {})
        self.force = force
        self.config_hash = cfg.hash()
        self._corpus = None

    def input(self, name: str) -> Path:
        fname, producer = ARTIFACTS[name]
        path = Path(self.overrides[name]) if name in self.overrides else self.out / fname
        if not path.exists():
            raise MissingStageInput(name, path, producer)
        return path

    def output(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / ARTIFACTS[name][0]

    def meta(self, seed=None) -> dict:
        return {"config_hash": self.config_hash, "seed": self.cfg.run.seed if seed is None else seed}

    def save_model(self, name: str, model, seed=None) -> None:
        container.save(self.output(name), container.encode(model, self.meta(seed)))

    def load_model(self, name: str, stage: str):
        path = self.input(name)
        c = container.load(path, stage)
        found = c.meta.get("config_hash")
        if found != self.config_hash and not self.force:
            raise DataError(f"{path} was produced with config hash {str(found)[:12]}, "
                            f"current is {self.config_hash[:12]}; rerun the stage or pass --force")
        return container.decode(c)

    def save_matrix(self, name: str, values) -> None:
        corpus.save_frames(self.output(name), values)

    def load_matrix(self, name: str) -> np.ndarray:
        return corpus.load_frames(self.input(name)).astype(np.float64)

    def datasets(self):
        """(train, test) datasets: two manifests, or one manifest split by seed."""
        if self._corpus is None:
            c = self.cfg.corpus
            labels = c.label_set
            train = corpus.load_manifest(self.cfg.path(c.train_manifest), labels)
            if c.test_manifest:
                test = corpus.load_manifest(self.cfg.path(c.test_manifest), labels)
            else:
                train, test = corpus.stratified_split(train, c.test_fraction, self.cfg.seed("split"))
            if len(train) == 0 or len(test) == 0:
                raise DataError("train and test sets must both be non-empty")
            self._corpus = (train, test)
        return self._corpus

    def labels(self, which: str):
        train, test = self.datasets()
        d = train if which == "train" else test
        missing = [r.id for r in d.records if r.label is None]
        if missing:
            raise DataError(f"{which} records without labels: {missing[:5]}")
        return [r.label for r in d.records]


def stage_build_vocab(ctx: StageContext) -> None:
    train, _ = ctx.datasets()
    p = ctx.cfg.phonotactic
    vocab = phonotactic.build_vocab(train, p.orders, p.d_cap)
    ctx.save_model("vocab", vocab)
    log.info("vocabulary: %d terms", vocab.size)


def stage_featurize_phono(ctx: StageContext) -> None:
    train, test = ctx.datasets()
    p = ctx.cfg.phonotactic
    vocab = ctx.load_model("vocab", "vocab")
    x_train = phonotactic.term_doc_matrix(train, vocab)
    proj = phonotactic.fit_projector(x_train, p.k, p.weighting, p.center)
    ctx.save_model("projector", proj)
    ctx.save_matrix("xp_train", phonotactic.project(x_train, proj))
    ctx.save_matrix("xp_test", phonotactic.project(phonotactic.term_doc_matrix(test, vocab), proj))


def _frames(d: Dataset):
    out = []
    for rec in d.records:
        if rec.frames_ref is None:
            raise DataError(f"record {rec.id!r} has no frames")
        try:
            out.append(corpus.load_frames(rec.frames_ref))
        except FileNotFoundError:
            raise DataError(f"frames file for {rec.id!r} not found: {rec.frames_ref}") from None
    return out


def stage_train_ubm(ctx: StageContext) -> None:
    train, _ = ctx.datasets()
    a = ctx.cfg.acoustic
    seed = ctx.cfg.seed("ubm")
    ubm = acoustic.train_ubm(_frames(train), a.g, a.ubm_iters, seed, a.var_floor)
    ctx.save_model("ubm", ubm, seed)


def stage_train_tv(ctx: StageContext) -> None:
    train, _ = ctx.datasets()
    a = ctx.cfg.acoustic
    ubm = ctx.load_model("ubm", "ubm")
    stats = [acoustic.accumulate_stats(f, ubm) for f in _frames(train)]
    seed = ctx.cfg.seed("tv")
    tv = acoustic.train_tv(stats, ubm, a.r, a.tv_iters, seed, min_divergence=a.min_divergence)
    ctx.save_model("tv", tv, seed)


def stage_extract_ivectors(ctx: StageContext) -> None:
    train, test = ctx.datasets()
    ubm = ctx.load_model("ubm", "ubm")
    tv = ctx.load_model("tv", "tv")
    norm = ctx.cfg.acoustic.length_norm
    ctx.save_matrix("xa_train", acoustic.build_acoustic_vsm(train, ubm, tv, norm))
    ctx.save_matrix("xa_test", acoustic.build_acoustic_vsm(test, ubm, tv, norm))


def stage_fit_cca(ctx: StageContext) -> None:
    xp_tr, xa_tr = ctx.load_matrix("xp_train"), ctx.load_matrix("xa_train")
    xp_te, xa_te = ctx.load_matrix("xp_test"), ctx.load_matrix("xa_test")
    model = fusion.fit_cca(xp_tr, xa_tr, ctx.cfg.cca.c, ctx.cfg.cca.ridge)
    ctx.save_model("cca", model)
    ctx.save_matrix("zc_train", fusion.transform(model, xp_tr, xa_tr))
    ctx.save_matrix("zc_test", fusion.transform(model, xp_te, xa_te))
    log.info("canonical correlations: %s", np.array2string(model.correlations[:5], precision=3))


def stage_fit_lda_wccn(ctx: StageContext) -> None:
    d = ctx.cfg.discriminant
    y = ctx.labels("train")
    m = d.m or None
    for space in ("zc", "xa"):
        x_tr, x_te = ctx.load_matrix(f"{space}_train"), ctx.load_matrix(f"{space}_test")
        lda, wccn = discriminant.fit_lda_wccn(x_tr, y, m, d.lda_ridge, d.wccn_ridge, d.order)
        ctx.save_model(f"lda_{space}", lda)
        ctx.save_model(f"wccn_{space}", wccn)
        ctx.save_matrix(f"{space}_lw_train", discriminant.apply_lda_wccn(lda, wccn, x_tr, d.order))
        ctx.save_matrix(f"{space}_lw_test", discriminant.apply_lda_wccn(lda, wccn, x_te, d.order))


def stage_train_clf(ctx: StageContext) -> None:
    y = ctx.labels("train")
    cfg = ctx.cfg.train_config()
    labels = ctx.cfg.corpus.label_set
    for slug, (name, parts) in CLF_SYSTEMS.items():
        x_tr = np.hstack([ctx.load_matrix(f"{p}_train") for p in parts])
        x_te = np.hstack([ctx.load_matrix(f"{p}_test") for p in parts])
        model = classifier.train_softmax(x_tr, y, cfg, labels)
        ctx.save_model(f"softmax_{slug}", model, cfg.seed)
        ctx.save_matrix(f"proba_{slug}", classifier.predict_proba(model, x_te))
        log.info("trained %s on %d dims", name, x_tr.shape[1])


def _write_results(ctx: StageContext, rows, labels, primary: str) -> None:
    """rows: list of (name, dim, ConfusionMatrix)."""
    scored = [(name, evaluation.metrics(cm), dim, cm) for name, dim, cm in rows]
    best = max(range(len(scored)), key=lambda i: (scored[i][1].accuracy, -i))
    results = {
        "config_hash": ctx.config_hash,
        "labels": list(labels),
        "best": scored[best][0],
        "primary": primary,
        "systems": [
            {"system": name, "dim": dim, "acc": m.accuracy, "prc": m.macro_precision, "rcl": m.macro_recall,
             "per_class": [list(pc) for pc in m.per_class], "confusion": cm.counts.tolist()}
            for name, m, dim, cm in scored
        ],
    }
    with open(ctx.output("results"), "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    text = evaluation.report([(name, m, dim) for name, m, dim, _ in scored])
    text += f"\nConfusion matrix ({scored[best][0]}; rows = truth, columns = prediction)\n"
    text += evaluation.format_confusion(scored[best][3])
    with open(ctx.output("report"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")


def load_confusion_fixture(path) -> evaluation.ConfusionMatrix:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return evaluation.ConfusionMatrix(obj["labels"], obj["counts"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a confusion fixture ({exc})") from None


def stage_evaluate(ctx: StageContext) -> None:
    labels = ctx.cfg.corpus.label_set
    if "confusion" in ctx.overrides:
        cm = load_confusion_fixture(ctx.overrides["confusion"])
        _write_results(ctx, [("fixture", 0, cm)], cm.labels, "fixture")
        return
    truth = ctx.labels("test")
    rows = []
    probas = {}
    for slug, (name, _) in CLF_SYSTEMS.items():
        model = ctx.load_model(f"softmax_{slug}", "softmax")
        p = ctx.load_matrix(f"proba_{slug}")
        if p.shape != (len(truth), len(labels)):
            raise DataError(f"proba_{slug} has shape {p.shape}, expected {(len(truth), len(labels))}")
        probas[slug] = p
        pred = [labels[i] for i in classifier.predict_index(p)]
        rows.append((name, model.w.shape[0], evaluation.confusion(truth, pred, labels)))
    f = ctx.cfg.fusion
    fused = classifier.score_fuse([probas["xp"], probas["xa"]], f.score_weights, f.score_space)
    pred = [labels[i] for i in classifier.predict_index(fused)]
    rows.append((SCORE_SYSTEM, rows[0][1] + rows[1][1], evaluation.confusion(truth, pred, labels)))
    _write_results(ctx, rows, labels, PRIMARY[f.mode])


STAGES = {
    "build-vocab": stage_build_vocab,
    "featurize-phono": stage_featurize_phono,
    "train-ubm": stage_train_ubm,
    "train-tv": stage_train_tv,
    "extract-ivectors": stage_extract_ivectors,
    "fit-cca": stage_fit_cca,
    "fit-lda-wccn": stage_fit_lda_wccn,
    "train-clf": stage_train_clf,
    "evaluate": stage_evaluate,
}


def run_pipeline(ctx: StageContext) -> None:
    for name, fn in STAGES.items():
        log.info("stage %s", name)
        fn(ctx)


def synth_data(out: Path, seed: int, n_per_class: int = 100, classes: int = 5, shared_dim: int = 4,
               noise_p: float = 1.5, noise_a: float = 1.5, test_fraction: float = 0.2) -> Path:
    """Write a synthetic corpus (manifests, frame files) and a desk-scale config."""
    out.mkdir(parents=True, exist_ok=True)
    d, x_p, x_a = corpus.synth_two_view(n_per_class, classes, shared_dim, noise_p, noise_a, seed,
                                        SynthConfig(class_sep=0.8, private_sep=1.5))
    d, frames = corpus.synth_corpus(d, x_p, x_a, seed + 1)
    (out / "frames").mkdir(exist_ok=True)
    records = []
    for rec, f in zip(d.records, frames):
        ref = out / "frames" / f"{rec.id}.mvf"
        corpus.save_frames(ref, f)
        records.append(corpus.UtteranceRecord(rec.id, rec.label, rec.phones, str(ref)))
    d = Dataset(records, d.label_set)
    train, test = corpus.stratified_split(d, test_fraction, seed)
    corpus.save_manifest(train, out / "train.jsonl")
    corpus.save_manifest(test, out / "test.jsonl")
    corpus.save_frames(out / "xp_raw.mvf", x_p)
    corpus.save_frames(out / "xa_raw.mvf", x_a)
    cfg = desk_config(d.label_set, seed)
    path = out / "config.toml"
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path


def desk_config(label_set, seed: int) -> PipelineConfig:
    from .config import from_dict

    return from_dict({
        "corpus": {"train_manifest": "train.jsonl", "test_manifest": "test.jsonl", "label_set": list(label_set)},
        "phonotactic": {"orders": [2, 3], "d_cap": 1000, "k": 20},
        "acoustic": {"g": 8, "r": 10, "ubm_iters": 10, "tv_iters": 5},
        "cca": {"c": 8},
        "run": {"seed": seed, "out_dir": "run"},
    })


@contextmanager
def out_dir_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".didvsm.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(f"{out} is locked by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _stage_input(text: str):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError("expected NAME=PATH")
    return name, path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="didvsm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in [*STAGES, "run-pipeline"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline TOML config")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override run.out_dir")
        p.add_argument("--stage-input", action="append", type=_stage_input, default=[], metavar="NAME=PATH",
                       help="use PATH for the named stage input (repeatable)")
        p.add_argument("--force", action="store_true", help="accept artifacts from a different config")
    p = sub.add_parser("synth-data", help="write a synthetic two-view corpus and matching config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--shared-dim", type=int, default=4)
    p.add_argument("--noise-p", type=float, default=1.5)
    p.add_argument("--noise-a", type=float, default=1.5)
    p.add_argument("--test-fraction", type=float, default=0.2)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth-data":
            path = synth_data(Path(args.out), args.seed, args.n_per_class, args.classes, args.shared_dim,
                              args.noise_p, args.noise_a, args.test_fraction)
            print(path)
            return 0
        cfg = load_config(args.config).with_overrides(args.seed, args.out)
        ctx = StageContext(cfg, dict(args.stage_input), args.force)
        with out_dir_lock(ctx.out):
            if args.command == "run-pipeline":
                run_pipeline(ctx)
            else:
                STAGES[args.command](ctx)
        return 0
    except DidError as exc:
        print(f"didvsm: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
