"""Command line driver.

Subcommands cover the full pipeline: ``extract`` (audio to feature
tables), ``train`` (fit a learner), ``eval`` (score a test table),
``gaussian`` (resynthesize training sets), ``consistency`` (multi-session
runs) and ``cluster`` (dendrograms with bootstrap support).

Every run can be replayed: outputs depend only on the inputs and the
``--seed`` value, and each artifact gets a manifest recording parameters
and input digests.  Option precedence is command line flag, then config
file entry (``--config``, flat JSON keyed by option name), then the
built-in default.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import wave
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (FrameDataset, default_inventory, label_distribution,
                     load_alignments, load_feature_table, write_feature_table)
from .cluster import (DEFAULT_SCALES, PhoneProfileMatrix, bootstrap_pvalues,
                      ecl_profiles, export_dendrogram, mbl_profiles,
                      ward_cluster)
from .ecl import (ErrorCorrectionClassifier, WeightMatrix)
from .errors import DataError, PhoneLearnError
from .evaluate import (confusion_matrix, export_tidy, predict_records,
                       session_summary, success_rates, write_confusion_csv,
                       write_success_csv)
from .mbl import ExemplarKnnClassifier
from .mfcc import AudioSegment, MfccConfig, extract_labeled_frames
from .regimes import GaussianConfig, SessionConfig, build_session, \
    gaussian_generate, gaussian_scaling_series
from .seeding import derive_seed

ECL_LEARNERS = ("wh", "td")
ALL_LEARNERS = ("wh", "td", "mbl")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, command: str, params: dict,
                    inputs: list[Path]) -> None:
    _write_json(out, {
        "command": command,
        "version": __version__,
        "params": params,
        "inputs": [{"path": str(p), "sha256": _sha256(Path(p))}
                   for p in inputs],
    })


class Options:
    """Option resolution: flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: dict = {}
        config_path = getattr(args, "config", None)
        if config_path:
            with open(config_path, "r", encoding="utf-8") as fh:
                self.config = json.load(fh)
            if not isinstance(self.config, dict):
                raise DataError(f"{config_path}: config must be a JSON object")

    def get(self, name: str, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return self.config[name]
        return default

    def require(self, name: str):
        value = self.get(name)
        if value is None:
            raise DataError(
                f"missing required option --{name.replace('_', '-')}")
        return value

    @property
    def seed(self) -> int:
        return int(self.get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.get("threads", 1))

    @property
    def out_dir(self) -> Path:
        out = Path(self.get("out_dir", "."))
        out.mkdir(parents=True, exist_ok=True)
        return out


def _group_segments_by_word(segments):
    order: dict[str, list] = {}
    for seg in segments:
        order.setdefault(seg.word_id, []).append(seg)
    return order


def cmd_extract(opts: Options) -> int:
    alignments = Path(opts.require("alignments"))
    audio_dir = Path(opts.require("audio_dir"))
    out = Path(opts.get("out") or (opts.out_dir / "features.csv"))
    config = MfccConfig(delta_scope=opts.get("delta_scope", "segment"))

    inventory = default_inventory()
    segments = load_alignments(alignments, inventory)
    by_word = _group_segments_by_word(segments)
    if not by_word:
        print("warning: no aligned segments found", file=sys.stderr)

    frames = []
    failures = 0
    trial = 0
    for word_id, segs in by_word.items():
        wav = audio_dir / f"{word_id}.wav"
        try:
            audio = AudioSegment.from_wav(wav)
            word_frames = extract_labeled_frames(audio, segs, config,
                                                 start_trial=trial)
        except (PhoneLearnError, OSError, EOFError, wave.Error) as exc:
            failures += 1
            print(f"warning: skipping word {word_id!r}: {exc}",
                  file=sys.stderr)
            continue
        frames.extend(word_frames)
        trial += len(word_frames)

    dataset = FrameDataset.from_frames(inventory, frames)
    write_feature_table(dataset, out)
    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "extract",
                    {"delta_scope": config.delta_scope,
                     "n_frames": len(dataset), "n_failed_words": failures},
                    [alignments])
    print(f"extracted {len(dataset)} frames from "
          f"{len(by_word) - failures} words -> {out}")
    return 0


def _fitted_ecl(weights: WeightMatrix, rule: str,
                diversity_mode: str) -> ErrorCorrectionClassifier:
    clf = ErrorCorrectionClassifier(rule=rule,
                                    diversity_mode=diversity_mode,
                                    inventory=weights.inventory)
    clf.inventory_ = weights.inventory
    clf.classes_ = np.asarray(weights.inventory.labels, dtype=object)
    clf.weights_ = weights
    clf.n_features_in_ = weights.n_cues
    return clf


def _prepare_training_data(opts: Options) -> tuple[FrameDataset, str, list[Path]]:
    """Load the feature table; resynthesize it under the gaussian regime."""
    features = Path(opts.require("features"))
    regime = opts.get("regime", "raw")
    if regime not in ("raw", "gaussian"):
        raise DataError(f"unknown regime {regime!r}")
    dataset = load_feature_table(features)
    inputs = [features]
    if regime == "gaussian":
        n_per_phone = int(opts.get("n_per_phone", 100))
        cfg = GaussianConfig(n_per_phone=n_per_phone,
                             seed=derive_seed(opts.seed, "gaussian",
                                              n_per_phone))
        dataset = gaussian_generate(dataset, cfg)
        generated = opts.out_dir / f"gaussian_train_{n_per_phone}.csv"
        write_feature_table(dataset, generated)
        inputs.append(generated)
    return dataset, regime, inputs


def cmd_train(opts: Options) -> int:
    learner = opts.get("learner", "wh")
    if learner not in ALL_LEARNERS:
        raise DataError(f"unknown learner {learner!r}")
    dataset, regime, inputs = _prepare_training_data(opts)

    if learner in ECL_LEARNERS:
        out = Path(opts.get("out")
                   or (opts.out_dir / f"weights_{learner}_{regime}.csv"))
        clf = ErrorCorrectionClassifier(
            rule=learner,
            learning_rate=float(opts.get("learning_rate", 0.0001)),
            discount=float(opts.get("discount", 0.5)),
            chain=opts.get("chain", "word"),
            inventory=dataset.inventory)
        clf.fit(dataset.cues, dataset.phone_labels, word_ids=dataset.word_ids)
        clf.weights_.save_csv(out)
        params = {"learner": learner, "regime": regime,
                  "learning_rate": clf.learning_rate,
                  "discount": clf.discount, "chain": clf.chain,
                  "seed": opts.seed, "n_events": len(dataset)}
    else:
        out = Path(opts.get("out")
                   or (opts.out_dir / f"model_mbl_{regime}.json"))
        data_path = Path(inputs[-1])
        _write_json(out, {
            "kind": "mbl_model",
            "k": int(opts.get("k", 7)),
            "features": str(data_path),
            "sha256": _sha256(data_path),
        })
        params = {"learner": learner, "regime": regime,
                  "k": int(opts.get("k", 7)), "seed": opts.seed,
                  "n_exemplars": len(dataset)}

    _write_manifest(out.with_suffix(out.suffix + ".manifest.json"), "train",
                    params, inputs)
    print(f"trained {learner}/{regime} on {len(dataset)} frames -> {out}")
    return 0


def _load_model(opts: Options, model: Path):
    """Instantiate a fitted classifier from a model artifact."""
    if model.suffix == ".json":
        with open(model, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("kind") != "mbl_model":
            raise DataError(f"{model}: not a memory-based model file")
        data = load_feature_table(payload["features"])
        clf = ExemplarKnnClassifier(k=int(payload["k"]),
                                    inventory=data.inventory)
        clf.fit(data.cues, data.phone_labels)
        return clf, "mbl"
    weights = WeightMatrix.load_csv(model)
    rule = opts.get("learner", "wh")
    if rule not in ECL_LEARNERS:
        rule = "wh"
    return _fitted_ecl(weights, rule,
                       opts.get("diversity_mode", "per_outcome")), rule


def cmd_eval(opts: Options) -> int:
    model = Path(opts.require("model"))
    features = Path(opts.require("features"))
    out_dir = opts.out_dir
    regime = opts.get("regime", "raw")

    clf, default_learner = _load_model(opts, model)
    learner = opts.get("learner", default_learner)
    test = load_feature_table(features)
    if len(test) == 0:
        raise DataError(f"{features}: test table has no frames")
    if clf.inventory_ != test.inventory:
        raise DataError(
            "model and test set use different phone inventories")

    records = predict_records(clf, test, learner=learner, regime=regime)
    table = success_rates(records, test.inventory,
                          label_distribution(test) * 100.0)
    counts, normalized = confusion_matrix(records, test.inventory)

    export_tidy(records, out_dir / "results_tidy.csv")
    write_success_csv(table, out_dir / "success.csv")
    write_confusion_csv(counts, test.inventory,
                        out_dir / "confusion_counts.csv")
    write_confusion_csv(normalized, test.inventory,
                        out_dir / "confusion_rows.csv")
    outputs = ["results_tidy.csv", "success.csv", "confusion_counts.csv",
               "confusion_rows.csv"]

    if isinstance(clf, ExemplarKnnClassifier):
        shares = clf.vote_share_matrix(test.cues)
        try:
            profiles = mbl_profiles(test.phone_labels, shares, test.inventory)
            write_profiles_csv(profiles, out_dir / "mbl_profiles.csv")
            outputs.append("mbl_profiles.csv")
        except DataError:
            pass  # some phones missing from the test set: no profile table

    _write_manifest(out_dir / "eval.manifest.json", "eval",
                    {"learner": learner, "regime": regime,
                     "seed": opts.seed, "n_records": len(records),
                     "overall_success_pct": table.overall,
                     "outputs": outputs},
                    [model, features])
    print(f"evaluated {len(records)} frames: overall success "
          f"{table.overall:.2f}% -> {out_dir}")
    return 0


def cmd_gaussian(opts: Options) -> int:
    features = Path(opts.require("features"))
    sizes = opts.get("sizes", "100")
    if isinstance(sizes, str):
        sizes = [int(s) for s in sizes.split(",") if s]
    dataset = load_feature_table(features)
    series = gaussian_scaling_series(dataset, sizes, seed=opts.seed)
    outputs = []
    for size, generated in zip(sizes, series):
        out = opts.out_dir / f"gaussian_{size}.csv"
        write_feature_table(generated, out)
        outputs.append(str(out))
        print(f"gaussian n_per_phone={size}: {len(generated)} frames -> {out}")
    _write_manifest(opts.out_dir / "gaussian.manifest.json", "gaussian",
                    {"sizes": list(sizes), "seed": opts.seed,
                     "outputs": outputs},
                    [features])
    return 0


def _session_config(opts: Options) -> SessionConfig:
    return SessionConfig(
        n_sessions=int(opts.get("sessions", 5)),
        vocab_size=int(opts.get("vocab_size", 300)),
        replications=int(opts.get("replications", 1000)),
        noise_fraction=float(opts.get("noise_fraction", 0.5)),
        noise_sd_scale=float(opts.get("noise_sd_scale", 0.05)),
        test_words=int(opts.get("test_words", 200)),
        replicate_order=opts.get("replicate_order", "tiled"),
        seed=opts.seed,
    )


def _session_learner(name: str, opts: Options, inventory):
    if name in ECL_LEARNERS:
        return ErrorCorrectionClassifier(
            rule=name,
            learning_rate=float(opts.get("learning_rate", 0.0001)),
            discount=float(opts.get("discount", 0.5)),
            chain=opts.get("chain", "word"),
            inventory=inventory)
    return ExemplarKnnClassifier(k=int(opts.get("k", 7)),
                                 inventory=inventory)


def cmd_consistency(opts: Options) -> int:
    features = Path(opts.require("features"))
    learners = opts.get("learners", "wh,td,mbl")
    if isinstance(learners, str):
        learners = [s for s in learners.split(",") if s]
    for name in learners:
        if name not in ALL_LEARNERS:
            raise DataError(f"unknown learner {name!r}")
    corpus = load_feature_table(features)
    config = _session_config(opts)
    out_dir = opts.out_dir

    all_records = []
    tables: dict[str, list] = {name: [] for name in learners}
    for s in range(config.n_sessions):
        session = build_session(corpus, config, s)
        _write_json(out_dir / f"session_{s}.manifest.json", {
            "session": s,
            "seed": config.seed,
            "vocabulary": sorted(session.vocabulary),
            "known_words": sorted(session.known_words),
            "new_words": sorted(session.new_words),
            "n_train_frames": len(session.train),
            "n_test_frames": len(session.test),
        })
        for name in learners:
            clf = _session_learner(name, opts, corpus.inventory)
            if name in ECL_LEARNERS:
                clf.fit(session.train.cues, session.train.phone_labels,
                        word_ids=session.train.word_ids)
            else:
                clf.fit(session.train.cues, session.train.phone_labels)
            records = predict_records(clf, session.test, learner=name,
                                      regime="session", session=s,
                                      known_words=session.known_words)
            all_records.extend(records)
            tables[name].append(success_rates(records, corpus.inventory))
        print(f"session {s}: trained {','.join(learners)} on "
              f"{len(session.train)} frames, tested {len(session.test)}")

    export_tidy(all_records, out_dir / "consistency_tidy.csv")
    export_tidy([r for r in all_records if r.known],
                out_dir / "consistency_tidy_known.csv")
    export_tidy([r for r in all_records if r.known is False],
                out_dir / "consistency_tidy_new.csv")

    for name in learners:
        summary = session_summary(tables[name])
        with open(out_dir / f"consistency_mad_{name}.csv", "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phone", "mad"])
            for lab, value in zip(summary.labels, summary.per_phone_mad):
                writer.writerow([lab, "%.17g" % value])
        with open(out_dir / f"consistency_sessions_{name}.csv", "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["session", "median_success_pct", "flagged"])
            for s in range(config.n_sessions):
                writer.writerow([s, "%.17g" % summary.session_medians[s],
                                 int(s in summary.flagged_sessions)])

    _write_manifest(out_dir / "consistency.manifest.json", "consistency",
                    {"learners": list(learners), "seed": config.seed,
                     "sessions": config.n_sessions,
                     "vocab_size": config.vocab_size,
                     "replications": config.replications,
                     "noise_fraction": config.noise_fraction,
                     "noise_sd_scale": config.noise_sd_scale,
                     "test_words": config.test_words,
                     "replicate_order": config.replicate_order},
                    [features])
    print(f"consistency run complete -> {out_dir}")
    return 0


def write_profiles_csv(profiles: PhoneProfileMatrix, path) -> None:
    """Write a profile matrix: phone label plus feature columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phone"]
                        + [f"f_{i:02d}" for i in
                           range(profiles.features.shape[1])])
        for lab, row in zip(profiles.labels, profiles.features):
            writer.writerow([lab] + ["%.17g" % v for v in row])


def load_profiles_csv(path, source: str = "profile") -> PhoneProfileMatrix:
    labels = []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "phone":
            raise DataError(f"{path}: not a profile table")
        for row in reader:
            labels.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return PhoneProfileMatrix(labels=tuple(labels),
                              features=np.asarray(rows), source=source)


def cmd_cluster(opts: Options) -> int:
    weights_path = opts.get("weights")
    profiles_path = opts.get("profiles")
    if (weights_path is None) == (profiles_path is None):
        raise DataError("cluster needs exactly one of weights/profiles")
    if weights_path:
        weights = WeightMatrix.load_csv(weights_path)
        source = opts.get("source", "WH")
        profiles = ecl_profiles(weights, source=source)
        input_path = Path(weights_path)
    else:
        source = opts.get("source", "MBL")
        profiles = load_profiles_csv(profiles_path, source=source)
        input_path = Path(profiles_path)

    n_boot = int(opts.get("n_boot", 1000))
    scales = opts.get("scales")
    if scales is None:
        scales = DEFAULT_SCALES
    elif isinstance(scales, str):
        scales = tuple(float(s) for s in scales.split(",") if s)

    dendrogram = ward_cluster(profiles)
    dendrogram = bootstrap_pvalues(profiles, dendrogram, n_boot=n_boot,
                                   scales=scales, seed=opts.seed,
                                   workers=opts.threads)
    out_dir = opts.out_dir
    for fmt, name in (("newick", "dendrogram.newick"),
                      ("dot", "dendrogram.dot"),
                      ("json", "dendrogram.json")):
        export_dendrogram(dendrogram, fmt, out_dir / name)
    _write_manifest(out_dir / "cluster.manifest.json", "cluster",
                    {"source": source, "n_boot": n_boot,
                     "scales": list(scales), "seed": opts.seed},
                    [input_path])
    print(f"clustered {len(profiles.labels)} phones "
          f"({len(dendrogram.merges)} merges) -> {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonelearn",
        description="Phone category learning simulations over MFCC frames")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--seed", type=int, help="master random seed")
    common.add_argument("--out-dir", dest="out_dir", help="output directory")
    common.add_argument("--threads", type=int,
                        help="worker processes for the bootstrap")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common],
                       help="turn aligned audio into a feature table")
    p.add_argument("--alignments")
    p.add_argument("--audio-dir", dest="audio_dir")
    p.add_argument("--out")
    p.add_argument("--delta-scope", dest="delta_scope",
                   choices=["segment", "word"])
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="fit a learner")
    p.add_argument("--features")
    p.add_argument("--learner", choices=list(ALL_LEARNERS))
    p.add_argument("--regime", choices=["raw", "gaussian"])
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--discount", type=float)
    p.add_argument("--chain", choices=["word", "stream"])
    p.add_argument("--k", type=int)
    p.add_argument("--n-per-phone", dest="n_per_phone", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="score a test feature table")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--learner", choices=list(ALL_LEARNERS))
    p.add_argument("--regime")
    p.add_argument("--diversity-mode", dest="diversity_mode",
                   choices=["per_outcome", "shared_scalar"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gaussian", parents=[common],
                       help="resynthesize Gaussian training sets")
    p.add_argument("--features")
    p.add_argument("--sizes", help="comma-separated per-phone sample sizes")
    p.set_defaults(func=cmd_gaussian)

    p = sub.add_parser("consistency", parents=[common],
                       help="run replicated learning sessions")
    p.add_argument("--features")
    p.add_argument("--learners", help="comma-separated subset of wh,td,mbl")
    p.add_argument("--sessions", type=int)
    p.add_argument("--vocab-size", dest="vocab_size", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--noise-fraction", dest="noise_fraction", type=float)
    p.add_argument("--noise-sd-scale", dest="noise_sd_scale", type=float)
    p.add_argument("--test-words", dest="test_words", type=int)
    p.add_argument("--replicate-order", dest="replicate_order",
                   choices=["tiled", "shuffled"])
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--discount", type=float)
    p.add_argument("--chain", choices=["word", "stream"])
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("cluster", parents=[common],
                       help="cluster phone profiles with bootstrap support")
    p.add_argument("--weights", help="weight CSV from an ECL learner")
    p.add_argument("--profiles", help="profile CSV (e.g. from eval)")
    p.add_argument("--source")
    p.add_argument("--n-boot", dest="n_boot", type=int)
    p.add_argument("--scales", help="comma-separated resampling scales")
    p.set_defaults(func=cmd_cluster)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = Options(args)
        return args.func(opts)
    except PhoneLearnError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
